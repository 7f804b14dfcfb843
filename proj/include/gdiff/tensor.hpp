#pragma once

// Dense row-major tensors with reverse-mode autodiff on an explicit tape.
// Ops never mutate their inputs; every op that touches a tracked tensor
// records a VJP closure on the thread's active tape. Reductions run in a
// fixed sequential order so repeated runs are bit-identical. matmul/linear
// call into BLAS; everything else is hand-rolled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gdiff/common.hpp"
#include "gdiff/rng.hpp"

namespace gdiff {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

[[noreturn]] inline void shape_fail(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

namespace detail {
// gemm backend, row-major. Implemented in src/blas_gemm.cpp over OpenBLAS.
void gemm_f64(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
              std::int64_t lda, const double* b, std::int64_t ldb, double beta, double* c,
              std::int64_t ldc);
void gemm_f32(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
              std::int64_t lda, const float* b, std::int64_t ldb, float beta, float* c,
              std::int64_t ldc);

template <class T>
inline void gemm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
                 std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c, std::int64_t ldc);
template <>
inline void gemm<double>(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k,
                         const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
                         double beta, double* c, std::int64_t ldc) {
  gemm_f64(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}
template <>
inline void gemm<float>(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k,
                        const float* a, std::int64_t lda, const float* b, std::int64_t ldb,
                        float beta, float* c, std::int64_t ldc) {
  gemm_f32(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}
}  // namespace detail

template <class T>
struct TensorDataT {
  Shape shape;
  std::vector<T> v;
  bool requires_grad = false;
};

template <class T>
class TapeT;

template <class T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape s, bool requires_grad = false) {
    auto d = std::make_shared<TensorDataT<T>>();
    d->v.assign(std::size_t(numel(s)), T(0));
    d->shape = std::move(s);
    d->requires_grad = requires_grad;
    TensorT t;
    t.d_ = std::move(d);
    return t;
  }

  static TensorT full(Shape s, T value) {
    TensorT t = zeros(std::move(s));
    std::fill(t.d_->v.begin(), t.d_->v.end(), value);
    return t;
  }

  static TensorT scalar(T value) { return full(Shape{}, value); }

  static TensorT from(Shape s, std::vector<T> vals, bool requires_grad = false) {
    if (std::int64_t(vals.size()) != numel(s))
      shape_fail("Tensor::from", "value count " + std::to_string(vals.size()) +
                                     " does not match shape " + shape_str(s));
    auto d = std::make_shared<TensorDataT<T>>();
    d->shape = std::move(s);
    d->v = std::move(vals);
    d->requires_grad = requires_grad;
    TensorT t;
    t.d_ = std::move(d);
    return t;
  }

  static TensorT randn(Shape s, Rng& rng, T stddev = T(1), bool requires_grad = false) {
    TensorT t = zeros(std::move(s), requires_grad);
    for (auto& x : t.d_->v) x = T(rng.normal()) * stddev;
    return t;
  }

  static TensorT rand_uniform(Shape s, Rng& rng, T lo, T hi, bool requires_grad = false) {
    TensorT t = zeros(std::move(s), requires_grad);
    for (auto& x : t.d_->v) x = T(rng.uniform(double(lo), double(hi)));
    return t;
  }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return int(d_->shape.size()); }
  std::int64_t dim(int i) const { return d_->shape[std::size_t(i)]; }
  std::int64_t size() const { return std::int64_t(d_->v.size()); }
  const T* data() const { return d_->v.data(); }
  const std::vector<T>& values() const { return d_->v; }

  // Raw write access, for leaf setup only (parameter init, checkpoint load,
  // state buffers). Ops never call this on their inputs.
  T* mutable_data() { return d_->v.data(); }
  std::vector<T>& mutable_values() { return d_->v; }

  bool requires_grad() const { return d_ && d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  T item() const {
    if (size() != 1) shape_fail("Tensor::item", "tensor has " + std::to_string(size()) + " values");
    return d_->v[0];
  }

  const TensorDataT<T>* key() const { return d_.get(); }
  std::shared_ptr<TensorDataT<T>> handle() const { return d_; }

 private:
  std::shared_ptr<TensorDataT<T>> d_;
};

// ---------------------------------------------------------------------------
// tape

template <class T>
class TapeT {
 public:
  // Registers a tensor as a tape node; idempotent per tensor.
  int node_id(const TensorT<T>& t) {
    auto it = ids_.find(t.key());
    if (it != ids_.end()) return it->second;
    int id = int(sizes_.size());
    ids_.emplace(t.key(), id);
    sizes_.push_back(t.size());
    keep_alive_.push_back(t.handle());
    return id;
  }

  int lookup(const TensorT<T>& t) const {
    auto it = ids_.find(t.key());
    return it == ids_.end() ? -1 : it->second;
  }

  // vjp gets called with this tape; it reads grad(out_id) and accumulates
  // into grad buffers of its inputs.
  void record(std::function<void(TapeT<T>&)> vjp) { nodes_.push_back(std::move(vjp)); }

  // Lazily sized accumulation buffer for node `id`.
  std::vector<T>& grad_buf(int id) {
    if (grads_.size() < sizes_.size()) grads_.resize(sizes_.size());
    auto& g = grads_[std::size_t(id)];
    if (g.empty() && sizes_[std::size_t(id)] > 0) g.assign(std::size_t(sizes_[std::size_t(id)]), T(0));
    return g;
  }

  // Null when the node never received a gradient.
  const std::vector<T>* grad_of(int id) const {
    if (id < 0 || std::size_t(id) >= grads_.size()) return nullptr;
    const auto& g = grads_[std::size_t(id)];
    return g.empty() ? nullptr : &g;
  }

  void backward(const TensorT<T>& loss) {
    if (loss.size() != 1) shape_fail("Tape::backward", "loss must be scalar, got " + shape_str(loss.shape()));
    int lid = lookup(loss);
    if (lid < 0) shape_fail("Tape::backward", "loss is not on this tape");
    grads_.assign(sizes_.size(), {});
    grad_buf(lid)[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(*this);
    nodes_.clear();  // tape is consumed; gradients stay readable
  }

  // Gradient for a tensor that participated in the recorded graph.
  const std::vector<T>* grad(const TensorT<T>& t) const { return grad_of(lookup(t)); }

  void clear() {
    nodes_.clear();
    ids_.clear();
    sizes_.clear();
    grads_.clear();
    keep_alive_.clear();
  }

  std::size_t num_nodes() const { return sizes_.size(); }

 private:
  std::vector<std::function<void(TapeT<T>&)>> nodes_;
  std::unordered_map<const TensorDataT<T>*, int> ids_;
  std::vector<std::int64_t> sizes_;
  std::vector<std::vector<T>> grads_;
  std::vector<std::shared_ptr<TensorDataT<T>>> keep_alive_;
};

namespace detail {
template <class T>
inline TapeT<T>*& tape_slot() {
  thread_local TapeT<T>* slot = nullptr;
  return slot;
}
}  // namespace detail

template <class T>
inline TapeT<T>* active_tape() {
  return detail::tape_slot<T>();
}

// RAII: activates a tape on this thread for the scope's lifetime.
template <class T>
class TapeScopeT {
 public:
  explicit TapeScopeT(TapeT<T>& tape) : prev_(detail::tape_slot<T>()) { detail::tape_slot<T>() = &tape; }
  ~TapeScopeT() { detail::tape_slot<T>() = prev_; }
  TapeScopeT(const TapeScopeT&) = delete;
  TapeScopeT& operator=(const TapeScopeT&) = delete;

 private:
  TapeT<T>* prev_;
};

// RAII: suspends recording (used by samplers and finite-difference probes).
template <class T>
class NoTapeScopeT {
 public:
  NoTapeScopeT() : prev_(detail::tape_slot<T>()) { detail::tape_slot<T>() = nullptr; }
  ~NoTapeScopeT() { detail::tape_slot<T>() = prev_; }
  NoTapeScopeT(const NoTapeScopeT&) = delete;
  NoTapeScopeT& operator=(const NoTapeScopeT&) = delete;

 private:
  TapeT<T>* prev_;
};

// ---------------------------------------------------------------------------
// broadcasting helpers

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  std::size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
    std::int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1)
      shape_fail(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

namespace detail {

// Row-major strides; broadcast dims get stride 0.
inline std::vector<std::int64_t> bcast_strides(const Shape& shape, const Shape& out) {
  std::size_t r = out.size(), ri = shape.size();
  std::vector<std::int64_t> st(r, 0);
  std::int64_t acc = 1;
  for (std::size_t i = ri; i-- > 0;) {
    std::size_t o = i + (r - ri);
    st[o] = (shape[i] == 1 && out[o] != 1) ? 0 : acc;
    acc *= shape[i];
  }
  return st;
}

// Odometer walk over `out`, calling f(offset_a, offset_b) in row-major order.
template <class F>
inline void bcast_walk2(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, F&& f) {
  std::size_t r = out.size();
  std::int64_t total = numel(out);
  if (total == 0) return;
  if (r == 0) {
    f(0, 0);
    return;
  }
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t offa = 0, offb = 0;
  for (std::int64_t lin = 0;; ++lin) {
    f(offa, offb);
    if (lin + 1 == total) break;
    for (std::size_t i = r; i-- > 0;) {
      ++idx[i];
      offa += sa[i];
      offb += sb[i];
      if (idx[i] < out[i]) break;
      offa -= sa[i] * out[i];
      offb -= sb[i] * out[i];
      idx[i] = 0;
    }
  }
}

// True when `s` equals the trailing dims of `out` (so index = lin % numel(s)).
inline bool is_suffix(const Shape& s, const Shape& out) {
  if (s.size() > out.size()) return false;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] != out[out.size() - s.size() + i]) return false;
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// op implementation machinery

namespace detail {

template <class T>
inline bool tracked(const TensorT<T>& t) {
  return active_tape<T>() != nullptr && t.requires_grad();
}

template <class T>
inline void mark_out(TensorT<T>& out) {
  out.set_requires_grad(true);
  active_tape<T>()->node_id(out);
}

// Accumulate `gout` (shaped `out_shape`, possibly scaled elementwise by the
// broadcast of `factor`) into `gin`, reducing over broadcast dims of
// `in_shape`. factor == nullptr means factor 1.
template <class T>
inline void reduce_accum(const std::vector<T>& gout, const Shape& out_shape, const T* factor,
                         const Shape& factor_shape, std::vector<T>& gin, const Shape& in_shape) {
  if (in_shape == out_shape && factor == nullptr) {
    for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
    return;
  }
  if (in_shape == out_shape && factor_shape == out_shape) {
    for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i] * factor[i];
    return;
  }
  auto si = bcast_strides(in_shape, out_shape);
  auto sf = factor ? bcast_strides(factor_shape, out_shape) : std::vector<std::int64_t>(out_shape.size(), 0);
  const T* g = gout.data();
  std::int64_t lin = 0;
  bcast_walk2(out_shape, si, sf, [&](std::int64_t oi, std::int64_t of) {
    gin[std::size_t(oi)] += factor ? g[lin] * factor[of] : g[lin];
    ++lin;
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops

namespace detail {

enum class BinKind { Add, Sub, Mul };

template <class T>
TensorT<T> binary_op(const TensorT<T>& a, const TensorT<T>& b, BinKind kind, const char* name) {
  Shape os = broadcast_shape(a.shape(), b.shape(), name);
  TensorT<T> out = TensorT<T>::zeros(os);
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.mutable_data();
  std::int64_t n = out.size();
  auto apply = [kind](T x, T y) { return kind == BinKind::Add ? x + y : kind == BinKind::Sub ? x - y : x * y; };
  if (a.shape() == os && b.shape() == os) {
    switch (kind) {
      case BinKind::Add: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
      case BinKind::Sub: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
      case BinKind::Mul: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
    }
  } else if (a.shape() == os && is_suffix(b.shape(), os)) {
    std::int64_t bs = numel(b.shape());
    if (bs == 0) bs = 1;
    switch (kind) {
      case BinKind::Add: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % bs]; break;
      case BinKind::Sub: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i % bs]; break;
      case BinKind::Mul: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i % bs]; break;
    }
  } else if (b.shape() == os && is_suffix(a.shape(), os)) {
    std::int64_t as = numel(a.shape());
    if (as == 0) as = 1;
    switch (kind) {
      case BinKind::Add: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i % as] + pb[i]; break;
      case BinKind::Sub: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i % as] - pb[i]; break;
      case BinKind::Mul: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i % as] * pb[i]; break;
    }
  } else {
    auto sa = bcast_strides(a.shape(), os);
    auto sb = bcast_strides(b.shape(), os);
    std::int64_t lin = 0;
    bcast_walk2(os, sa, sb, [&](std::int64_t oa, std::int64_t ob) {
      po[lin++] = apply(pa[oa], pb[ob]);
    });
  }

  auto* tp = active_tape<T>();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    int ia = a.requires_grad() ? tp->node_id(a) : -1;
    int ib = b.requires_grad() ? tp->node_id(b) : -1;
    mark_out(out);
    int io = tp->lookup(out);
    auto ah = a.handle();
    auto bh = b.handle();
    Shape osh = os;
    tp->record([ia, ib, io, ah, bh, osh, kind](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      if (ia >= 0) {
        if (kind == BinKind::Mul)
          reduce_accum<T>(*g, osh, bh->v.data(), bh->shape, t.grad_buf(ia), ah->shape);
        else
          reduce_accum<T>(*g, osh, nullptr, {}, t.grad_buf(ia), ah->shape);
      }
      if (ib >= 0) {
        if (kind == BinKind::Mul) {
          reduce_accum<T>(*g, osh, ah->v.data(), ah->shape, t.grad_buf(ib), bh->shape);
        } else if (kind == BinKind::Add) {
          reduce_accum<T>(*g, osh, nullptr, {}, t.grad_buf(ib), bh->shape);
        } else {  // Sub: d/db = -1
          std::vector<T> neg(g->size());
          for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -(*g)[i];
          reduce_accum<T>(neg, osh, nullptr, {}, t.grad_buf(ib), bh->shape);
        }
      }
    });
  }
  return out;
}

}  // namespace detail

template <class T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) { return detail::binary_op(a, b, detail::BinKind::Add, "add"); }
template <class T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) { return detail::binary_op(a, b, detail::BinKind::Sub, "sub"); }
template <class T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) { return detail::binary_op(a, b, detail::BinKind::Mul, "mul"); }

// ---------------------------------------------------------------------------
// elementwise unary ops

namespace detail {

// f: value -> value; dfdx evaluated from (x, y) so each op picks the cheaper form.
template <class T, class FwdF, class BwdF>
TensorT<T> unary_op(const TensorT<T>& a, const char* name, FwdF fwd, BwdF dfdx) {
  (void)name;
  TensorT<T> out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data();
  T* po = out.mutable_data();
  std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);

  auto* tp = active_tape<T>();
  if (tp && a.requires_grad()) {
    int ia = tp->node_id(a);
    mark_out(out);
    int io = tp->lookup(out);
    auto ah = a.handle();
    auto oh = out.handle();
    tp->record([ia, io, ah, oh, dfdx](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(ia);
      const T* x = ah->v.data();
      const T* y = oh->v.data();
      for (std::size_t i = 0; i < g->size(); ++i) gin[i] += (*g)[i] * dfdx(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace detail

template <class T>
TensorT<T> tanh(const TensorT<T>& a) {
  return detail::unary_op(a, "tanh", [](T x) { return T(std::tanh(double(x))); },
                          [](T, T y) { return T(1) - y * y; });
}

template <class T>
TensorT<T> relu(const TensorT<T>& a) {
  return detail::unary_op(a, "relu", [](T x) { return x > T(0) ? x : T(0); },
                          [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// x * sigmoid(x)
template <class T>
TensorT<T> silu(const TensorT<T>& a) {
  return detail::unary_op(
      a, "silu",
      [](T x) {
        T s = T(1) / (T(1) + T(std::exp(double(-x))));
        return x * s;
      },
      [](T x, T) {
        T s = T(1) / (T(1) + T(std::exp(double(-x))));
        return s * (T(1) + x * (T(1) - s));
      });
}

template <class T>
TensorT<T> exp(const TensorT<T>& a) {
  return detail::unary_op(a, "exp", [](T x) { return T(std::exp(double(x))); },
                          [](T, T y) { return y; });
}

template <class T>
TensorT<T> log(const TensorT<T>& a) {
  return detail::unary_op(a, "log", [](T x) { return T(std::log(double(x))); },
                          [](T x, T) { return T(1) / x; });
}

template <class T>
TensorT<T> square(const TensorT<T>& a) {
  return detail::unary_op(a, "square", [](T x) { return x * x; },
                          [](T x, T) { return T(2) * x; });
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, double c) {
  T cc = T(c);
  return detail::unary_op(a, "scale", [cc](T x) { return cc * x; }, [cc](T, T) { return cc; });
}

// ---------------------------------------------------------------------------
// matmul / linear

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_fail("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<T> out = TensorT<T>::zeros({m, n});
  detail::gemm<T>(false, false, m, n, k, a.data(), k, b.data(), n, T(0), out.mutable_data(), n);

  auto* tp = active_tape<T>();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    int ia = a.requires_grad() ? tp->node_id(a) : -1;
    int ib = b.requires_grad() ? tp->node_id(b) : -1;
    detail::mark_out(out);
    int io = tp->lookup(out);
    auto ah = a.handle();
    auto bh = b.handle();
    tp->record([ia, ib, io, ah, bh, m, n, k](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      if (ia >= 0)  // dA = G * B^T
        detail::gemm<T>(false, true, m, k, n, g->data(), n, bh->v.data(), n, T(1),
                        t.grad_buf(ia).data(), k);
      if (ib >= 0)  // dB = A^T * G
        detail::gemm<T>(true, false, k, n, m, ah->v.data(), k, g->data(), n, T(1),
                        t.grad_buf(ib).data(), n);
    });
  }
  return out;
}

// x(M,K) * w(K,N) + bias(N)
template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || bias.rank() != 1 ||
      bias.dim(0) != w.dim(1))
    shape_fail("linear", "incompatible shapes " + shape_str(x.shape()) + " x " +
                             shape_str(w.shape()) + " + " + shape_str(bias.shape()));
  std::int64_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  TensorT<T> out = TensorT<T>::zeros({m, n});
  T* po = out.mutable_data();
  const T* pb = bias.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) po[i * n + j] = pb[j];
  detail::gemm<T>(false, false, m, n, k, x.data(), k, w.data(), n, T(1), po, n);

  auto* tp = active_tape<T>();
  if (tp && (x.requires_grad() || w.requires_grad() || bias.requires_grad())) {
    int ix = x.requires_grad() ? tp->node_id(x) : -1;
    int iw = w.requires_grad() ? tp->node_id(w) : -1;
    int ib = bias.requires_grad() ? tp->node_id(bias) : -1;
    detail::mark_out(out);
    int io = tp->lookup(out);
    auto xh = x.handle();
    auto wh = w.handle();
    tp->record([ix, iw, ib, io, xh, wh, m, n, k](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      if (ix >= 0)
        detail::gemm<T>(false, true, m, k, n, g->data(), n, wh->v.data(), n, T(1),
                        t.grad_buf(ix).data(), k);
      if (iw >= 0)
        detail::gemm<T>(true, false, k, n, m, xh->v.data(), k, g->data(), n, T(1),
                        t.grad_buf(iw).data(), n);
      if (ib >= 0) {
        auto& gb = t.grad_buf(ib);
        const T* pg = g->data();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < n; ++j) gb[std::size_t(j)] += pg[i * n + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / layer norm

namespace detail {
// Resolve axis, collapse shape to (outer, axis_len, inner).
inline void axis_split(const Shape& s, int axis, const char* op, std::int64_t& outer,
                       std::int64_t& len, std::int64_t& inner) {
  int r = int(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) shape_fail(op, "axis out of range for " + shape_str(s));
  outer = 1; inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[std::size_t(i)];
  len = s[std::size_t(axis)];
  for (int i = axis + 1; i < r; ++i) inner *= s[std::size_t(i)];
}
}  // namespace detail

template <class T>
TensorT<T> softmax(const TensorT<T>& a, int axis) {
  std::int64_t outer, len, inner;
  detail::axis_split(a.shape(), axis, "softmax", outer, len, inner);
  TensorT<T> out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data();
  T* po = out.mutable_data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      const T* x = pa + o * len * inner + in;
      T* y = po + o * len * inner + in;
      T mx = x[0];
      for (std::int64_t l = 1; l < len; ++l) mx = std::max(mx, x[l * inner]);
      T sum = T(0);
      for (std::int64_t l = 0; l < len; ++l) {
        T e = T(std::exp(double(x[l * inner] - mx)));
        y[l * inner] = e;
        sum += e;
      }
      T isum = T(1) / sum;
      for (std::int64_t l = 0; l < len; ++l) y[l * inner] *= isum;
    }

  auto* tp = active_tape<T>();
  if (tp && a.requires_grad()) {
    int ia = tp->node_id(a);
    detail::mark_out(out);
    int io = tp->lookup(out);
    auto oh = out.handle();
    tp->record([ia, io, oh, outer, len, inner](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(ia);
      const T* y = oh->v.data();
      const T* pg = g->data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
          std::int64_t base = o * len * inner + in;
          T dot = T(0);
          for (std::int64_t l = 0; l < len; ++l) dot += pg[base + l * inner] * y[base + l * inner];
          for (std::int64_t l = 0; l < len; ++l)
            gin[std::size_t(base + l * inner)] += (pg[base + l * inner] - dot) * y[base + l * inner];
        }
    });
  }
  return out;
}

// Normalizes over the last axis, then applies elementwise affine (gamma, beta).
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      double eps = 1e-5) {
  if (x.rank() < 1) shape_fail("layer_norm", "rank-0 input");
  std::int64_t c = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
    shape_fail("layer_norm", "affine params must be length " + std::to_string(c));
  std::int64_t rows = x.size() / c;
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  std::vector<T> inv_sigma(std::size_t(rows), T(0)), mean(std::size_t(rows), T(0));
  const T* px = x.data();
  const T* pgm = gamma.data();
  const T* pbt = beta.data();
  T* po = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * c;
    T mu = T(0);
    for (std::int64_t j = 0; j < c; ++j) mu += xr[j];
    mu /= T(c);
    T var = T(0);
    for (std::int64_t j = 0; j < c; ++j) {
      T d = xr[j] - mu;
      var += d * d;
    }
    var /= T(c);
    T is = T(1) / T(std::sqrt(double(var) + eps));
    mean[std::size_t(r)] = mu;
    inv_sigma[std::size_t(r)] = is;
    T* yr = po + r * c;
    for (std::int64_t j = 0; j < c; ++j) yr[j] = (xr[j] - mu) * is * pgm[j] + pbt[j];
  }

  auto* tp = active_tape<T>();
  if (tp && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
    int ix = x.requires_grad() ? tp->node_id(x) : -1;
    int ig = gamma.requires_grad() ? tp->node_id(gamma) : -1;
    int ib = beta.requires_grad() ? tp->node_id(beta) : -1;
    detail::mark_out(out);
    int io = tp->lookup(out);
    auto xh = x.handle();
    auto gh = gamma.handle();
    tp->record([ix, ig, ib, io, xh, gh, rows, c, mean, inv_sigma](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      const T* px2 = xh->v.data();
      const T* pgm2 = gh->v.data();
      const T* pg = g->data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = px2 + r * c;
        const T* gr = pg + r * c;
        T mu = mean[std::size_t(r)], is = inv_sigma[std::size_t(r)];
        if (ig >= 0) {
          auto& gg = t.grad_buf(ig);
          for (std::int64_t j = 0; j < c; ++j) gg[std::size_t(j)] += gr[j] * (xr[j] - mu) * is;
        }
        if (ib >= 0) {
          auto& gb = t.grad_buf(ib);
          for (std::int64_t j = 0; j < c; ++j) gb[std::size_t(j)] += gr[j];
        }
        if (ix >= 0) {
          auto& gx = t.grad_buf(ix);
          // dL/dxhat_j = g_j * gamma_j; then standard layernorm backward
          T sum_dh = T(0), sum_dh_xhat = T(0);
          for (std::int64_t j = 0; j < c; ++j) {
            T dh = gr[j] * pgm2[j];
            T xhat = (xr[j] - mu) * is;
            sum_dh += dh;
            sum_dh_xhat += dh * xhat;
          }
          T invc = T(1) / T(c);
          for (std::int64_t j = 0; j < c; ++j) {
            T dh = gr[j] * pgm2[j];
            T xhat = (xr[j] - mu) * is;
            gx[std::size_t(r * c + j)] += is * (dh - invc * sum_dh - xhat * invc * sum_dh_xhat);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
TensorT<T> sum_all(const TensorT<T>& a) {
  TensorT<T> out = TensorT<T>::zeros(Shape{});
  const T* pa = a.data();
  T s = T(0);
  for (std::int64_t i = 0; i < a.size(); ++i) s += pa[i];
  out.mutable_data()[0] = s;
  auto* tp = active_tape<T>();
  if (tp && a.requires_grad()) {
    int ia = tp->node_id(a);
    detail::mark_out(out);
    int io = tp->lookup(out);
    tp->record([ia, io](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(ia);
      T gv = (*g)[0];
      for (auto& v : gin) v += gv;
    });
  }
  return out;
}

namespace detail {
template <class T>
TensorT<T> reduce_axis(const TensorT<T>& a, int axis, bool mean, const char* name) {
  std::int64_t outer, len, inner;
  axis_split(a.shape(), axis, name, outer, len, inner);
  int ax = axis < 0 ? axis + a.rank() : axis;
  Shape os;
  for (int i = 0; i < a.rank(); ++i)
    if (i != ax) os.push_back(a.dim(i));
  TensorT<T> out = TensorT<T>::zeros(os);
  const T* pa = a.data();
  T* po = out.mutable_data();
  T w = mean ? T(1) / T(len) : T(1);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      T s = T(0);
      for (std::int64_t l = 0; l < len; ++l) s += pa[(o * len + l) * inner + in];
      po[o * inner + in] = s * w;
    }
  auto* tp = active_tape<T>();
  if (tp && a.requires_grad()) {
    int ia = tp->node_id(a);
    mark_out(out);
    int io = tp->lookup(out);
    tp->record([ia, io, outer, len, inner, w](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(ia);
      const T* pg = g->data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t l = 0; l < len; ++l)
          for (std::int64_t in = 0; in < inner; ++in)
            gin[std::size_t((o * len + l) * inner + in)] += pg[o * inner + in] * w;
    });
  }
  return out;
}
}  // namespace detail

template <class T>
TensorT<T> sum_axis(const TensorT<T>& a, int axis) {
  return detail::reduce_axis(a, axis, false, "sum_axis");
}
template <class T>
TensorT<T> mean_axis(const TensorT<T>& a, int axis) {
  return detail::reduce_axis(a, axis, true, "mean_axis");
}

// ---------------------------------------------------------------------------
// shape ops

template <class T>
TensorT<T> reshape(const TensorT<T>& a, Shape s) {
  if (numel(s) != a.size())
    shape_fail("reshape", shape_str(a.shape()) + " -> " + shape_str(s) + " changes element count");
  TensorT<T> out = TensorT<T>::from(std::move(s), a.values());
  auto* tp = active_tape<T>();
  if (tp && a.requires_grad()) {
    int ia = tp->node_id(a);
    detail::mark_out(out);
    int io = tp->lookup(out);
    tp->record([ia, io](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(ia);
      for (std::size_t i = 0; i < g->size(); ++i) gin[i] += (*g)[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> swapaxes(const TensorT<T>& a, int ax0, int ax1) {
  int r = a.rank();
  if (ax0 < 0) ax0 += r;
  if (ax1 < 0) ax1 += r;
  if (ax0 < 0 || ax0 >= r || ax1 < 0 || ax1 >= r)
    shape_fail("swapaxes", "axes out of range for " + shape_str(a.shape()));
  Shape os = a.shape();
  std::swap(os[std::size_t(ax0)], os[std::size_t(ax1)]);
  TensorT<T> out = TensorT<T>::zeros(os);
  // strides of input permuted into output order
  std::vector<std::int64_t> st(std::size_t(r), 0);
  std::int64_t acc = 1;
  for (int i = r; i-- > 0;) {
    st[std::size_t(i)] = acc;
    acc *= a.dim(i);
  }
  std::swap(st[std::size_t(ax0)], st[std::size_t(ax1)]);
  auto zero = std::vector<std::int64_t>(std::size_t(r), 0);
  const T* pa = a.data();
  T* po = out.mutable_data();
  std::int64_t lin = 0;
  detail::bcast_walk2(os, st, zero, [&](std::int64_t oa, std::int64_t) { po[lin++] = pa[oa]; });

  auto* tp = active_tape<T>();
  if (tp && a.requires_grad()) {
    int ia = tp->node_id(a);
    detail::mark_out(out);
    int io = tp->lookup(out);
    tp->record([ia, io, os, st, zero](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(ia);
      const T* pg = g->data();
      std::int64_t lin2 = 0;
      detail::bcast_walk2(os, st, zero, [&](std::int64_t oa, std::int64_t) { gin[std::size_t(oa)] += pg[lin2++]; });
    });
  }
  return out;
}

template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) shape_fail("concat", "axis out of range");
  Shape os = parts[0].shape();
  std::int64_t cat = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) shape_fail("concat", "rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.dim(i) != os[std::size_t(i)])
        shape_fail("concat", "dim mismatch at axis " + std::to_string(i));
    cat += p.dim(axis);
  }
  os[std::size_t(axis)] = cat;
  TensorT<T> out = TensorT<T>::zeros(os);
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[std::size_t(i)];
  for (int i = axis + 1; i < r; ++i) inner *= os[std::size_t(i)];
  T* po = out.mutable_data();
  std::int64_t off = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::int64_t plen = p.dim(axis);
    const T* pp = p.data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(pp + o * plen * inner, pp + (o + 1) * plen * inner,
                po + (o * cat + off) * inner);
    off += plen;
  }

  auto* tp = active_tape<T>();
  bool any = false;
  for (const auto& p : parts) any = any || detail::tracked(p);
  if (tp && any) {
    std::vector<int> ids;
    std::vector<std::int64_t> lens;
    for (const auto& p : parts) {
      ids.push_back(p.requires_grad() ? tp->node_id(p) : -1);
      lens.push_back(p.dim(axis));
    }
    detail::mark_out(out);
    int io = tp->lookup(out);
    tp->record([ids, lens, offsets, io, outer, inner, cat](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      const T* pg = g->data();
      for (std::size_t pi = 0; pi < ids.size(); ++pi) {
        if (ids[pi] < 0) continue;
        auto& gin = t.grad_buf(ids[pi]);
        std::int64_t plen = lens[pi], poff = offsets[pi];
        for (std::int64_t o = 0; o < outer; ++o)
          for (std::int64_t l = 0; l < plen * inner; ++l)
            gin[std::size_t(o * plen * inner + l)] += pg[(o * cat + poff) * inner + l];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// masked fill / gather / scatter

// out[i] = mask[i] != 0 ? a[i] : value   (mask broadcastable, not differentiated)
template <class T>
TensorT<T> masked_fill(const TensorT<T>& a, const TensorT<T>& mask, double value) {
  Shape os = broadcast_shape(a.shape(), mask.shape(), "masked_fill");
  if (os != a.shape()) shape_fail("masked_fill", "mask must broadcast to input shape");
  TensorT<T> out = TensorT<T>::zeros(os);
  auto sa = detail::bcast_strides(a.shape(), os);
  auto sm = detail::bcast_strides(mask.shape(), os);
  const T* pa = a.data();
  const T* pm = mask.data();
  T* po = out.mutable_data();
  T fv = T(value);
  std::int64_t lin = 0;
  detail::bcast_walk2(os, sa, sm, [&](std::int64_t oa, std::int64_t om) {
    po[lin++] = pm[om] != T(0) ? pa[oa] : fv;
  });

  auto* tp = active_tape<T>();
  if (tp && a.requires_grad()) {
    int ia = tp->node_id(a);
    detail::mark_out(out);
    int io = tp->lookup(out);
    auto mh = mask.handle();
    Shape osh = os;
    Shape ash = a.shape();
    tp->record([ia, io, mh, osh, ash](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(ia);
      auto sa2 = detail::bcast_strides(ash, osh);
      auto sm2 = detail::bcast_strides(mh->shape, osh);
      const T* pm2 = mh->v.data();
      const T* pg = g->data();
      std::int64_t lin2 = 0;
      detail::bcast_walk2(osh, sa2, sm2, [&](std::int64_t oa, std::int64_t om) {
        if (pm2[om] != T(0)) gin[std::size_t(oa)] += pg[lin2];
        ++lin2;
      });
    });
  }
  return out;
}

// rows of table(R,C) selected by idx -> (len(idx), C)
template <class T>
TensorT<T> gather_rows(const TensorT<T>& table, const std::vector<std::int64_t>& idx) {
  if (table.rank() != 2) shape_fail("gather_rows", "table must be rank 2, got " + shape_str(table.shape()));
  std::int64_t rsz = table.dim(0), c = table.dim(1);
  for (auto i : idx)
    if (i < 0 || i >= rsz)
      shape_fail("gather_rows", "index " + std::to_string(i) + " out of range [0," + std::to_string(rsz) + ")");
  TensorT<T> out = TensorT<T>::zeros({std::int64_t(idx.size()), c});
  const T* pt = table.data();
  T* po = out.mutable_data();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(pt + idx[r] * c, pt + (idx[r] + 1) * c, po + std::int64_t(r) * c);

  auto* tp = active_tape<T>();
  if (tp && table.requires_grad()) {
    int it = tp->node_id(table);
    detail::mark_out(out);
    int io = tp->lookup(out);
    auto ix = idx;
    tp->record([it, io, ix, c](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      auto& gin = t.grad_buf(it);
      const T* pg = g->data();
      for (std::size_t r = 0; r < ix.size(); ++r)
        for (std::int64_t j = 0; j < c; ++j) gin[std::size_t(ix[r] * c + j)] += pg[std::int64_t(r) * c + j];
    });
  }
  return out;
}

// out = base; out[idx[l], :] += rows[l, :]
template <class T>
TensorT<T> scatter_add_rows(const TensorT<T>& base, const std::vector<std::int64_t>& idx,
                            const TensorT<T>& rows) {
  if (base.rank() != 2 || rows.rank() != 2 || base.dim(1) != rows.dim(1) ||
      rows.dim(0) != std::int64_t(idx.size()))
    shape_fail("scatter_add_rows", "incompatible shapes " + shape_str(base.shape()) + " <- " +
                                       shape_str(rows.shape()));
  std::int64_t rsz = base.dim(0), c = base.dim(1);
  for (auto i : idx)
    if (i < 0 || i >= rsz) shape_fail("scatter_add_rows", "index out of range");
  TensorT<T> out = TensorT<T>::from(base.shape(), base.values());
  T* po = out.mutable_data();
  const T* pr = rows.data();
  for (std::size_t l = 0; l < idx.size(); ++l)
    for (std::int64_t j = 0; j < c; ++j) po[idx[l] * c + j] += pr[std::int64_t(l) * c + j];

  auto* tp = active_tape<T>();
  if (tp && (base.requires_grad() || rows.requires_grad())) {
    int ib = base.requires_grad() ? tp->node_id(base) : -1;
    int ir = rows.requires_grad() ? tp->node_id(rows) : -1;
    detail::mark_out(out);
    int io = tp->lookup(out);
    auto ix = idx;
    tp->record([ib, ir, io, ix, c](TapeT<T>& t) {
      const std::vector<T>* g = t.grad_of(io);
      if (!g) return;
      const T* pg = g->data();
      if (ib >= 0) {
        auto& gb = t.grad_buf(ib);
        for (std::size_t i = 0; i < g->size(); ++i) gb[i] += (*g)[i];
      }
      if (ir >= 0) {
        auto& gr = t.grad_buf(ir);
        for (std::size_t l = 0; l < ix.size(); ++l)
          for (std::int64_t j = 0; j < c; ++j) gr[std::size_t(std::int64_t(l) * c + j)] += pg[ix[l] * c + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// small helpers (not ops)

template <class T>
inline bool all_finite(const TensorT<T>& t) {
  const T* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(double(p[i]))) return false;
  return true;
}

using Tensor = TensorT<double>;
using Tape = TapeT<double>;
using TapeScope = TapeScopeT<double>;
using NoTapeScope = NoTapeScopeT<double>;

}  // namespace gdiff
