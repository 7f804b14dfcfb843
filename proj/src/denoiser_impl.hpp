#pragma once

// Template bodies for the denoiser and property-net translation unit.

#include <cmath>
#include <stdexcept>
#include <utility>

#include "gdiff/denoiser.hpp"

namespace gdiff {

// ---------- parameter store ----------

template <typename T>
TensorT<T>& ParamSetT<T>::add(const std::string& name, TensorT<T> t) {
  if (index_.count(name))
    throw std::invalid_argument("ParamSet: duplicate tensor name '" + name + "'");
  index_[name] = names_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

template <typename T>
const TensorT<T>& ParamSetT<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParamSet: no tensor named '" + name + "'");
  return tensors_[it->second];
}

template <typename T>
TensorT<T>& ParamSetT<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParamSet: no tensor named '" + name + "'");
  return tensors_[it->second];
}

template <typename T>
std::int64_t ParamSetT<T>::scalar_count() const {
  std::int64_t c = 0;
  for (const auto& t : tensors_) c += t.size();
  return c;
}

template <typename T>
ParamSetT<T> ParamSetT<T>::clone() const {
  ParamSetT<T> out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const TensorT<T>& src = tensors_[i];
    std::vector<T> v(src.data(), src.data() + src.size());
    out.add(names_[i], TensorT<T>::from(src.shape(), std::move(v), src.requires_grad()));
  }
  return out;
}

// ---------- parameter schema ----------

enum class PInit { Uniform, Zero, One, Half };

struct ParamSpec {
  std::string name;
  Shape shape;
  PInit init;
  int fan = 1;
};

namespace denoiser_detail {

inline void add_linear(std::vector<ParamSpec>& v, const std::string& pre,
                       std::int64_t in, std::int64_t out, bool zero = false) {
  PInit k = zero ? PInit::Zero : PInit::Uniform;
  v.push_back({pre + "w", {in, out}, k, int(in)});
  v.push_back({pre + "b", {out}, k, int(in)});
}

inline void add_attn(std::vector<ParamSpec>& v, const std::string& pre, std::int64_t d) {
  for (const char* nm : {"q", "k", "v", "g0", "g1", "o"}) add_linear(v, pre + nm, d, d);
}

inline void add_ffn(std::vector<ParamSpec>& v, const std::string& pre, std::int64_t d) {
  v.push_back({pre + "g", {d}, PInit::One, 1});
  v.push_back({pre + "be", {d}, PInit::Zero, 1});
  add_linear(v, pre + "w1.", d, d);
  add_linear(v, pre + "w2.", d, d);
}

}  // namespace denoiser_detail

inline std::vector<ParamSpec> denoiser_schema(const DenoiserConfig& cfg) {
  using denoiser_detail::add_attn;
  using denoiser_detail::add_ffn;
  using denoiser_detail::add_linear;
  std::int64_t d = cfg.hidden_dim, F = cfg.feat_dim, m = cfg.rw_steps;
  std::vector<ParamSpec> v;
  add_linear(v, "in.x.", F, d);
  add_linear(v, "in.rw.", m, d);
  add_linear(v, "in.a.", 2, d);
  v.push_back({"in.spd", {m + 2, d}, PInit::Uniform, int(d)});
  add_linear(v, "in.t1.", d, d);
  add_linear(v, "in.t2.", d, d);
  for (int l = 0; l < cfg.num_blocks; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    v.push_back({p + "gine.eps", {1}, PInit::Zero, 1});
    add_linear(v, p + "gine.e.", d, d);
    add_linear(v, p + "gine.m1.", d, d);
    add_linear(v, p + "gine.m2.", d, d);
    add_attn(v, p + "attn.", d);
    add_ffn(v, p + "ffnh.", d);
    add_ffn(v, p + "ffne.", d);
  }
  add_linear(v, "head.x1.", d, d);
  add_linear(v, "head.x2.", d, F, true);
  add_linear(v, "head.e1.", d, d);
  add_linear(v, "head.e2.", d, 2, true);
  return v;
}

inline std::vector<ParamSpec> property_schema(const DenoiserConfig& cfg) {
  using denoiser_detail::add_attn;
  using denoiser_detail::add_ffn;
  using denoiser_detail::add_linear;
  std::int64_t d = cfg.hidden_dim, F = cfg.feat_dim;
  std::vector<ParamSpec> v;
  add_linear(v, "in.x.", F, d);
  add_linear(v, "in.a.", 2, d);
  add_linear(v, "in.t1.", d, d);
  add_linear(v, "in.t2.", d, d);
  for (int l = 0; l < cfg.num_blocks; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    v.push_back({p + "conv.aex", {1}, PInit::Half, 1});
    v.push_back({p + "conv.bex", {1}, PInit::Half, 1});
    v.push_back({p + "conv.ws", {d, d}, PInit::Uniform, int(d)});
    v.push_back({p + "conv.wr1", {d, d}, PInit::Uniform, int(d)});
    v.push_back({p + "conv.wr2", {d, d}, PInit::Uniform, int(d)});
    v.push_back({p + "conv.wr3", {d, d}, PInit::Uniform, int(d)});
    v.push_back({p + "conv.b", {d}, PInit::Zero, 1});
    add_linear(v, p + "conv.m1.", d, d);
    add_linear(v, p + "conv.m2.", d, d);
    add_attn(v, p + "attn.", d);
    add_ffn(v, p + "ffnh.", d);
    add_ffn(v, p + "ffne.", d);
  }
  add_linear(v, "read.1.", d, d);
  add_linear(v, "read.2.", d, 1, true);
  return v;
}

namespace denoiser_detail {

template <typename T>
ParamSetT<T> init_params(const std::vector<ParamSpec>& schema, Rng& rng) {
  ParamSetT<T> ps;
  for (const ParamSpec& sp : schema) {
    TensorT<T> t = TensorT<T>::zeros(sp.shape, true);
    if (sp.init == PInit::Uniform) {
      double bound = 1.0 / std::sqrt(double(sp.fan));
      T* p = t.mutable_data();
      for (std::int64_t i = 0; i < t.size(); ++i) p[i] = T(rng.uniform(-bound, bound));
    } else if (sp.init == PInit::One || sp.init == PInit::Half) {
      T* p = t.mutable_data();
      T v = sp.init == PInit::One ? T(1) : T(0.5);
      for (std::int64_t i = 0; i < t.size(); ++i) p[i] = v;
    }
    ps.add(sp.name, t);
  }
  return ps;
}

template <typename T>
void check_schema(const ParamSetT<T>& ps, const std::vector<ParamSpec>& schema,
                  const char* what) {
  if (ps.size() != schema.size())
    throw std::invalid_argument(std::string(what) + ": parameter set has " +
                                std::to_string(ps.size()) + " tensors, expected " +
                                std::to_string(schema.size()));
  for (const ParamSpec& sp : schema) {
    const TensorT<T>& t = ps.at(sp.name);
    if (t.shape() != sp.shape)
      shape_fail(what, "tensor '" + sp.name + "' has shape " + shape_str(t.shape()) +
                           ", expected " + shape_str(sp.shape));
  }
}

template <typename T>
void bind_attn(ParamSetT<T>& ps, AttnParamsT<T>& a, const std::string& pre) {
  a.qw = ps.at(pre + "qw");
  a.qb = ps.at(pre + "qb");
  a.kw = ps.at(pre + "kw");
  a.kb = ps.at(pre + "kb");
  a.vw = ps.at(pre + "vw");
  a.vb = ps.at(pre + "vb");
  a.g0w = ps.at(pre + "g0w");
  a.g0b = ps.at(pre + "g0b");
  a.g1w = ps.at(pre + "g1w");
  a.g1b = ps.at(pre + "g1b");
  a.ow = ps.at(pre + "ow");
  a.ob = ps.at(pre + "ob");
}

template <typename T>
void bind_ffn(ParamSetT<T>& ps, FfnParamsT<T>& f, const std::string& pre) {
  f.gamma = ps.at(pre + "g");
  f.beta = ps.at(pre + "be");
  f.w1 = ps.at(pre + "w1.w");
  f.b1 = ps.at(pre + "w1.b");
  f.w2 = ps.at(pre + "w2.w");
  f.b2 = ps.at(pre + "w2.b");
}

// linear applied to the trailing axis of any-rank input
template <typename T>
TensorT<T> lin_last(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  const Shape& s = x.shape();
  std::int64_t in = s.back();
  std::int64_t rows = x.size() / in;
  TensorT<T> y = linear(reshape(x, {rows, in}), w, b);
  Shape os = s;
  os.back() = w.dim(1);
  return reshape(y, os);
}

template <typename T>
TensorT<T> silu_mlp(const TensorT<T>& x, const TensorT<T>& w1, const TensorT<T>& b1,
                    const TensorT<T>& w2, const TensorT<T>& b2) {
  return lin_last(silu(lin_last(x, w1, b1)), w2, b2);
}

template <typename T>
TensorT<T> time_features(double t, int d, const TensorT<T>& w1, const TensorT<T>& b1,
                         const TensorT<T>& w2, const TensorT<T>& b2) {
  std::vector<double> e = time_sinusoid(t, d);
  std::vector<T> ev(e.begin(), e.end());
  TensorT<T> emb = TensorT<T>::from({1, std::int64_t(d)}, std::move(ev));
  TensorT<T> h = linear(silu(linear(emb, w1, b1)), w2, b2);
  return reshape(h, {std::int64_t(d)});
}

}  // namespace denoiser_detail

template <typename T>
DenoiserT<T> denoiser_from_params(const DenoiserConfig& cfg, ParamSetT<T> params) {
  cfg.validate();
  denoiser_detail::check_schema(params, denoiser_schema(cfg), "denoiser");
  DenoiserT<T> m;
  m.cfg = cfg;
  m.params = std::move(params);
  ParamSetT<T>& ps = m.params;
  m.x_w = ps.at("in.x.w");
  m.x_b = ps.at("in.x.b");
  m.rw_w = ps.at("in.rw.w");
  m.rw_b = ps.at("in.rw.b");
  m.a_w = ps.at("in.a.w");
  m.a_b = ps.at("in.a.b");
  m.spd_table = ps.at("in.spd");
  m.t_w1 = ps.at("in.t1.w");
  m.t_b1 = ps.at("in.t1.b");
  m.t_w2 = ps.at("in.t2.w");
  m.t_b2 = ps.at("in.t2.b");
  m.blocks.resize(std::size_t(cfg.num_blocks));
  for (int l = 0; l < cfg.num_blocks; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    BlockT<T>& b = m.blocks[std::size_t(l)];
    b.gine.eps0 = ps.at(p + "gine.eps");
    b.gine.ew = ps.at(p + "gine.e.w");
    b.gine.eb = ps.at(p + "gine.e.b");
    b.gine.w1 = ps.at(p + "gine.m1.w");
    b.gine.b1 = ps.at(p + "gine.m1.b");
    b.gine.w2 = ps.at(p + "gine.m2.w");
    b.gine.b2 = ps.at(p + "gine.m2.b");
    denoiser_detail::bind_attn(ps, b.attn, p + "attn.");
    denoiser_detail::bind_ffn(ps, b.ffn_h, p + "ffnh.");
    denoiser_detail::bind_ffn(ps, b.ffn_e, p + "ffne.");
  }
  m.hx_w1 = ps.at("head.x1.w");
  m.hx_b1 = ps.at("head.x1.b");
  m.hx_w2 = ps.at("head.x2.w");
  m.hx_b2 = ps.at("head.x2.b");
  m.he_w1 = ps.at("head.e1.w");
  m.he_b1 = ps.at("head.e1.b");
  m.he_w2 = ps.at("head.e2.w");
  m.he_b2 = ps.at("head.e2.b");
  return m;
}

template <typename T>
DenoiserT<T> make_denoiser(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  return denoiser_from_params<T>(
      cfg, denoiser_detail::init_params<T>(denoiser_schema(cfg), rng));
}

template <typename T>
PropertyNetT<T> property_net_from_params(const DenoiserConfig& cfg, ParamSetT<T> params) {
  cfg.validate();
  denoiser_detail::check_schema(params, property_schema(cfg), "property net");
  PropertyNetT<T> m;
  m.cfg = cfg;
  m.params = std::move(params);
  ParamSetT<T>& ps = m.params;
  m.x_w = ps.at("in.x.w");
  m.x_b = ps.at("in.x.b");
  m.a_w = ps.at("in.a.w");
  m.a_b = ps.at("in.a.b");
  m.t_w1 = ps.at("in.t1.w");
  m.t_b1 = ps.at("in.t1.b");
  m.t_w2 = ps.at("in.t2.w");
  m.t_b2 = ps.at("in.t2.b");
  m.blocks.resize(std::size_t(cfg.num_blocks));
  for (int l = 0; l < cfg.num_blocks; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    PropBlockT<T>& b = m.blocks[std::size_t(l)];
    b.conv.aex = ps.at(p + "conv.aex");
    b.conv.bex = ps.at(p + "conv.bex");
    b.conv.ws = ps.at(p + "conv.ws");
    b.conv.wr1 = ps.at(p + "conv.wr1");
    b.conv.wr2 = ps.at(p + "conv.wr2");
    b.conv.wr3 = ps.at(p + "conv.wr3");
    b.conv.b = ps.at(p + "conv.b");
    b.conv.w1 = ps.at(p + "conv.m1.w");
    b.conv.b1 = ps.at(p + "conv.m1.b");
    b.conv.w2 = ps.at(p + "conv.m2.w");
    b.conv.b2 = ps.at(p + "conv.m2.b");
    denoiser_detail::bind_attn(ps, b.attn, p + "attn.");
    denoiser_detail::bind_ffn(ps, b.ffn_h, p + "ffnh.");
    denoiser_detail::bind_ffn(ps, b.ffn_e, p + "ffne.");
  }
  m.r_w1 = ps.at("read.1.w");
  m.r_b1 = ps.at("read.1.b");
  m.r_w2 = ps.at("read.2.w");
  m.r_b2 = ps.at("read.2.b");
  return m;
}

template <typename T>
PropertyNetT<T> make_property_net(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  return property_net_from_params<T>(
      cfg, denoiser_detail::init_params<T>(property_schema(cfg), rng));
}

// ---------- layer forwards ----------

template <typename T>
TensorT<T> gine_layer(const GineParamsT<T>& p, const TensorT<T>& H,
                      const TensorT<T>& E, const TensorT<T>& adj) {
  std::int64_t n = H.dim(0), d = H.dim(1);
  TensorT<T> ew = denoiser_detail::lin_last(E, p.ew, p.eb);  // (n,n,d)
  TensorT<T> r = relu(add(ew, reshape(H, {1, n, d})));       // H_j enters via axis 1
  TensorT<T> agg = sum_axis(masked_fill(r, adj, 0.0), 1);    // (n,d)
  TensorT<T> self = mul(H, add(p.eps0, TensorT<T>::scalar(T(1))));
  return denoiser_detail::silu_mlp(add(self, agg), p.w1, p.b1, p.w2, p.b2);
}

template <typename T>
TensorT<T> attn_layer(const AttnParamsT<T>& p, int heads, const TensorT<T>& H,
                      const TensorT<T>& E, const TensorT<T>& mask) {
  std::int64_t n = H.dim(0), d = H.dim(1);
  std::int64_t dh = d / heads;
  TensorT<T> Q = linear(H, p.qw, p.qb);
  TensorT<T> K = linear(H, p.kw, p.kb);
  TensorT<T> V = linear(H, p.vw, p.vb);
  TensorT<T> G0 = tanh(denoiser_detail::lin_last(E, p.g0w, p.g0b));
  TensorT<T> G1 = tanh(denoiser_detail::lin_last(E, p.g1w, p.g1b));
  TensorT<T> prod = mul(mul(G0, reshape(Q, {n, 1, d})), reshape(K, {1, n, d}));
  TensorT<T> logits =
      scale(sum_axis(reshape(prod, {n, n, heads, dh}), 3), 1.0 / std::sqrt(double(dh)));
  if (mask.defined()) {
    // keep columns whose mask entry is nonzero, silence the rest
    TensorT<T> colmask = reshape(mask, {1, n, 1});
    logits = masked_fill(logits, colmask, -1e30);
  }
  TensorT<T> a = softmax(logits, 1);  // over the j axis
  TensorT<T> w = mul(G1, reshape(V, {1, n, d}));
  TensorT<T> msg = sum_axis(
      mul(reshape(a, {n, n, heads, 1}), reshape(w, {n, n, heads, dh})), 1);
  return linear(reshape(msg, {n, d}), p.ow, p.ob);
}

template <typename T>
TensorT<T> ffn(const FfnParamsT<T>& p, const TensorT<T>& x) {
  return denoiser_detail::silu_mlp(layer_norm(x, p.gamma, p.beta), p.w1, p.b1, p.w2,
                                   p.b2);
}

template <typename T>
void hmpb(const BlockT<T>& blk, int heads, TensorT<T>& H, TensorT<T>& E,
          const TensorT<T>& adj) {
  std::int64_t n = H.dim(0), d = H.dim(1);
  TensorT<T> M =
      add(gine_layer(blk.gine, H, E, adj), attn_layer(blk.attn, heads, H, E));
  TensorT<T> Hn = add(H, ffn(blk.ffn_h, M));
  TensorT<T> Msum = add(reshape(M, {n, 1, d}), reshape(M, {1, n, d}));
  TensorT<T> En = add(E, ffn(blk.ffn_e, Msum));
  H = Hn;
  E = En;
}

// ---------- full forwards ----------

namespace denoiser_detail {

// crop the active n-node block of a padded state into fresh tensors; the
// edge pair tensor is (n,n,2) with the diagonal forced to zero so the model
// never sees diagonal storage conventions.
template <typename T>
void crop_state(const GraphStateT<T>& st, TensorT<T>& X, TensorT<T>& Apair,
                bool leaves) {
  std::int64_t n = st.n, F = st.feat_dim(), nm = st.n_max();
  std::int64_t plane = nm * nm;
  std::vector<T> xv(std::size_t(n * F));
  const T* sx = st.X.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t f = 0; f < F; ++f) xv[std::size_t(i * F + f)] = sx[i * F + f];
  std::vector<T> av(std::size_t(n * n * 2), T(0));
  const T* sa = st.A.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      if (i == j) continue;
      av[std::size_t((i * n + j) * 2 + 0)] = sa[i * nm + j];
      av[std::size_t((i * n + j) * 2 + 1)] = sa[plane + i * nm + j];
    }
  X = TensorT<T>::from({n, F}, std::move(xv), leaves);
  Apair = TensorT<T>::from({n, n, 2}, std::move(av), leaves);
}

}  // namespace denoiser_detail

template <typename T>
NoisePredT<T> predict_noise(const DenoiserT<T>& m, const GraphStateT<T>& st,
                            const DiscreteGraph& cond, double t) {
  const DenoiserConfig& cfg = m.cfg;
  if (st.feat_dim() != cfg.feat_dim)
    shape_fail("predict_noise", "state has " + std::to_string(st.feat_dim()) +
                                    " node features, config wants " +
                                    std::to_string(cfg.feat_dim));
  if (cond.n != st.n)
    throw std::invalid_argument("predict_noise: conditioning graph has " +
                                std::to_string(cond.n) + " nodes, state has " +
                                std::to_string(st.n));
  std::int64_t n = st.n, d = cfg.hidden_dim, F = cfg.feat_dim, nm = st.n_max();

  TensorT<T> X, Apair;
  denoiser_detail::crop_state(st, X, Apair, false);
  TensorT<T> rwf = rw_encodings<T>(cond, cfg.rw_steps);
  std::vector<int> spd = spd_encodings(cond, cfg.rw_steps);
  std::vector<std::int64_t> spd_idx(spd.begin(), spd.end());
  std::vector<std::uint8_t> adjv = cond.adjacency();
  std::vector<T> adjt(adjv.begin(), adjv.end());
  TensorT<T> adj = TensorT<T>::from({n, n, 1}, std::move(adjt));

  TensorT<T> tv = denoiser_detail::time_features(t, cfg.hidden_dim, m.t_w1, m.t_b1,
                                                 m.t_w2, m.t_b2);
  TensorT<T> H = add(add(linear(X, m.x_w, m.x_b), linear(rwf, m.rw_w, m.rw_b)), tv);
  TensorT<T> E = add(add(denoiser_detail::lin_last(Apair, m.a_w, m.a_b),
                         reshape(gather_rows(m.spd_table, spd_idx), {n, n, d})),
                     tv);
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    hmpb(m.blocks[l], cfg.num_heads, H, E, adj);
    if (!all_finite(H) || !all_finite(E))
      throw std::runtime_error("denoiser: non-finite activations in block " +
                               std::to_string(l));
  }
  TensorT<T> ex = denoiser_detail::silu_mlp(H, m.hx_w1, m.hx_b1, m.hx_w2, m.hx_b2);
  TensorT<T> ea = denoiser_detail::silu_mlp(E, m.he_w1, m.he_b1, m.he_w2, m.he_b2);
  ea = scale(add(ea, swapaxes(ea, 0, 1)), 0.5);
  std::vector<T> od(std::size_t(n * n), T(1));
  for (std::int64_t i = 0; i < n; ++i) od[std::size_t(i * n + i)] = T(0);
  ea = masked_fill(ea, TensorT<T>::from({n, n, 1}, std::move(od)), 0.0);
  TensorT<T> ea_c = swapaxes(ea, 0, 2);  // (2,n,n); equal to its transpose
  if (n < nm) {
    std::vector<TensorT<T>> px{ex, TensorT<T>::zeros({nm - n, F})};
    ex = concat(px, 0);
    std::vector<TensorT<T>> pc{ea_c, TensorT<T>::zeros({2, n, nm - n})};
    ea_c = concat(pc, 2);
    std::vector<TensorT<T>> pr{ea_c, TensorT<T>::zeros({2, nm - n, nm})};
    ea_c = concat(pr, 1);
  }
  return {ex, ea_c};
}

namespace denoiser_detail {

template <typename T>
TensorT<T> rel_conv(const RelConvParamsT<T>& p, const TensorT<T>& H,
                    const TensorT<T>& A0, const TensorT<T>& A1,
                    const ScaleSpec& sc) {
  TensorT<T> e = add(mul(A0, p.aex), p.bex);  // continuous existence weight
  const double s = 1.0 / 3.0;
  TensorT<T> pre = linear(H, p.ws, p.b);
  const TensorT<T>* wr[3] = {&p.wr1, &p.wr2, &p.wr3};
  for (int r = 1; r <= kNumEdgeTypes; ++r) {
    double centre = detail::edge_level(r, sc);
    TensorT<T> bump = exp(
        scale(square(sub(A1, TensorT<T>::scalar(T(centre)))), -1.0 / (2.0 * s * s)));
    TensorT<T> c = mul(e, bump);                                // (n,n)
    pre = add(pre, matmul(c, matmul(H, *wr[std::size_t(r - 1)])));
  }
  return silu_mlp(pre, p.w1, p.b1, p.w2, p.b2);
}

template <typename T>
void prop_hmpb(const PropBlockT<T>& blk, int heads, TensorT<T>& H, TensorT<T>& E,
               const TensorT<T>& A0, const TensorT<T>& A1, const ScaleSpec& sc) {
  std::int64_t n = H.dim(0), d = H.dim(1);
  TensorT<T> M =
      add(rel_conv(blk.conv, H, A0, A1, sc), attn_layer(blk.attn, heads, H, E));
  TensorT<T> Hn = add(H, ffn(blk.ffn_h, M));
  TensorT<T> Msum = add(reshape(M, {n, 1, d}), reshape(M, {1, n, d}));
  TensorT<T> En = add(E, ffn(blk.ffn_e, Msum));
  H = Hn;
  E = En;
}

}  // namespace denoiser_detail

template <typename T>
PropertyOutT<T> predict_property(const PropertyNetT<T>& m, const GraphStateT<T>& st,
                                 double t) {
  const DenoiserConfig& cfg = m.cfg;
  if (st.feat_dim() != cfg.feat_dim)
    shape_fail("predict_property", "state has " + std::to_string(st.feat_dim()) +
                                       " node features, config wants " +
                                       std::to_string(cfg.feat_dim));
  std::int64_t n = st.n, d = cfg.hidden_dim, nm = st.n_max();
  std::int64_t plane = nm * nm;
  ScaleSpec sc;

  // separate leaf tensors for the two edge channels so callers can read
  // gradients with respect to each
  std::int64_t F = st.feat_dim();
  std::vector<T> xv(std::size_t(n * F));
  const T* sx = st.X.data();
  for (std::int64_t i = 0; i < n * F; ++i) xv[std::size_t(i)] = sx[i];
  std::vector<T> a0v(std::size_t(n * n), T(0)), a1v(std::size_t(n * n), T(0));
  const T* sa = st.A.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      if (i == j) continue;
      a0v[std::size_t(i * n + j)] = sa[i * nm + j];
      a1v[std::size_t(i * n + j)] = sa[plane + i * nm + j];
    }
  TensorT<T> X = TensorT<T>::from({n, F}, std::move(xv), true);
  TensorT<T> A0 = TensorT<T>::from({n, n}, std::move(a0v), true);
  TensorT<T> A1 = TensorT<T>::from({n, n}, std::move(a1v), true);

  TensorT<T> tv = denoiser_detail::time_features(t, cfg.hidden_dim, m.t_w1, m.t_b1,
                                                 m.t_w2, m.t_b2);
  TensorT<T> H = add(linear(X, m.x_w, m.x_b), tv);
  std::vector<TensorT<T>> chans{reshape(A0, {n, n, 1}), reshape(A1, {n, n, 1})};
  TensorT<T> pair = concat(chans, 2);
  TensorT<T> E = add(denoiser_detail::lin_last(pair, m.a_w, m.a_b), tv);
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    denoiser_detail::prop_hmpb(m.blocks[l], cfg.num_heads, H, E, A0, A1, sc);
    if (!all_finite(H) || !all_finite(E))
      throw std::runtime_error("property net: non-finite activations in block " +
                               std::to_string(l));
  }
  TensorT<T> pooled = reshape(mean_axis(H, 0), {1, d});
  TensorT<T> val = linear(silu(linear(pooled, m.r_w1, m.r_b1)), m.r_w2, m.r_b2);
  return {reshape(val, {1}), X, A0, A1};
}

}  // namespace gdiff
