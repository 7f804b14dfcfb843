#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdiff/rng.hpp"
#include "gdiff/tensor.hpp"

namespace gdiff {

// A discrete undirected graph: typed nodes, typed edges (0 = absent,
// 1..3 = bond order for molecules, 1 for generic structure-only graphs).
struct DiscreteGraph {
  int n = 0;
  std::vector<int> node_types;  // length n
  std::vector<int> edge_types;  // n*n row-major, symmetric, zero diagonal

  DiscreteGraph() = default;
  explicit DiscreteGraph(int nodes)
      : n(nodes), node_types(std::size_t(nodes), 0),
        edge_types(std::size_t(nodes) * std::size_t(nodes), 0) {}

  int edge(int i, int j) const { return edge_types[std::size_t(i) * n + j]; }
  void set_edge(int i, int j, int type) {
    edge_types[std::size_t(i) * n + j] = type;
    edge_types[std::size_t(j) * n + i] = type;
  }
  bool has_edge(int i, int j) const { return edge(i, j) != 0; }
  int degree(int i) const;
  std::vector<std::uint8_t> adjacency() const;  // n*n, 1 where an edge exists

  // throws std::invalid_argument on asymmetry, self-loops, bad type range
  void validate(int max_node_type = -1) const;

  bool operator==(const DiscreteGraph& o) const {
    return n == o.n && node_types == o.node_types && edge_types == o.edge_types;
  }
};

// Affine ranges used to place discrete values on the real line.
struct ScaleSpec {
  double node_lo = -0.5, node_hi = 0.5;
  double edge_lo = -1.0, edge_hi = 1.0;
};

// Real-valued diffusion state of one graph, padded to n_max nodes.
// X: n_max x F node features; A: 2 x n_max x n_max (channel 0 existence,
// channel 1 type); entries outside the active n x n block are zero.
template <typename T>
struct GraphStateT {
  TensorT<T> X;
  TensorT<T> A;
  int n = 0;

  int n_max() const { return int(X.dim(0)); }
  int feat_dim() const { return int(X.dim(1)); }
};

using GraphState = GraphStateT<double>;

constexpr int kNumEdgeTypes = 3;  // bond orders 1..3

// --- discrete <-> continuous -------------------------------------------------

namespace detail {
inline double node_level(int bit, const ScaleSpec& s) {
  return bit ? s.node_hi : s.node_lo;
}
inline double edge_level(int type, const ScaleSpec& s) {
  // ordinal 0..3 placed affinely across [edge_lo, edge_hi]
  return s.edge_lo + (double(type) / kNumEdgeTypes) * (s.edge_hi - s.edge_lo);
}
}  // namespace detail

template <typename T>
GraphStateT<T> encode(const DiscreteGraph& g, const ScaleSpec& scale, int n_max,
                      int feat_dim) {
  if (g.n > n_max)
    throw std::invalid_argument("encode: graph has " + std::to_string(g.n) +
                                " nodes, capacity " + std::to_string(n_max));
  g.validate(feat_dim - 1);
  GraphStateT<T> st;
  st.n = g.n;
  st.X = TensorT<T>::zeros({n_max, feat_dim});
  st.A = TensorT<T>::zeros({2, n_max, n_max});
  T* px = st.X.mutable_data();
  T* pa = st.A.mutable_data();
  std::int64_t plane = std::int64_t(n_max) * n_max;
  for (int i = 0; i < g.n; ++i)
    for (int f = 0; f < feat_dim; ++f)
      px[std::int64_t(i) * feat_dim + f] =
          T(detail::node_level(g.node_types[std::size_t(i)] == f ? 1 : 0, scale));
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) {
      int ty = i == j ? 0 : g.edge(i, j);
      pa[std::int64_t(i) * n_max + j] = T(ty != 0 ? scale.edge_hi : scale.edge_lo);
      pa[plane + std::int64_t(i) * n_max + j] = T(detail::edge_level(ty, scale));
    }
  return st;
}

// Nearest-level rounding of a continuous state back to a discrete graph.
// Channels are symmetrized by averaging before thresholding; existence uses
// the midpoint of the edge scale with ties broken to absence; the diagonal is
// ignored. Node types are the arg-max feature column.
template <typename T>
DiscreteGraph quantize(const GraphStateT<T>& st, const ScaleSpec& scale) {
  DiscreteGraph g(st.n);
  int nm = st.n_max(), fd = st.feat_dim();
  const T* px = st.X.data();
  const T* pa = st.A.data();
  std::int64_t plane = std::int64_t(nm) * nm;
  for (int i = 0; i < st.n; ++i) {
    int best = 0;
    double bv = double(px[std::int64_t(i) * fd]);
    for (int f = 1; f < fd; ++f) {
      double v = double(px[std::int64_t(i) * fd + f]);
      if (v > bv) { bv = v; best = f; }
    }
    g.node_types[std::size_t(i)] = best;
  }
  double mid = 0.5 * (scale.edge_lo + scale.edge_hi);
  for (int i = 0; i < st.n; ++i)
    for (int j = i + 1; j < st.n; ++j) {
      double ex = 0.5 * (double(pa[std::int64_t(i) * nm + j]) +
                         double(pa[std::int64_t(j) * nm + i]));
      if (!(ex > mid)) continue;
      double tv = 0.5 * (double(pa[plane + std::int64_t(i) * nm + j]) +
                         double(pa[plane + std::int64_t(j) * nm + i]));
      int best = 1;
      double bd = std::abs(tv - detail::edge_level(1, scale));
      for (int ty = 2; ty <= kNumEdgeTypes; ++ty) {
        double d = std::abs(tv - detail::edge_level(ty, scale));
        if (d < bd) { bd = d; best = ty; }
      }
      g.set_edge(i, j, best);
    }
  return g;
}

template <typename T>
DiscreteGraph decode(const GraphStateT<T>& st, const ScaleSpec& scale) {
  return quantize(st, scale);
}

// --- structural encodings ----------------------------------------------------

// Return probabilities diag((D^-1 A)^k), k = 1..m; rows of isolated nodes are
// zero. Result is n x m.
std::vector<double> rw_return_probs(const DiscreteGraph& g, int m);

template <typename T>
TensorT<T> rw_encodings(const DiscreteGraph& g, int m) {
  std::vector<double> probs = rw_return_probs(g, m);
  TensorT<T> out = TensorT<T>::zeros({g.n, m});
  T* p = out.mutable_data();
  for (std::size_t i = 0; i < probs.size(); ++i) p[i] = T(probs[i]);
  return out;
}

// Truncated shortest-path categories, n*n row-major: self = 0, reachable
// pairs = min(hops, m), unreachable = m+1. Feed these into a table of m+2
// embeddings.
std::vector<int> spd_encodings(const DiscreteGraph& g, int m);

// --- permutation -------------------------------------------------------------

// perm maps old index -> new index over the active nodes.
void check_permutation(const std::vector<int>& perm, int n);

DiscreteGraph permute(const DiscreteGraph& g, const std::vector<int>& perm);

template <typename T>
GraphStateT<T> permute(const GraphStateT<T>& st, const std::vector<int>& perm) {
  check_permutation(perm, st.n);
  GraphStateT<T> out;
  out.n = st.n;
  int nm = st.n_max(), fd = st.feat_dim();
  out.X = TensorT<T>::zeros({nm, fd});
  out.A = TensorT<T>::zeros({2, nm, nm});
  const T* px = st.X.data();
  const T* pa = st.A.data();
  T* qx = out.X.mutable_data();
  T* qa = out.A.mutable_data();
  std::int64_t plane = std::int64_t(nm) * nm;
  auto to = [&](int i) { return i < st.n ? perm[std::size_t(i)] : i; };
  for (int i = 0; i < nm; ++i)
    for (int f = 0; f < fd; ++f)
      qx[std::int64_t(to(i)) * fd + f] = px[std::int64_t(i) * fd + f];
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < nm; ++i)
      for (int j = 0; j < nm; ++j)
        qa[c * plane + std::int64_t(to(i)) * nm + to(j)] =
            pa[c * plane + std::int64_t(i) * nm + j];
  return out;
}

// --- noise -------------------------------------------------------------------

// Unit-variance Gaussian noise shaped like a graph state: node noise on the
// active rows, edge noise symmetrized as (Z + Z^T)/sqrt(2) with zero diagonal,
// everything outside the active block zero.
template <typename T>
GraphStateT<T> noise_like(const GraphStateT<T>& st, Rng& rng) {
  GraphStateT<T> out;
  out.n = st.n;
  int nm = st.n_max(), fd = st.feat_dim();
  out.X = TensorT<T>::zeros({nm, fd});
  out.A = TensorT<T>::zeros({2, nm, nm});
  T* px = out.X.mutable_data();
  T* pa = out.A.mutable_data();
  for (int i = 0; i < st.n; ++i)
    for (int f = 0; f < fd; ++f) px[std::int64_t(i) * fd + f] = T(rng.normal());
  std::int64_t plane = std::int64_t(nm) * nm;
  const double inv_sqrt2 = 0.7071067811865476;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < st.n; ++i)
      for (int j = i + 1; j < st.n; ++j) {
        double z = (rng.normal() + rng.normal()) * inv_sqrt2;
        pa[c * plane + std::int64_t(i) * nm + j] = T(z);
        pa[c * plane + std::int64_t(j) * nm + i] = T(z);
      }
  return out;
}

// Empty state of the given geometry (useful as a noise_like template).
template <typename T>
GraphStateT<T> empty_state(int n_max, int feat_dim, int n) {
  if (n < 1 || n > n_max)
    throw std::invalid_argument("empty_state: node count " + std::to_string(n) +
                                " outside [1, " + std::to_string(n_max) + "]");
  GraphStateT<T> st;
  st.n = n;
  st.X = TensorT<T>::zeros({n_max, feat_dim});
  st.A = TensorT<T>::zeros({2, n_max, n_max});
  return st;
}

// --- node-count statistics ---------------------------------------------------

struct NodeCountHist {
  std::vector<std::int64_t> counts;  // index = node count

  void add(int n);
  std::int64_t total() const;
  int sample(Rng& rng) const;  // throws std::runtime_error when empty
  int max_count() const;       // largest n with nonzero mass
};

// --- dataset text format -----------------------------------------------------
//
//   N <n>
//   V <type-0> ... <type-{n-1}>
//   E <i> <j> <type>     (one line per edge, i < j)
//
// Graphs are separated by a blank line. Writing is canonical (sorted edges),
// and read(write(x)) == x exactly.

std::string write_graphs(const std::vector<DiscreteGraph>& gs);
std::vector<DiscreteGraph> read_graphs(const std::string& text);
void save_graphs(const std::string& path, const std::vector<DiscreteGraph>& gs);
std::vector<DiscreteGraph> load_graphs(const std::string& path);

}  // namespace gdiff
