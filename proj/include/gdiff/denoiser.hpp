#pragma once

#include <map>
#include <string>
#include <vector>

#include "gdiff/common.hpp"
#include "gdiff/graph.hpp"
#include "gdiff/rng.hpp"
#include "gdiff/tensor.hpp"

namespace gdiff {

// Geometry of the noise-prediction network and its property-predictor sibling.
struct DenoiserConfig {
  int num_blocks = 3;
  int hidden_dim = 64;
  int num_heads = 8;
  int rw_steps = 16;   // random-walk feature count and shortest-path cutoff
  int feat_dim = 1;    // node-type alphabet size F
  int n_max = 20;

  void validate() const;  // throws ConfigError naming the offending field
};

// Ordered, named collection of learnable tensors. Iteration order is
// construction order and is the canonical order for optimizer sweeps and
// serialization.
template <typename T>
class ParamSetT {
 public:
  TensorT<T>& add(const std::string& name, TensorT<T> t);
  const TensorT<T>& at(const std::string& name) const;
  TensorT<T>& at(const std::string& name);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const TensorT<T>& tensor(std::size_t i) const { return tensors_[i]; }
  TensorT<T>& tensor(std::size_t i) { return tensors_[i]; }
  std::int64_t scalar_count() const;
  ParamSetT<T> clone() const;  // deep copy, same names and order

 private:
  std::vector<std::string> names_;
  std::vector<TensorT<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

// --- layer parameter bundles (handles alias the owning ParamSet) -------------

template <typename T>
struct GineParamsT {
  TensorT<T> eps0, ew, eb, w1, b1, w2, b2;
};

template <typename T>
struct AttnParamsT {
  TensorT<T> qw, qb, kw, kb, vw, vb, g0w, g0b, g1w, g1b, ow, ob;
};

template <typename T>
struct FfnParamsT {
  TensorT<T> gamma, beta, w1, b1, w2, b2;
};

template <typename T>
struct RelConvParamsT {
  TensorT<T> aex, bex;           // affine existence weight from channel 0
  TensorT<T> ws, wr1, wr2, wr3;  // self + per-bond-order message weights
  TensorT<T> b, w1, b1, w2, b2;  // bias + output MLP
};

template <typename T>
struct BlockT {
  GineParamsT<T> gine;
  AttnParamsT<T> attn;
  FfnParamsT<T> ffn_h, ffn_e;
};

template <typename T>
struct PropBlockT {
  RelConvParamsT<T> conv;
  AttnParamsT<T> attn;
  FfnParamsT<T> ffn_h, ffn_e;
};

// Noise-prediction model: parameter store plus structured views of it.
template <typename T>
struct DenoiserT {
  DenoiserConfig cfg;
  ParamSetT<T> params;
  // input embedders
  TensorT<T> x_w, x_b, rw_w, rw_b, a_w, a_b, spd_table;
  TensorT<T> t_w1, t_b1, t_w2, t_b2;
  std::vector<BlockT<T>> blocks;
  // output heads (final layers zero-initialized)
  TensorT<T> hx_w1, hx_b1, hx_w2, hx_b2;
  TensorT<T> he_w1, he_b1, he_w2, he_b2;
};

// Property-prediction model R(G_t, t): dense relational convolution in place
// of the discrete-neighbourhood branch so the output is differentiable in A.
template <typename T>
struct PropertyNetT {
  DenoiserConfig cfg;
  ParamSetT<T> params;
  TensorT<T> x_w, x_b, a_w, a_b;
  TensorT<T> t_w1, t_b1, t_w2, t_b2;
  std::vector<PropBlockT<T>> blocks;
  TensorT<T> r_w1, r_b1, r_w2, r_b2;
};

template <typename T>
DenoiserT<T> make_denoiser(const DenoiserConfig& cfg, Rng& rng);
template <typename T>
DenoiserT<T> denoiser_from_params(const DenoiserConfig& cfg, ParamSetT<T> params);
template <typename T>
PropertyNetT<T> make_property_net(const DenoiserConfig& cfg, Rng& rng);
template <typename T>
PropertyNetT<T> property_net_from_params(const DenoiserConfig& cfg, ParamSetT<T> params);

// Sinusoidal position embedding evaluated at position floor(1000 t).
std::vector<double> time_sinusoid(double t, int dim);

// --- layer forwards (exposed for direct testing) -----------------------------

// out_i = MLP((1 + eps0) H_i + sum_{j adjacent} relu(H_j + W_e E_ij + b_e))
template <typename T>
TensorT<T> gine_layer(const GineParamsT<T>& p, const TensorT<T>& H,
                      const TensorT<T>& E, const TensorT<T>& adj);

// Gated multi-head attention; E supplies both gates. `mask` (n,1) keeps rows
// with nonzero entries in the softmax; empty mask = all nodes.
template <typename T>
TensorT<T> attn_layer(const AttnParamsT<T>& p, int heads, const TensorT<T>& H,
                      const TensorT<T>& E, const TensorT<T>& mask = {});

// FFN(x) = W2 silu(W1 LN(x) + b1) + b2 applied to the last axis.
template <typename T>
TensorT<T> ffn(const FfnParamsT<T>& p, const TensorT<T>& x);

// One hybrid block: M = gine + attn; H' = H + FFN_h(M); E'_ij = E_ij +
// FFN_e(M_i + M_j).
template <typename T>
void hmpb(const BlockT<T>& blk, int heads, TensorT<T>& H, TensorT<T>& E,
          const TensorT<T>& adj);

// --- full model forwards -----------------------------------------------------

template <typename T>
struct NoisePredT {
  TensorT<T> eps_x;  // n_max x F
  TensorT<T> eps_a;  // 2 x n_max x n_max, symmetric, zero diagonal
};

// cond must be quantize(state): it supplies the discrete conditioning
// structure (adjacency, random-walk and shortest-path features).
template <typename T>
NoisePredT<T> predict_noise(const DenoiserT<T>& model, const GraphStateT<T>& state,
                            const DiscreteGraph& cond, double t);

template <typename T>
struct PropertyOutT {
  TensorT<T> value;                  // scalar
  TensorT<T> x_leaf, a0_leaf, a1_leaf;  // cropped inputs; read gradients here
};

template <typename T>
PropertyOutT<T> predict_property(const PropertyNetT<T>& model,
                                 const GraphStateT<T>& state, double t);

extern template class ParamSetT<float>;
extern template class ParamSetT<double>;
extern template DenoiserT<float> make_denoiser<float>(const DenoiserConfig&, Rng&);
extern template DenoiserT<double> make_denoiser<double>(const DenoiserConfig&, Rng&);
extern template DenoiserT<float> denoiser_from_params<float>(const DenoiserConfig&, ParamSetT<float>);
extern template DenoiserT<double> denoiser_from_params<double>(const DenoiserConfig&, ParamSetT<double>);
extern template PropertyNetT<float> make_property_net<float>(const DenoiserConfig&, Rng&);
extern template PropertyNetT<double> make_property_net<double>(const DenoiserConfig&, Rng&);
extern template PropertyNetT<float> property_net_from_params<float>(const DenoiserConfig&, ParamSetT<float>);
extern template PropertyNetT<double> property_net_from_params<double>(const DenoiserConfig&, ParamSetT<double>);
extern template TensorT<float> gine_layer<float>(const GineParamsT<float>&, const TensorT<float>&, const TensorT<float>&, const TensorT<float>&);
extern template TensorT<double> gine_layer<double>(const GineParamsT<double>&, const TensorT<double>&, const TensorT<double>&, const TensorT<double>&);
extern template TensorT<float> attn_layer<float>(const AttnParamsT<float>&, int, const TensorT<float>&, const TensorT<float>&, const TensorT<float>&);
extern template TensorT<double> attn_layer<double>(const AttnParamsT<double>&, int, const TensorT<double>&, const TensorT<double>&, const TensorT<double>&);
extern template TensorT<float> ffn<float>(const FfnParamsT<float>&, const TensorT<float>&);
extern template TensorT<double> ffn<double>(const FfnParamsT<double>&, const TensorT<double>&);
extern template void hmpb<float>(const BlockT<float>&, int, TensorT<float>&, TensorT<float>&, const TensorT<float>&);
extern template void hmpb<double>(const BlockT<double>&, int, TensorT<double>&, TensorT<double>&, const TensorT<double>&);
extern template NoisePredT<float> predict_noise<float>(const DenoiserT<float>&, const GraphStateT<float>&, const DiscreteGraph&, double);
extern template NoisePredT<double> predict_noise<double>(const DenoiserT<double>&, const GraphStateT<double>&, const DiscreteGraph&, double);
extern template PropertyOutT<float> predict_property<float>(const PropertyNetT<float>&, const GraphStateT<float>&, double);
extern template PropertyOutT<double> predict_property<double>(const PropertyNetT<double>&, const GraphStateT<double>&, double);

}  // namespace gdiff
