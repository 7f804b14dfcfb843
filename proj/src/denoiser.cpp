#include "denoiser_impl.hpp"

namespace gdiff {

void DenoiserConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError(field, msg);
  };
  if (num_blocks < 1) fail("num_blocks", "must be >= 1");
  if (hidden_dim < 1) fail("hidden_dim", "must be >= 1");
  if (num_heads < 1) fail("num_heads", "must be >= 1");
  if (hidden_dim % num_heads != 0)
    fail("hidden_dim", "must be divisible by num_heads (" +
                           std::to_string(hidden_dim) + " vs " +
                           std::to_string(num_heads) + ")");
  if (rw_steps < 1) fail("rw_steps", "must be >= 1");
  if (feat_dim < 1) fail("feat_dim", "must be >= 1");
  if (n_max < 1) fail("n_max", "must be >= 1");
}

std::vector<double> time_sinusoid(double t, int dim) {
  if (dim < 1) throw std::invalid_argument("time_sinusoid: dim must be >= 1");
  std::vector<double> e(std::size_t(dim), 0.0);
  double pos = std::floor(1000.0 * t);
  for (int i = 0; 2 * i < dim; ++i) {
    double freq = std::pow(10000.0, -2.0 * i / dim);
    e[std::size_t(2 * i)] = std::sin(pos * freq);
    if (2 * i + 1 < dim) e[std::size_t(2 * i + 1)] = std::cos(pos * freq);
  }
  return e;
}

template class ParamSetT<float>;
template class ParamSetT<double>;
template DenoiserT<float> make_denoiser<float>(const DenoiserConfig&, Rng&);
template DenoiserT<double> make_denoiser<double>(const DenoiserConfig&, Rng&);
template DenoiserT<float> denoiser_from_params<float>(const DenoiserConfig&, ParamSetT<float>);
template DenoiserT<double> denoiser_from_params<double>(const DenoiserConfig&, ParamSetT<double>);
template PropertyNetT<float> make_property_net<float>(const DenoiserConfig&, Rng&);
template PropertyNetT<double> make_property_net<double>(const DenoiserConfig&, Rng&);
template PropertyNetT<float> property_net_from_params<float>(const DenoiserConfig&, ParamSetT<float>);
template PropertyNetT<double> property_net_from_params<double>(const DenoiserConfig&, ParamSetT<double>);
template TensorT<float> gine_layer<float>(const GineParamsT<float>&, const TensorT<float>&, const TensorT<float>&, const TensorT<float>&);
template TensorT<double> gine_layer<double>(const GineParamsT<double>&, const TensorT<double>&, const TensorT<double>&, const TensorT<double>&);
template TensorT<float> attn_layer<float>(const AttnParamsT<float>&, int, const TensorT<float>&, const TensorT<float>&, const TensorT<float>&);
template TensorT<double> attn_layer<double>(const AttnParamsT<double>&, int, const TensorT<double>&, const TensorT<double>&, const TensorT<double>&);
template TensorT<float> ffn<float>(const FfnParamsT<float>&, const TensorT<float>&);
template TensorT<double> ffn<double>(const FfnParamsT<double>&, const TensorT<double>&);
template void hmpb<float>(const BlockT<float>&, int, TensorT<float>&, TensorT<float>&, const TensorT<float>&);
template void hmpb<double>(const BlockT<double>&, int, TensorT<double>&, TensorT<double>&, const TensorT<double>&);
template NoisePredT<float> predict_noise<float>(const DenoiserT<float>&, const GraphStateT<float>&, const DiscreteGraph&, double);
template NoisePredT<double> predict_noise<double>(const DenoiserT<double>&, const GraphStateT<double>&, const DiscreteGraph&, double);
template PropertyOutT<float> predict_property<float>(const PropertyNetT<float>&, const GraphStateT<float>&, double);
template PropertyOutT<double> predict_property<double>(const PropertyNetT<double>&, const GraphStateT<double>&, double);

}  // namespace gdiff
