#include "trainer_impl.hpp"

namespace gdiff {

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("batch_size", "must be positive");
  if (total_steps < 0) throw ConfigError("total_steps", "must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0))
    throw ConfigError("ema_decay", "must lie in (0,1)");
  if (precision != "f32" && precision != "f64")
    throw ConfigError("precision", "must be f32 or f64, got '" + precision + "'");
  if (checkpoint_every <= 0) throw ConfigError("checkpoint_every", "must be positive");
  if (!(t_floor > 0.0 && t_floor < 1.0))
    throw ConfigError("t_floor", "must lie in (0,1)");
}

template NoiseDraw<float> draw_noise(const GraphStateT<float>&, double, Rng&);
template NoiseDraw<double> draw_noise(const GraphStateT<double>&, double, Rng&);
template TensorT<float> graph_denoise_loss(const DenoiserT<float>&, const NoiseSchedule&,
                                           const GraphStateT<float>&,
                                           const NoiseDraw<float>&, const ScaleSpec&);
template TensorT<double> graph_denoise_loss(const DenoiserT<double>&,
                                            const NoiseSchedule&,
                                            const GraphStateT<double>&,
                                            const NoiseDraw<double>&, const ScaleSpec&);
template TensorT<float> graph_property_loss(const PropertyNetT<float>&,
                                            const NoiseSchedule&,
                                            const GraphStateT<float>&, double,
                                            const NoiseDraw<float>&);
template TensorT<double> graph_property_loss(const PropertyNetT<double>&,
                                             const NoiseSchedule&,
                                             const GraphStateT<double>&, double,
                                             const NoiseDraw<double>&);
template double batch_loss_grads(const DenoiserT<float>&, const NoiseSchedule&,
                                 const std::vector<GraphStateT<float>>&,
                                 const std::vector<int>&, double, const ScaleSpec&,
                                 Rng&, std::vector<std::vector<float>>&);
template double batch_loss_grads(const DenoiserT<double>&, const NoiseSchedule&,
                                 const std::vector<GraphStateT<double>>&,
                                 const std::vector<int>&, double, const ScaleSpec&,
                                 Rng&, std::vector<std::vector<double>>&);
template double batch_property_loss_grads(const PropertyNetT<float>&,
                                          const NoiseSchedule&,
                                          const std::vector<GraphStateT<float>>&,
                                          const std::vector<double>&,
                                          const std::vector<int>&, double, Rng&,
                                          std::vector<std::vector<float>>&);
template double batch_property_loss_grads(const PropertyNetT<double>&,
                                          const NoiseSchedule&,
                                          const std::vector<GraphStateT<double>>&,
                                          const std::vector<double>&,
                                          const std::vector<int>&, double, Rng&,
                                          std::vector<std::vector<double>>&);
template void ema_update(const ParamSetT<float>&, ParamSetT<float>&, double);
template void ema_update(const ParamSetT<double>&, ParamSetT<double>&, double);
template TrainReport train_denoiser<float>(const DenoiserConfig&, const TrainConfig&,
                                           const NoiseSchedule&,
                                           const std::vector<DiscreteGraph>&,
                                           const std::string&, const ScaleSpec&,
                                           const nlohmann::json&);
template TrainReport train_denoiser<double>(const DenoiserConfig&, const TrainConfig&,
                                            const NoiseSchedule&,
                                            const std::vector<DiscreteGraph>&,
                                            const std::string&, const ScaleSpec&,
                                            const nlohmann::json&);
template TrainReport train_property<float>(const DenoiserConfig&, const TrainConfig&,
                                           const NoiseSchedule&,
                                           const std::vector<DiscreteGraph>&,
                                           const std::vector<double>&,
                                           const std::string&, const ScaleSpec&,
                                           const nlohmann::json&);
template TrainReport train_property<double>(const DenoiserConfig&, const TrainConfig&,
                                            const NoiseSchedule&,
                                            const std::vector<DiscreteGraph>&,
                                            const std::vector<double>&,
                                            const std::string&, const ScaleSpec&,
                                            const nlohmann::json&);

}  // namespace gdiff
