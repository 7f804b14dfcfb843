#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gdiff/adam.hpp"
#include "gdiff/checkpoint.hpp"
#include "gdiff/denoiser.hpp"
#include "gdiff/graph.hpp"
#include "gdiff/rng.hpp"
#include "gdiff/schedule.hpp"

namespace gdiff {

struct TrainConfig {
  int batch_size = 64;
  std::int64_t total_steps = 1000;
  double lr = 1e-4;
  double ema_decay = 0.9999;
  std::uint64_t seed = 0;
  std::string precision = "f64";  // f32 | f64
  std::string dataset;            // path of a graphs file, when loaded externally
  std::int64_t checkpoint_every = 1000;
  double t_floor = 1e-5;

  void validate() const;  // throws ConfigError naming the field
};

// One training draw for a graph: the shared time and the symmetric noise.
template <typename T>
struct NoiseDraw {
  double t = 0.0;
  GraphStateT<T> eps;
};

// Draws t uniformly from (t_floor, 1], then unit noise shaped like `st`
// (symmetric edge part, zero diagonal and padding). The time is always drawn
// before the noise so streams replay identically.
template <typename T>
NoiseDraw<T> draw_noise(const GraphStateT<T>& st, double t_floor, Rng& rng);

// Squared-error denoising objective for one graph under an arbitrary noise
// predictor, on tape. The perturbed state is quantized to provide the
// discrete conditioning. The result is the squared residual summed over
// active entries, divided by their count (node features plus off-diagonal
// edge entries of both channels).
template <typename T, typename Pred>
TensorT<T> denoise_loss_with(Pred&& predict, const NoiseSchedule& sched,
                             const GraphStateT<T>& clean, const NoiseDraw<T>& d,
                             const ScaleSpec& sc) {
  GraphStateT<T> noisy;
  noisy.n = clean.n;
  noisy.X = perturb(sched, clean.X, d.t, d.eps.X);
  noisy.A = perturb(sched, clean.A, d.t, d.eps.A);
  DiscreteGraph cond = quantize(noisy, sc);
  NoisePredT<T> p = predict(noisy, cond, d.t);
  TensorT<T> lx = sum_all(square(sub(p.eps_x, d.eps.X)));
  TensorT<T> la = sum_all(square(sub(p.eps_a, d.eps.A)));
  double valid = double(clean.n) * clean.feat_dim() +
                 2.0 * double(clean.n) * double(clean.n - 1);
  return scale(add(lx, la), 1.0 / valid);
}

template <typename T>
TensorT<T> graph_denoise_loss(const DenoiserT<T>& m, const NoiseSchedule& sched,
                              const GraphStateT<T>& clean, const NoiseDraw<T>& d,
                              const ScaleSpec& sc);

// Squared regression error of the property head on the perturbed graph.
template <typename T>
TensorT<T> graph_property_loss(const PropertyNetT<T>& m, const NoiseSchedule& sched,
                               const GraphStateT<T>& clean, double label,
                               const NoiseDraw<T>& d);

// Mean loss over the batch; parameter gradients of the mean are accumulated
// into `grads` (zeroed first; same order as m.params). Draws consume `rng`
// in batch order: (t, eps) per graph.
template <typename T>
double batch_loss_grads(const DenoiserT<T>& m, const NoiseSchedule& sched,
                        const std::vector<GraphStateT<T>>& data,
                        const std::vector<int>& batch, double t_floor,
                        const ScaleSpec& sc, Rng& rng,
                        std::vector<std::vector<T>>& grads);

template <typename T>
double batch_property_loss_grads(const PropertyNetT<T>& m, const NoiseSchedule& sched,
                                 const std::vector<GraphStateT<T>>& data,
                                 const std::vector<double>& labels,
                                 const std::vector<int>& batch, double t_floor,
                                 Rng& rng, std::vector<std::vector<T>>& grads);

// ema <- decay * ema + (1 - decay) * params, elementwise over every tensor.
template <typename T>
void ema_update(const ParamSetT<T>& params, ParamSetT<T>& ema, double decay);

struct TrainReport {
  double first_loss = 0.0;
  double final_loss = 0.0;
  std::int64_t steps = 0;
  std::string final_checkpoint;
};

// Full denoiser optimization: epoch-shuffled batches, Adam, EMA tracking,
// `step_<n>.ckpt` files at the cadence (step 0 and the final step always),
// and a `loss.tsv` log (step, loss, wall seconds) in out_dir. Deterministic:
// every random stream is forked from cfg.seed.
template <typename T>
TrainReport train_denoiser(const DenoiserConfig& dcfg, const TrainConfig& cfg,
                           const NoiseSchedule& sched,
                           const std::vector<DiscreteGraph>& graphs,
                           const std::string& out_dir,
                           const ScaleSpec& sc = ScaleSpec{},
                           const nlohmann::json& extra_meta = {});

// Same loop for the time-dependent property regressor.
template <typename T>
TrainReport train_property(const DenoiserConfig& dcfg, const TrainConfig& cfg,
                           const NoiseSchedule& sched,
                           const std::vector<DiscreteGraph>& graphs,
                           const std::vector<double>& labels,
                           const std::string& out_dir,
                           const ScaleSpec& sc = ScaleSpec{},
                           const nlohmann::json& extra_meta = {});

extern template NoiseDraw<float> draw_noise(const GraphStateT<float>&, double, Rng&);
extern template NoiseDraw<double> draw_noise(const GraphStateT<double>&, double, Rng&);
extern template TensorT<float> graph_denoise_loss(const DenoiserT<float>&,
                                                  const NoiseSchedule&,
                                                  const GraphStateT<float>&,
                                                  const NoiseDraw<float>&,
                                                  const ScaleSpec&);
extern template TensorT<double> graph_denoise_loss(const DenoiserT<double>&,
                                                   const NoiseSchedule&,
                                                   const GraphStateT<double>&,
                                                   const NoiseDraw<double>&,
                                                   const ScaleSpec&);
extern template TensorT<float> graph_property_loss(const PropertyNetT<float>&,
                                                   const NoiseSchedule&,
                                                   const GraphStateT<float>&, double,
                                                   const NoiseDraw<float>&);
extern template TensorT<double> graph_property_loss(const PropertyNetT<double>&,
                                                    const NoiseSchedule&,
                                                    const GraphStateT<double>&, double,
                                                    const NoiseDraw<double>&);
extern template double batch_loss_grads(const DenoiserT<float>&, const NoiseSchedule&,
                                        const std::vector<GraphStateT<float>>&,
                                        const std::vector<int>&, double,
                                        const ScaleSpec&, Rng&,
                                        std::vector<std::vector<float>>&);
extern template double batch_loss_grads(const DenoiserT<double>&, const NoiseSchedule&,
                                        const std::vector<GraphStateT<double>>&,
                                        const std::vector<int>&, double,
                                        const ScaleSpec&, Rng&,
                                        std::vector<std::vector<double>>&);
extern template double batch_property_loss_grads(
    const PropertyNetT<float>&, const NoiseSchedule&,
    const std::vector<GraphStateT<float>>&, const std::vector<double>&,
    const std::vector<int>&, double, Rng&, std::vector<std::vector<float>>&);
extern template double batch_property_loss_grads(
    const PropertyNetT<double>&, const NoiseSchedule&,
    const std::vector<GraphStateT<double>>&, const std::vector<double>&,
    const std::vector<int>&, double, Rng&, std::vector<std::vector<double>>&);
extern template void ema_update(const ParamSetT<float>&, ParamSetT<float>&, double);
extern template void ema_update(const ParamSetT<double>&, ParamSetT<double>&, double);
extern template TrainReport train_denoiser<float>(
    const DenoiserConfig&, const TrainConfig&, const NoiseSchedule&,
    const std::vector<DiscreteGraph>&, const std::string&, const ScaleSpec&,
    const nlohmann::json&);
extern template TrainReport train_denoiser<double>(
    const DenoiserConfig&, const TrainConfig&, const NoiseSchedule&,
    const std::vector<DiscreteGraph>&, const std::string&, const ScaleSpec&,
    const nlohmann::json&);
extern template TrainReport train_property<float>(
    const DenoiserConfig&, const TrainConfig&, const NoiseSchedule&,
    const std::vector<DiscreteGraph>&, const std::vector<double>&,
    const std::string&, const ScaleSpec&, const nlohmann::json&);
extern template TrainReport train_property<double>(
    const DenoiserConfig&, const TrainConfig&, const NoiseSchedule&,
    const std::vector<DiscreteGraph>&, const std::vector<double>&,
    const std::string&, const ScaleSpec&, const nlohmann::json&);

}  // namespace gdiff
