#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gdiff/chem.hpp"
#include "gdiff/denoiser.hpp"
#include "gdiff/graph.hpp"
#include "gdiff/rng.hpp"
#include "gdiff/schedule.hpp"

namespace gdiff {

enum class SolverFamily { em, gdpms, rk4 };

// Reverse-time generation settings. `nfe` counts network evaluations, not
// steps: an order-k exponential-integrator step spends k evaluations, an RK4
// step spends four.
struct SamplerConfig {
  SolverFamily family = SolverFamily::gdpms;
  int order = 3;  // exponential integrator only
  int nfe = 30;
  double t_start = 1.0;
  double t_end = 1e-3;
  double guidance_weight = 0.0;
  std::uint64_t seed = 0;

  // throws std::invalid_argument; needs order in 1..3, nfe >= order (>= 4 for
  // rk4), 0 < t_end < t_start <= schedule horizon
  void validate(const NoiseSchedule& sched) const;
};

// Time grid for the exponential-integrator families, uniform in the half-log
// signal-to-noise ratio lambda between t_start and t_end.
struct StepPlan {
  std::vector<double> t;  // size steps+1, t[0] = t_start > ... > t[steps] = t_end
  std::vector<double> h;  // h[i] = lambda(t[i+1]) - lambda(t[i]) > 0
  double r1 = 0.0, r2 = 0.0;  // interior evaluation fractions (order >= 2)

  int steps() const { return int(h.size()); }
};

StepPlan build_step_plan(const NoiseSchedule& sched, int order, int nfe,
                         double t_start, double t_end);

// Noise-model hook: (continuous state, quantized conditioning graph, time) ->
// predicted noise. Lets analytic surrogates drive every solver through the
// same code path as a trained network.
template <typename T>
using NoiseFnT =
    std::function<NoisePredT<T>(const GraphStateT<T>&, const DiscreteGraph&, double)>;

// Wraps predict_noise with gradient recording suspended.
template <typename T>
NoiseFnT<T> model_noise_fn(const DenoiserT<T>& model);

// Property-gradient guidance: eps' = eps - r * sigma_t * grad*, where grad* is
// the predictor gradient normalized to unit Frobenius norm per tensor (node
// and edge parts separately, zero gradient stays zero, edge part symmetrized).
// r == 0 returns `base` unchanged so trajectories stay bit-identical.
template <typename T>
NoiseFnT<T> guided_noise_fn(NoiseFnT<T> base, const PropertyNetT<T>& predictor,
                            double r, NoiseSchedule sched);

// --- continuous-state drivers ------------------------------------------------

// Euler-Maruyama on the reverse SDE: N uniform steps from t_start down to 0,
// evaluating at t = i*dt for i = N..1 and re-quantizing the conditioning
// structure each step. noise_scale 0 drops the diffusion term (deterministic
// Euler on the linear drift). Throws std::runtime_error naming the step index
// if the state goes non-finite.
template <typename T>
GraphStateT<T> em_sample_state(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                               const ScaleSpec& sc, int n_max, int feat_dim,
                               int n_nodes, int steps, Rng& rng,
                               double noise_scale = 1.0);

// One exponential-integrator step from t_prev to t_next (t_next < t_prev).
// Order 2 adds one interior evaluation at fraction r1 of the lambda step,
// order 3 two at r1 and r2; the conditioning structure is re-quantized before
// every evaluation.
template <typename T>
GraphStateT<T> gdpms_step_1(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                            const ScaleSpec& sc, const GraphStateT<T>& st,
                            double t_prev, double t_next);
template <typename T>
GraphStateT<T> gdpms_step_2(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                            const ScaleSpec& sc, const GraphStateT<T>& st,
                            double t_prev, double t_next, double r1);
template <typename T>
GraphStateT<T> gdpms_step_3(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                            const ScaleSpec& sc, const GraphStateT<T>& st,
                            double t_prev, double t_next, double r1, double r2);

// Runs the order-matching step over every interval of the plan.
template <typename T>
GraphStateT<T> gdpms_run(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                         const ScaleSpec& sc, GraphStateT<T> st,
                         const StepPlan& plan, int order);

template <typename T>
GraphStateT<T> gdpms_sample_state(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                                  const ScaleSpec& sc, const SamplerConfig& cfg,
                                  int n_max, int feat_dim, int n_nodes, Rng& rng);

// Fixed-step RK4 on the probability-flow ODE between two times (either
// direction); the conditioning structure is re-quantized at each of the four
// stage evaluations. Deterministic.
template <typename T>
GraphStateT<T> rk4_flow(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                        const ScaleSpec& sc, GraphStateT<T> st, double t_from,
                        double t_to, int steps);

// Forward encoding of a data state into the latent at t_xi (identity when
// t_xi == t_end).
template <typename T>
GraphStateT<T> ode_encode(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                          const ScaleSpec& sc, const GraphStateT<T>& data_state,
                          double t_xi, int steps, double t_end = 1e-3);

// --- discrete-graph front ends ----------------------------------------------

enum class PostProcessMode { generic, molecule };

// generic: identity. molecule: keep the largest connected component, then run
// valency correction; needs the element alphabet that node types index.
// Throws std::invalid_argument on an empty graph.
DiscreteGraph post_process(const DiscreteGraph& g, PostProcessMode mode,
                           const std::vector<std::string>& alphabet = {});

template <typename T>
DiscreteGraph em_sample(const DenoiserT<T>& model, const NoiseSchedule& sched,
                        const ScaleSpec& sc, int n_nodes, int steps, Rng& rng,
                        PostProcessMode mode = PostProcessMode::generic,
                        const std::vector<std::string>& alphabet = {});

template <typename T>
DiscreteGraph gdpms_sample(const DenoiserT<T>& model, const NoiseSchedule& sched,
                           const ScaleSpec& sc, const SamplerConfig& cfg,
                           int n_nodes, Rng& rng,
                           PostProcessMode mode = PostProcessMode::generic,
                           const std::vector<std::string>& alphabet = {});

// First-order exponential integrator with predictor guidance at weight
// cfg.guidance_weight; cfg.order must be 1.
template <typename T>
DiscreteGraph guided_gdpms1_sample(const DenoiserT<T>& model,
                                   const PropertyNetT<T>& predictor,
                                   const NoiseSchedule& sched, const ScaleSpec& sc,
                                   const SamplerConfig& cfg, int n_nodes, Rng& rng,
                                   PostProcessMode mode = PostProcessMode::generic,
                                   const std::vector<std::string>& alphabet = {});

template <typename T>
DiscreteGraph rk4_sample(const DenoiserT<T>& model, const NoiseSchedule& sched,
                         const ScaleSpec& sc, const SamplerConfig& cfg,
                         int n_nodes, Rng& rng,
                         PostProcessMode mode = PostProcessMode::generic,
                         const std::vector<std::string>& alphabet = {});

// --- latent-space molecule optimization --------------------------------------

struct OptimizeConfig {
  double delta = 0.4;       // minimum fingerprint similarity to the input
  int ascent_steps = 50;    // K
  int restarts = 1;         // first pass keeps the input atom count
  double t_xi = 0.3;        // latent anchor time
  int ode_steps = 100;      // encode steps; also the decode evaluation budget
  double t_end = 1e-3;
  double guidance_weight = 0.0;  // r for the guided decode
  double ascent_lr = 0.1;   // step on the unit-normalized latent gradient
  std::uint64_t seed = 0;
};

struct OptimizeResult {
  bool success = false;
  Molecule best;           // meaningful only when success
  double best_score = 0.0;    // predictor value of the winner
  double input_score = 0.0;   // predictor value of the input
  double improvement = 0.0;   // best_score - input_score
  double similarity = 0.0;    // fingerprint similarity of winner vs input
  int candidates_tried = 0;
  int candidates_similar = 0;  // how many met the similarity threshold
};

// Encode to the latent anchor, take K unit-gradient ascent steps on the
// predictor, decode every intermediate latent with the guided reverse
// integrator, and keep the best-scoring decoded molecule that stays within
// `delta` similarity of the input. Later restarts resample the working atom
// count from `hist` and pad the input with isolated atoms of alphabet[0] up
// to that count. success=false when no candidate meets the threshold.
template <typename T>
OptimizeResult optimize_molecule(const Molecule& mol, const DenoiserT<T>& model,
                                 const PropertyNetT<T>& predictor,
                                 const NoiseSchedule& sched, const ScaleSpec& sc,
                                 const std::vector<std::string>& alphabet,
                                 const NodeCountHist& hist,
                                 const OptimizeConfig& ocfg);

// --- explicit instantiations -------------------------------------------------

extern template NoiseFnT<float> model_noise_fn<float>(const DenoiserT<float>&);
extern template NoiseFnT<double> model_noise_fn<double>(const DenoiserT<double>&);
extern template NoiseFnT<float> guided_noise_fn<float>(NoiseFnT<float>, const PropertyNetT<float>&, double, NoiseSchedule);
extern template NoiseFnT<double> guided_noise_fn<double>(NoiseFnT<double>, const PropertyNetT<double>&, double, NoiseSchedule);
extern template GraphStateT<float> em_sample_state<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, int, int, int, int, Rng&, double);
extern template GraphStateT<double> em_sample_state<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, int, int, int, int, Rng&, double);
extern template GraphStateT<float> gdpms_step_1<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, double);
extern template GraphStateT<double> gdpms_step_1<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, double);
extern template GraphStateT<float> gdpms_step_2<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, double, double);
extern template GraphStateT<double> gdpms_step_2<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, double, double);
extern template GraphStateT<float> gdpms_step_3<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, double, double, double);
extern template GraphStateT<double> gdpms_step_3<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, double, double, double);
extern template GraphStateT<float> gdpms_run<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<float>, const StepPlan&, int);
extern template GraphStateT<double> gdpms_run<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<double>, const StepPlan&, int);
extern template GraphStateT<float> gdpms_sample_state<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, int, int, Rng&);
extern template GraphStateT<double> gdpms_sample_state<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, int, int, Rng&);
extern template GraphStateT<float> rk4_flow<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<float>, double, double, int);
extern template GraphStateT<double> rk4_flow<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<double>, double, double, int);
extern template GraphStateT<float> ode_encode<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, int, double);
extern template GraphStateT<double> ode_encode<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, int, double);
extern template DiscreteGraph em_sample<float>(const DenoiserT<float>&, const NoiseSchedule&, const ScaleSpec&, int, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template DiscreteGraph em_sample<double>(const DenoiserT<double>&, const NoiseSchedule&, const ScaleSpec&, int, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template DiscreteGraph gdpms_sample<float>(const DenoiserT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template DiscreteGraph gdpms_sample<double>(const DenoiserT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template DiscreteGraph guided_gdpms1_sample<float>(const DenoiserT<float>&, const PropertyNetT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template DiscreteGraph guided_gdpms1_sample<double>(const DenoiserT<double>&, const PropertyNetT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template DiscreteGraph rk4_sample<float>(const DenoiserT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template DiscreteGraph rk4_sample<double>(const DenoiserT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
extern template OptimizeResult optimize_molecule<float>(const Molecule&, const DenoiserT<float>&, const PropertyNetT<float>&, const NoiseSchedule&, const ScaleSpec&, const std::vector<std::string>&, const NodeCountHist&, const OptimizeConfig&);
extern template OptimizeResult optimize_molecule<double>(const Molecule&, const DenoiserT<double>&, const PropertyNetT<double>&, const NoiseSchedule&, const ScaleSpec&, const std::vector<std::string>&, const NodeCountHist&, const OptimizeConfig&);

}  // namespace gdiff
