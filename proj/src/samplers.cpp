#include "gdiff/samplers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace gdiff {

namespace {

// (expm1(h)/h - 1), continuous through h = 0
double phi_rel(double h) { return h == 0.0 ? 0.0 : std::expm1(h) / h - 1.0; }

template <typename T>
TensorT<T> lincomb2(double a, const TensorT<T>& x, double b, const TensorT<T>& y) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const T* px = x.data();
  const T* py = y.data();
  T* po = out.mutable_data();
  T ta = T(a), tb = T(b);
  for (std::int64_t i = 0; i < x.size(); ++i) po[i] = ta * px[i] + tb * py[i];
  return out;
}

template <typename T>
TensorT<T> lincomb3(double a, const TensorT<T>& x, double b, const TensorT<T>& y,
                    double c, const TensorT<T>& z) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const T* px = x.data();
  const T* py = y.data();
  const T* pz = z.data();
  T* po = out.mutable_data();
  T ta = T(a), tb = T(b), tc = T(c);
  for (std::int64_t i = 0; i < x.size(); ++i)
    po[i] = ta * px[i] + tb * py[i] + tc * pz[i];
  return out;
}

template <typename T>
void add_scaled(TensorT<T>& y, double b, const TensorT<T>& x) {
  T* py = y.mutable_data();
  const T* px = x.data();
  T tb = T(b);
  for (std::int64_t i = 0; i < y.size(); ++i) py[i] += tb * px[i];
}

// tensor handles share storage; give in-place updates their own buffer
template <typename T>
TensorT<T> deep_copy(const TensorT<T>& t) {
  std::vector<T> v(t.data(), t.data() + t.size());
  return TensorT<T>::from(t.shape(), std::move(v));
}

template <typename T>
GraphStateT<T> state_like(const GraphStateT<T>& st, TensorT<T> X, TensorT<T> A) {
  GraphStateT<T> out;
  out.n = st.n;
  out.X = std::move(X);
  out.A = std::move(A);
  return out;
}

template <typename T>
void check_finite(const GraphStateT<T>& st, const std::string& who) {
  if (!all_finite(st.X) || !all_finite(st.A))
    throw std::runtime_error(who + ": state went non-finite");
}

}  // namespace

void SamplerConfig::validate(const NoiseSchedule& sched) const {
  if (family == SolverFamily::gdpms && (order < 1 || order > 3))
    throw std::invalid_argument("sampler: order must be 1, 2 or 3, got " +
                                std::to_string(order));
  if (nfe < 1)
    throw std::invalid_argument("sampler: nfe must be positive, got " +
                                std::to_string(nfe));
  if (family == SolverFamily::gdpms && nfe < order)
    throw std::invalid_argument("sampler: nfe " + std::to_string(nfe) +
                                " below solver order " + std::to_string(order));
  if (family == SolverFamily::rk4 && nfe < 4)
    throw std::invalid_argument("sampler: rk4 needs nfe >= 4, got " +
                                std::to_string(nfe));
  if (!(t_end > 0.0) || !(t_end < t_start))
    throw std::invalid_argument("sampler: need 0 < t_end < t_start, got t_end=" +
                                std::to_string(t_end) + " t_start=" +
                                std::to_string(t_start));
  if (t_start > sched.T)
    throw std::invalid_argument("sampler: t_start " + std::to_string(t_start) +
                                " beyond schedule horizon " + std::to_string(sched.T));
  if (!std::isfinite(guidance_weight))
    throw std::invalid_argument("sampler: guidance weight must be finite");
}

StepPlan build_step_plan(const NoiseSchedule& sched, int order, int nfe,
                         double t_start, double t_end) {
  if (order < 1 || order > 3)
    throw std::invalid_argument("build_step_plan: order must be 1, 2 or 3");
  if (nfe < order)
    throw std::invalid_argument("build_step_plan: nfe " + std::to_string(nfe) +
                                " below order " + std::to_string(order));
  if (!(t_end > 0.0) || !(t_end < t_start) || t_start > sched.T)
    throw std::invalid_argument("build_step_plan: need 0 < t_end < t_start <= horizon");
  int steps = nfe / order;  // evaluation budget, order evaluations per step
  StepPlan plan;
  plan.t.resize(std::size_t(steps) + 1);
  plan.h.resize(std::size_t(steps));
  double lam0 = sched.lambda_of_t(t_start);
  double lam1 = sched.lambda_of_t(t_end);
  plan.t.front() = t_start;
  plan.t.back() = t_end;
  for (int i = 1; i < steps; ++i)
    plan.t[std::size_t(i)] =
        sched.t_of_lambda(lam0 + (lam1 - lam0) * double(i) / double(steps));
  for (int i = 0; i < steps; ++i)
    plan.h[std::size_t(i)] = sched.lambda_of_t(plan.t[std::size_t(i) + 1]) -
                             sched.lambda_of_t(plan.t[std::size_t(i)]);
  if (order >= 2) plan.r1 = 0.5;
  if (order == 3) {
    plan.r1 = 1.0 / 3.0;
    plan.r2 = 2.0 / 3.0;
  }
  return plan;
}

template <typename T>
NoiseFnT<T> model_noise_fn(const DenoiserT<T>& model) {
  return [&model](const GraphStateT<T>& st, const DiscreteGraph& cond, double t) {
    NoTapeScopeT<T> guard;
    return predict_noise(model, st, cond, t);
  };
}

template <typename T>
NoiseFnT<T> guided_noise_fn(NoiseFnT<T> base, const PropertyNetT<T>& predictor,
                            double r, NoiseSchedule sched) {
  if (r == 0.0) return base;
  const PropertyNetT<T>* pred = &predictor;
  return [base = std::move(base), pred, r, sched](const GraphStateT<T>& st,
                                                  const DiscreteGraph& cond,
                                                  double t) {
    NoisePredT<T> p = base(st, cond, t);
    TapeT<T> tape;
    PropertyOutT<T> out;
    {
      TapeScopeT<T> scope(tape);
      out = predict_property(*pred, st, t);
      tape.backward(out.value);
    }
    const std::vector<T>* gx = tape.grad(out.x_leaf);
    const std::vector<T>* g0 = tape.grad(out.a0_leaf);
    const std::vector<T>* g1 = tape.grad(out.a1_leaf);
    std::int64_t n = st.n, nm = st.n_max(), F = st.feat_dim();
    std::int64_t plane = nm * nm;
    // node gradient, unit Frobenius norm over the active rows
    TensorT<T> dx = TensorT<T>::zeros({nm, F});
    double nx = 0.0;
    if (gx) {
      T* pd = dx.mutable_data();
      for (std::int64_t i = 0; i < n * F; ++i) {
        double v = double((*gx)[std::size_t(i)]);
        if (!std::isfinite(v))
          throw std::runtime_error("guidance: non-finite predictor gradient at t=" +
                                   std::to_string(t));
        pd[i] = T(v);
        nx += v * v;
      }
    }
    nx = std::sqrt(nx);
    // edge gradient: symmetrize, zero diagonal, joint norm over both channels
    TensorT<T> da = TensorT<T>::zeros({2, nm, nm});
    double na = 0.0;
    const std::vector<T>* chans[2] = {g0, g1};
    T* pa = da.mutable_data();
    for (int c = 0; c < 2; ++c) {
      if (!chans[c]) continue;
      const std::vector<T>& g = *chans[c];
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j) {
          double v = 0.5 * (double(g[std::size_t(i * n + j)]) +
                            double(g[std::size_t(j * n + i)]));
          if (!std::isfinite(v))
            throw std::runtime_error(
                "guidance: non-finite predictor gradient at t=" + std::to_string(t));
          pa[c * plane + i * nm + j] = T(v);
          pa[c * plane + j * nm + i] = T(v);
          na += 2.0 * v * v;
        }
    }
    na = std::sqrt(na);
    double cx = nx > 0.0 ? r * sched.alpha_sigma(t).second / nx : 0.0;
    double ca = na > 0.0 ? r * sched.alpha_sigma(t).second / na : 0.0;
    if (cx != 0.0) add_scaled(p.eps_x, -cx, dx);
    if (ca != 0.0) add_scaled(p.eps_a, -ca, da);
    return p;
  };
}

template <typename T>
GraphStateT<T> em_sample_state(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                               const ScaleSpec& sc, int n_max, int feat_dim,
                               int n_nodes, int steps, Rng& rng,
                               double noise_scale) {
  if (steps < 1)
    throw std::invalid_argument("em_sample: steps must be positive");
  GraphStateT<T> st = noise_like(empty_state<T>(n_max, feat_dim, n_nodes), rng);
  double dt = sched.T / double(steps);
  for (int i = steps; i >= 1; --i) {
    double t = dt * double(i);
    auto [f, g] = sched.drift_diffusion(t);
    double sigma = sched.alpha_sigma(t).second;
    double ge = noise_scale * g;
    NoisePredT<T> pred = eps(st, quantize(st, sc), t);
    GraphStateT<T> xi = noise_like(st, rng);
    double keep = 1.0 - f * dt;
    double model_c = -(ge * ge / sigma) * dt;
    double noise_c = ge * std::sqrt(dt);
    st.X = lincomb3(keep, st.X, model_c, pred.eps_x, noise_c, xi.X);
    st.A = lincomb3(keep, st.A, model_c, pred.eps_a, noise_c, xi.A);
    if (!all_finite(st.X) || !all_finite(st.A))
      throw std::runtime_error("em_sample: non-finite state at step " +
                               std::to_string(i) + " (t=" + std::to_string(t) + ")");
  }
  return st;
}

template <typename T>
GraphStateT<T> gdpms_step_1(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                            const ScaleSpec& sc, const GraphStateT<T>& st,
                            double t_prev, double t_next) {
  if (t_next > t_prev)
    throw std::invalid_argument("gdpms_step_1: time must not increase");
  double h = sched.lambda_of_t(t_next) - sched.lambda_of_t(t_prev);
  auto [ap, sp] = sched.alpha_sigma(t_prev);
  auto [an, sn] = sched.alpha_sigma(t_next);
  (void)sp;
  double ratio = an / ap;
  double gamma = sn * std::expm1(h);
  NoisePredT<T> pred = eps(st, quantize(st, sc), t_prev);
  return state_like(st, lincomb2(ratio, st.X, -gamma, pred.eps_x),
                    lincomb2(ratio, st.A, -gamma, pred.eps_a));
}

template <typename T>
GraphStateT<T> gdpms_step_2(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                            const ScaleSpec& sc, const GraphStateT<T>& st,
                            double t_prev, double t_next, double r1) {
  if (t_next > t_prev)
    throw std::invalid_argument("gdpms_step_2: time must not increase");
  if (!(r1 > 0.0) || !(r1 < 1.0))
    throw std::invalid_argument("gdpms_step_2: r1 must lie in (0,1)");
  double lam_p = sched.lambda_of_t(t_prev);
  double h = sched.lambda_of_t(t_next) - lam_p;
  double s_mid = sched.t_of_lambda(lam_p + r1 * h);
  auto [ap, sp] = sched.alpha_sigma(t_prev);
  auto [am, sm] = sched.alpha_sigma(s_mid);
  auto [an, sn] = sched.alpha_sigma(t_next);
  (void)sp;
  NoisePredT<T> e0 = eps(st, quantize(st, sc), t_prev);
  GraphStateT<T> u = state_like(
      st, lincomb2(am / ap, st.X, -sm * std::expm1(r1 * h), e0.eps_x),
      lincomb2(am / ap, st.A, -sm * std::expm1(r1 * h), e0.eps_a));
  NoisePredT<T> e1 = eps(u, quantize(u, sc), s_mid);
  double c0 = sn * std::expm1(h);
  double c1 = sn / (2.0 * r1) * std::expm1(h);
  // c0 e0 + c1 (e1 - e0) folded into one pass
  return state_like(st,
                    lincomb3(an / ap, st.X, -(c0 - c1), e0.eps_x, -c1, e1.eps_x),
                    lincomb3(an / ap, st.A, -(c0 - c1), e0.eps_a, -c1, e1.eps_a));
}

template <typename T>
GraphStateT<T> gdpms_step_3(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                            const ScaleSpec& sc, const GraphStateT<T>& st,
                            double t_prev, double t_next, double r1, double r2) {
  if (t_next > t_prev)
    throw std::invalid_argument("gdpms_step_3: time must not increase");
  if (!(r1 > 0.0) || !(r2 > r1) || !(r2 < 1.0))
    throw std::invalid_argument("gdpms_step_3: need 0 < r1 < r2 < 1");
  double lam_p = sched.lambda_of_t(t_prev);
  double h = sched.lambda_of_t(t_next) - lam_p;
  double s1 = sched.t_of_lambda(lam_p + r1 * h);
  double s2 = sched.t_of_lambda(lam_p + r2 * h);
  auto [ap, spv] = sched.alpha_sigma(t_prev);
  auto [a1, sg1] = sched.alpha_sigma(s1);
  auto [a2, sg2] = sched.alpha_sigma(s2);
  auto [an, sn] = sched.alpha_sigma(t_next);
  (void)spv;
  NoisePredT<T> e0 = eps(st, quantize(st, sc), t_prev);
  GraphStateT<T> u1 = state_like(
      st, lincomb2(a1 / ap, st.X, -sg1 * std::expm1(r1 * h), e0.eps_x),
      lincomb2(a1 / ap, st.A, -sg1 * std::expm1(r1 * h), e0.eps_a));
  NoisePredT<T> e1 = eps(u1, quantize(u1, sc), s1);
  // D1 = e1 - e0 enters only the second interior state
  double b0 = sg2 * std::expm1(r2 * h);
  double b1 = sg2 * r2 / r1 * phi_rel(r2 * h);
  GraphStateT<T> u2 = state_like(
      st, lincomb3(a2 / ap, st.X, -(b0 - b1), e0.eps_x, -b1, e1.eps_x),
      lincomb3(a2 / ap, st.A, -(b0 - b1), e0.eps_a, -b1, e1.eps_a));
  NoisePredT<T> e2 = eps(u2, quantize(u2, sc), s2);
  double c0 = sn * std::expm1(h);
  double c1 = sn / r2 * phi_rel(h);  // multiplies D2 = e2 - e0
  return state_like(st,
                    lincomb3(an / ap, st.X, -(c0 - c1), e0.eps_x, -c1, e2.eps_x),
                    lincomb3(an / ap, st.A, -(c0 - c1), e0.eps_a, -c1, e2.eps_a));
}

template <typename T>
GraphStateT<T> gdpms_run(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                         const ScaleSpec& sc, GraphStateT<T> st,
                         const StepPlan& plan, int order) {
  for (int i = 0; i < plan.steps(); ++i) {
    double tp = plan.t[std::size_t(i)];
    double tn = plan.t[std::size_t(i) + 1];
    switch (order) {
      case 1: st = gdpms_step_1(eps, sched, sc, st, tp, tn); break;
      case 2: st = gdpms_step_2(eps, sched, sc, st, tp, tn, plan.r1); break;
      case 3: st = gdpms_step_3(eps, sched, sc, st, tp, tn, plan.r1, plan.r2); break;
      default:
        throw std::invalid_argument("gdpms_run: order must be 1, 2 or 3");
    }
    if (!all_finite(st.X) || !all_finite(st.A))
      throw std::runtime_error("gdpms_run: non-finite state after step " +
                               std::to_string(i + 1) + " (t=" +
                               std::to_string(tn) + ")");
  }
  return st;
}

template <typename T>
GraphStateT<T> gdpms_sample_state(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                                  const ScaleSpec& sc, const SamplerConfig& cfg,
                                  int n_max, int feat_dim, int n_nodes, Rng& rng) {
  cfg.validate(sched);
  StepPlan plan = build_step_plan(sched, cfg.order, cfg.nfe, cfg.t_start, cfg.t_end);
  GraphStateT<T> st = noise_like(empty_state<T>(n_max, feat_dim, n_nodes), rng);
  return gdpms_run(eps, sched, sc, std::move(st), plan, cfg.order);
}

template <typename T>
GraphStateT<T> rk4_flow(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                        const ScaleSpec& sc, GraphStateT<T> st, double t_from,
                        double t_to, int steps) {
  if (steps < 1)
    throw std::invalid_argument("rk4_flow: steps must be positive");
  st.X = deep_copy(st.X);
  st.A = deep_copy(st.A);
  if (t_from == t_to) return st;
  auto deriv = [&](const GraphStateT<T>& s, double t) {
    auto [f, g] = sched.drift_diffusion(t);
    double c = g * g / (2.0 * sched.alpha_sigma(t).second);
    NoisePredT<T> pred = eps(s, quantize(s, sc), t);
    return state_like(s, lincomb2(f, s.X, c, pred.eps_x),
                      lincomb2(f, s.A, c, pred.eps_a));
  };
  double span = t_to - t_from;
  for (int k = 0; k < steps; ++k) {
    double t0 = t_from + span * double(k) / double(steps);
    double t1 = t_from + span * double(k + 1) / double(steps);
    double dt = t1 - t0;
    double tm = t0 + 0.5 * dt;
    GraphStateT<T> k1 = deriv(st, t0);
    GraphStateT<T> k2 = deriv(state_like(st, lincomb2(1.0, st.X, 0.5 * dt, k1.X),
                                         lincomb2(1.0, st.A, 0.5 * dt, k1.A)),
                              tm);
    GraphStateT<T> k3 = deriv(state_like(st, lincomb2(1.0, st.X, 0.5 * dt, k2.X),
                                         lincomb2(1.0, st.A, 0.5 * dt, k2.A)),
                              tm);
    GraphStateT<T> k4 = deriv(state_like(st, lincomb2(1.0, st.X, dt, k3.X),
                                         lincomb2(1.0, st.A, dt, k3.A)),
                              t1);
    add_scaled(k1.X, 2.0, k2.X);
    add_scaled(k1.A, 2.0, k2.A);
    add_scaled(k1.X, 2.0, k3.X);
    add_scaled(k1.A, 2.0, k3.A);
    add_scaled(k1.X, 1.0, k4.X);
    add_scaled(k1.A, 1.0, k4.A);
    add_scaled(st.X, dt / 6.0, k1.X);
    add_scaled(st.A, dt / 6.0, k1.A);
    check_finite(st, "rk4_flow");
  }
  return st;
}

template <typename T>
GraphStateT<T> ode_encode(const NoiseFnT<T>& eps, const NoiseSchedule& sched,
                          const ScaleSpec& sc, const GraphStateT<T>& data_state,
                          double t_xi, int steps, double t_end) {
  if (t_xi < t_end || t_xi > sched.T)
    throw std::invalid_argument("ode_encode: latent time must lie in [t_end, horizon]");
  if (t_xi == t_end)
    return state_like(data_state, deep_copy(data_state.X), deep_copy(data_state.A));
  return rk4_flow(eps, sched, sc, data_state, t_end, t_xi, steps);
}

DiscreteGraph post_process(const DiscreteGraph& g, PostProcessMode mode,
                           const std::vector<std::string>& alphabet) {
  if (g.n == 0) throw std::invalid_argument("post_process: empty graph");
  if (mode == PostProcessMode::generic) return g;
  if (alphabet.empty())
    throw std::invalid_argument("post_process: molecule mode needs an element alphabet");
  Molecule m = molecule_from_graph(g, alphabet);
  m = correct_valency(largest_component(m));
  return graph_from_molecule(m, alphabet);
}

template <typename T>
DiscreteGraph em_sample(const DenoiserT<T>& model, const NoiseSchedule& sched,
                        const ScaleSpec& sc, int n_nodes, int steps, Rng& rng,
                        PostProcessMode mode,
                        const std::vector<std::string>& alphabet) {
  NoiseFnT<T> fn = model_noise_fn(model);
  GraphStateT<T> st = em_sample_state(fn, sched, sc, model.cfg.n_max,
                                      model.cfg.feat_dim, n_nodes, steps, rng);
  return post_process(quantize(st, sc), mode, alphabet);
}

template <typename T>
DiscreteGraph gdpms_sample(const DenoiserT<T>& model, const NoiseSchedule& sched,
                           const ScaleSpec& sc, const SamplerConfig& cfg,
                           int n_nodes, Rng& rng, PostProcessMode mode,
                           const std::vector<std::string>& alphabet) {
  NoiseFnT<T> fn = model_noise_fn(model);
  GraphStateT<T> st = gdpms_sample_state(fn, sched, sc, cfg, model.cfg.n_max,
                                         model.cfg.feat_dim, n_nodes, rng);
  return post_process(quantize(st, sc), mode, alphabet);
}

template <typename T>
DiscreteGraph guided_gdpms1_sample(const DenoiserT<T>& model,
                                   const PropertyNetT<T>& predictor,
                                   const NoiseSchedule& sched, const ScaleSpec& sc,
                                   const SamplerConfig& cfg, int n_nodes, Rng& rng,
                                   PostProcessMode mode,
                                   const std::vector<std::string>& alphabet) {
  if (cfg.order != 1)
    throw std::invalid_argument("guided sampling is first order; config order must be 1");
  NoiseFnT<T> fn =
      guided_noise_fn(model_noise_fn(model), predictor, cfg.guidance_weight, sched);
  GraphStateT<T> st = gdpms_sample_state(fn, sched, sc, cfg, model.cfg.n_max,
                                         model.cfg.feat_dim, n_nodes, rng);
  return post_process(quantize(st, sc), mode, alphabet);
}

template <typename T>
DiscreteGraph rk4_sample(const DenoiserT<T>& model, const NoiseSchedule& sched,
                         const ScaleSpec& sc, const SamplerConfig& cfg,
                         int n_nodes, Rng& rng, PostProcessMode mode,
                         const std::vector<std::string>& alphabet) {
  cfg.validate(sched);
  int steps = cfg.nfe / 4;  // four evaluations per step
  NoiseFnT<T> fn = model_noise_fn(model);
  GraphStateT<T> st =
      noise_like(empty_state<T>(model.cfg.n_max, model.cfg.feat_dim, n_nodes), rng);
  st = rk4_flow(fn, sched, sc, std::move(st), cfg.t_start, cfg.t_end, steps);
  return post_process(quantize(st, sc), mode, alphabet);
}

namespace {

// predictor value on a clean encoding, gradients off
template <typename T>
double property_score(const PropertyNetT<T>& predictor, const DiscreteGraph& g,
                      const ScaleSpec& sc, double t) {
  NoTapeScopeT<T> guard;
  GraphStateT<T> st = encode<T>(g, sc, predictor.cfg.n_max, predictor.cfg.feat_dim);
  return double(predict_property(predictor, st, t).value.data()[0]);
}

// latent gradient of the predictor, symmetrized edges, joint unit norm
template <typename T>
bool latent_ascent(GraphStateT<T>& latent, const PropertyNetT<T>& predictor,
                   double t_xi, double lr) {
  TapeT<T> tape;
  PropertyOutT<T> out;
  {
    TapeScopeT<T> scope(tape);
    out = predict_property(predictor, latent, t_xi);
    tape.backward(out.value);
  }
  const std::vector<T>* gx = tape.grad(out.x_leaf);
  const std::vector<T>* g0 = tape.grad(out.a0_leaf);
  const std::vector<T>* g1 = tape.grad(out.a1_leaf);
  std::int64_t n = latent.n, nm = latent.n_max(), F = latent.feat_dim();
  std::int64_t plane = nm * nm;
  TensorT<T> dx = TensorT<T>::zeros({nm, F});
  TensorT<T> da = TensorT<T>::zeros({2, nm, nm});
  double norm2 = 0.0;
  if (gx) {
    T* pd = dx.mutable_data();
    for (std::int64_t i = 0; i < n * F; ++i) {
      double v = double((*gx)[std::size_t(i)]);
      if (!std::isfinite(v))
        throw std::runtime_error("optimize: non-finite latent gradient");
      pd[i] = T(v);
      norm2 += v * v;
    }
  }
  const std::vector<T>* chans[2] = {g0, g1};
  T* pa = da.mutable_data();
  for (int c = 0; c < 2; ++c) {
    if (!chans[c]) continue;
    const std::vector<T>& g = *chans[c];
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = i + 1; j < n; ++j) {
        double v = 0.5 * (double(g[std::size_t(i * n + j)]) +
                          double(g[std::size_t(j * n + i)]));
        if (!std::isfinite(v))
          throw std::runtime_error("optimize: non-finite latent gradient");
        pa[c * plane + i * nm + j] = T(v);
        pa[c * plane + j * nm + i] = T(v);
        norm2 += 2.0 * v * v;
      }
  }
  double norm = std::sqrt(norm2);
  if (norm == 0.0) return false;  // flat predictor, nothing to climb
  add_scaled(latent.X, lr / norm, dx);
  add_scaled(latent.A, lr / norm, da);
  return true;
}

}  // namespace

template <typename T>
OptimizeResult optimize_molecule(const Molecule& mol, const DenoiserT<T>& model,
                                 const PropertyNetT<T>& predictor,
                                 const NoiseSchedule& sched, const ScaleSpec& sc,
                                 const std::vector<std::string>& alphabet,
                                 const NodeCountHist& hist,
                                 const OptimizeConfig& ocfg) {
  mol.validate();
  if (ocfg.delta < 0.0 || ocfg.delta > 1.0)
    throw std::invalid_argument("optimize: similarity threshold must lie in [0,1]");
  if (ocfg.ascent_steps < 0 || ocfg.restarts < 1)
    throw std::invalid_argument("optimize: need ascent_steps >= 0 and restarts >= 1");
  if (ocfg.t_xi < ocfg.t_end || ocfg.t_xi > sched.T)
    throw std::invalid_argument("optimize: latent time must lie in [t_end, horizon]");
  int n_max = model.cfg.n_max;
  if (mol.n() > n_max)
    throw std::invalid_argument("optimize: molecule exceeds model capacity");

  NoiseFnT<T> base = model_noise_fn(model);
  NoiseFnT<T> guided =
      guided_noise_fn(base, predictor, ocfg.guidance_weight, sched);
  StepPlan decode_plan =
      build_step_plan(sched, 1, ocfg.ode_steps, ocfg.t_xi, ocfg.t_end);

  OptimizeResult res;
  res.input_score = property_score(predictor, graph_from_molecule(mol, alphabet),
                                   sc, ocfg.t_end);
  Fingerprint ref = fingerprint(mol);
  Rng rng(ocfg.seed);

  for (int rst = 0; rst < ocfg.restarts; ++rst) {
    int n_work = mol.n();
    if (rst > 0 && hist.total() > 0)
      n_work = std::max(n_work, std::min(n_max, hist.sample(rng)));
    Molecule padded = mol;
    for (int k = mol.n(); k < n_work; ++k) padded.atoms.push_back(alphabet.front());
    GraphStateT<T> latent =
        ode_encode(base, sched, sc,
                   encode<T>(graph_from_molecule(padded, alphabet), sc, n_max,
                             model.cfg.feat_dim),
                   ocfg.t_xi, ocfg.ode_steps, ocfg.t_end);
    for (int k = 0; k <= ocfg.ascent_steps; ++k) {
      GraphStateT<T> stated = gdpms_run(guided, sched, sc, latent, decode_plan, 1);
      DiscreteGraph decoded =
          post_process(quantize(stated, sc), PostProcessMode::molecule, alphabet);
      Molecule cand = molecule_from_graph(decoded, alphabet);
      double sim = tanimoto(ref, fingerprint(cand));
      double score = property_score(predictor, decoded, sc, ocfg.t_end);
      ++res.candidates_tried;
      if (sim >= ocfg.delta) {
        ++res.candidates_similar;
        if (!res.success || score > res.best_score) {
          res.success = true;
          res.best = cand;
          res.best_score = score;
          res.similarity = sim;
        }
      }
      if (k < ocfg.ascent_steps &&
          !latent_ascent(latent, predictor, ocfg.t_xi, ocfg.ascent_lr))
        break;  // zero gradient: further steps would repeat this candidate
    }
  }
  res.improvement = res.success ? res.best_score - res.input_score : 0.0;
  return res;
}

// --- instantiations ----------------------------------------------------------

template NoiseFnT<float> model_noise_fn<float>(const DenoiserT<float>&);
template NoiseFnT<double> model_noise_fn<double>(const DenoiserT<double>&);
template NoiseFnT<float> guided_noise_fn<float>(NoiseFnT<float>, const PropertyNetT<float>&, double, NoiseSchedule);
template NoiseFnT<double> guided_noise_fn<double>(NoiseFnT<double>, const PropertyNetT<double>&, double, NoiseSchedule);
template GraphStateT<float> em_sample_state<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, int, int, int, int, Rng&, double);
template GraphStateT<double> em_sample_state<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, int, int, int, int, Rng&, double);
template GraphStateT<float> gdpms_step_1<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, double);
template GraphStateT<double> gdpms_step_1<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, double);
template GraphStateT<float> gdpms_step_2<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, double, double);
template GraphStateT<double> gdpms_step_2<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, double, double);
template GraphStateT<float> gdpms_step_3<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, double, double, double);
template GraphStateT<double> gdpms_step_3<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, double, double, double);
template GraphStateT<float> gdpms_run<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<float>, const StepPlan&, int);
template GraphStateT<double> gdpms_run<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<double>, const StepPlan&, int);
template GraphStateT<float> gdpms_sample_state<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, int, int, Rng&);
template GraphStateT<double> gdpms_sample_state<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, int, int, Rng&);
template GraphStateT<float> rk4_flow<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<float>, double, double, int);
template GraphStateT<double> rk4_flow<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, GraphStateT<double>, double, double, int);
template GraphStateT<float> ode_encode<float>(const NoiseFnT<float>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<float>&, double, int, double);
template GraphStateT<double> ode_encode<double>(const NoiseFnT<double>&, const NoiseSchedule&, const ScaleSpec&, const GraphStateT<double>&, double, int, double);
template DiscreteGraph em_sample<float>(const DenoiserT<float>&, const NoiseSchedule&, const ScaleSpec&, int, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template DiscreteGraph em_sample<double>(const DenoiserT<double>&, const NoiseSchedule&, const ScaleSpec&, int, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template DiscreteGraph gdpms_sample<float>(const DenoiserT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template DiscreteGraph gdpms_sample<double>(const DenoiserT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template DiscreteGraph guided_gdpms1_sample<float>(const DenoiserT<float>&, const PropertyNetT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template DiscreteGraph guided_gdpms1_sample<double>(const DenoiserT<double>&, const PropertyNetT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template DiscreteGraph rk4_sample<float>(const DenoiserT<float>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template DiscreteGraph rk4_sample<double>(const DenoiserT<double>&, const NoiseSchedule&, const ScaleSpec&, const SamplerConfig&, int, Rng&, PostProcessMode, const std::vector<std::string>&);
template OptimizeResult optimize_molecule<float>(const Molecule&, const DenoiserT<float>&, const PropertyNetT<float>&, const NoiseSchedule&, const ScaleSpec&, const std::vector<std::string>&, const NodeCountHist&, const OptimizeConfig&);
template OptimizeResult optimize_molecule<double>(const Molecule&, const DenoiserT<double>&, const PropertyNetT<double>&, const NoiseSchedule&, const ScaleSpec&, const std::vector<std::string>&, const NodeCountHist&, const OptimizeConfig&);

}  // namespace gdiff
