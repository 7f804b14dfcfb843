#include "doctest.h"

#include <cmath>
#include <vector>

#include "gdiff/samplers.hpp"

using namespace gdiff;

namespace {

// state with hand-set entries: active n=3 inside capacity 4, two node features
GraphStateT<double> demo_state() {
  GraphStateT<double> st = empty_state<double>(4, 2, 3);
  double* px = st.X.mutable_data();
  double xv[6] = {0.31, -0.52, 0.08, 0.77, -0.14, 0.45};
  for (int i = 0; i < 6; ++i) px[i] = xv[i];
  double* pa = st.A.mutable_data();
  double av[2][3] = {{0.62, -0.35, 0.21}, {-0.44, 0.13, 0.58}};  // pairs 01,02,12
  for (int c = 0; c < 2; ++c) {
    int k = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j, ++k) {
        pa[c * 16 + i * 4 + j] = av[c][k];
        pa[c * 16 + j * 4 + i] = av[c][k];
      }
  }
  return st;
}

// direction pattern for the polynomial noise models, symmetric in the edge part
struct PolyDir {
  TensorT<double> ux, ua;
};

PolyDir demo_dir() {
  PolyDir d;
  d.ux = TensorT<double>::zeros({4, 2});
  d.ua = TensorT<double>::zeros({2, 4, 4});
  double* px = d.ux.mutable_data();
  double uv[6] = {0.9, -0.3, 0.5, 0.2, -0.7, 0.4};
  for (int i = 0; i < 6; ++i) px[i] = uv[i];
  double* pa = d.ua.mutable_data();
  double wv[2][3] = {{0.8, -0.6, 0.35}, {0.15, 0.95, -0.25}};
  for (int c = 0; c < 2; ++c) {
    int k = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j, ++k) {
        pa[c * 16 + i * 4 + j] = wv[c][k];
        pa[c * 16 + j * 4 + i] = wv[c][k];
      }
  }
  return d;
}

// noise model c0 + c1*lambda + c2*lambda^2 times the direction pattern
NoiseFnT<double> poly_model(const NoiseSchedule& sched, const PolyDir& dir,
                            double c0, double c1, double c2 = 0.0) {
  return [&sched, &dir, c0, c1, c2](const GraphStateT<double>&,
                                    const DiscreteGraph&, double t) {
    double lam = sched.lambda_of_t(t);
    double p = c0 + c1 * lam + c2 * lam * lam;
    NoisePredT<double> out;
    out.eps_x = scale(dir.ux, p);
    out.eps_a = scale(dir.ua, p);
    return out;
  };
}

// antiderivatives of lambda^k * exp(-lambda)
double anti0(double lam) { return -std::exp(-lam); }
double anti1(double lam) { return -(lam + 1.0) * std::exp(-lam); }
double anti2(double lam) { return -(lam * lam + 2.0 * lam + 2.0) * std::exp(-lam); }

// exact semi-linear solution for the polynomial model: per entry
//   (alpha_t/alpha_s) x  -  alpha_t * u * sum_k c_k * (Fk(lam_t) - Fk(lam_s))
double exact_integral(const NoiseSchedule& sched, double t_s, double t_t,
                      double c0, double c1, double c2) {
  double ls = sched.lambda_of_t(t_s), lt = sched.lambda_of_t(t_t);
  return c0 * (anti0(lt) - anti0(ls)) + c1 * (anti1(lt) - anti1(ls)) +
         c2 * (anti2(lt) - anti2(ls));
}

GraphStateT<double> exact_poly_solution(const NoiseSchedule& sched,
                                        const GraphStateT<double>& st,
                                        const PolyDir& dir, double t_s, double t_t,
                                        double c0, double c1, double c2) {
  double as = sched.alpha_sigma(t_s).first;
  double at = sched.alpha_sigma(t_t).first;
  double integ = at * exact_integral(sched, t_s, t_t, c0, c1, c2);
  GraphStateT<double> out = empty_state<double>(st.n_max(), st.feat_dim(), st.n);
  for (std::int64_t i = 0; i < st.X.size(); ++i)
    out.X.mutable_data()[i] = (at / as) * st.X.data()[i] - integ * dir.ux.data()[i];
  for (std::int64_t i = 0; i < st.A.size(); ++i)
    out.A.mutable_data()[i] = (at / as) * st.A.data()[i] - integ * dir.ua.data()[i];
  return out;
}

double max_abs_diff(const GraphStateT<double>& a, const GraphStateT<double>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.X.size(); ++i)
    m = std::max(m, std::abs(a.X.data()[i] - b.X.data()[i]));
  for (std::int64_t i = 0; i < a.A.size(); ++i)
    m = std::max(m, std::abs(a.A.data()[i] - b.A.data()[i]));
  return m;
}

// scalar surrogate machinery: capacity-1 states hold one number
GraphStateT<double> scalar_state(double x) {
  GraphStateT<double> st = empty_state<double>(1, 1, 1);
  st.X.mutable_data()[0] = x;
  return st;
}

double scalar_of(const GraphStateT<double>& st) { return st.X.data()[0]; }

// smooth state- and time-dependent model for the convergence study
NoiseFnT<double> smooth_model(const NoiseSchedule& sched) {
  return [&sched](const GraphStateT<double>& st, const DiscreteGraph&, double t) {
    double lam = sched.lambda_of_t(t);
    double v = 0.4 * std::tanh(scalar_of(st)) + 0.3 * std::cos(0.5 * lam);
    NoisePredT<double> out;
    out.eps_x = TensorT<double>::from({1, 1}, {v});
    out.eps_a = TensorT<double>::zeros({2, 1, 1});
    return out;
  };
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double n = double(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void check_symmetric(const GraphStateT<double>& st) {
  int nm = st.n_max();
  std::int64_t plane = std::int64_t(nm) * nm;
  const double* pa = st.A.data();
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < nm; ++i)
      for (int j = 0; j < nm; ++j) {
        CHECK(pa[c * plane + i * nm + j] == pa[c * plane + j * nm + i]);
        if (i == j || i >= st.n || j >= st.n) CHECK(pa[c * plane + i * nm + j] == 0.0);
      }
}

}  // namespace

TEST_CASE("step plan: log-snr-uniform grid, exact endpoints, budget mapping") {
  NoiseSchedule sched;
  StepPlan p3 = build_step_plan(sched, 3, 30, 1.0, 1e-3);
  CHECK(p3.steps() == 10);
  CHECK(p3.t.front() == 1.0);
  CHECK(p3.t.back() == 1e-3);
  CHECK(p3.r1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(p3.r2 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  for (int i = 0; i + 1 <= p3.steps(); ++i) CHECK(p3.t[i] > p3.t[i + 1]);
  double href = (sched.lambda_of_t(1e-3) - sched.lambda_of_t(1.0)) / 10.0;
  for (double h : p3.h) {
    CHECK(h > 0.0);
    CHECK(h == doctest::Approx(href).epsilon(1e-10));
  }

  StepPlan p2 = build_step_plan(sched, 2, 31, 1.0, 1e-3);
  CHECK(p2.steps() == 15);  // odd budget rounds down
  CHECK(p2.r1 == 0.5);
  CHECK(p2.r2 == 0.0);
  StepPlan p1 = build_step_plan(sched, 1, 7, 0.8, 0.05);
  CHECK(p1.steps() == 7);
  CHECK(p1.t.front() == 0.8);
  CHECK(p1.t.back() == 0.05);

  CHECK_THROWS_AS(build_step_plan(sched, 0, 10, 1.0, 1e-3), std::invalid_argument);
  CHECK_THROWS_AS(build_step_plan(sched, 4, 10, 1.0, 1e-3), std::invalid_argument);
  CHECK_THROWS_AS(build_step_plan(sched, 3, 2, 1.0, 1e-3), std::invalid_argument);
  CHECK_THROWS_AS(build_step_plan(sched, 1, 10, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(build_step_plan(sched, 1, 10, 1e-3, 0.5), std::invalid_argument);
}

TEST_CASE("sampler config validation") {
  NoiseSchedule sched;
  SamplerConfig cfg;
  CHECK_NOTHROW(cfg.validate(sched));

  SamplerConfig bad = cfg;
  bad.order = 5;
  CHECK_THROWS_AS(bad.validate(sched), std::invalid_argument);
  bad = cfg;
  bad.nfe = 2;  // below order 3
  CHECK_THROWS_AS(bad.validate(sched), std::invalid_argument);
  bad = cfg;
  bad.family = SolverFamily::rk4;
  bad.nfe = 3;
  CHECK_THROWS_AS(bad.validate(sched), std::invalid_argument);
  bad = cfg;
  bad.t_end = 0.0;
  CHECK_THROWS_AS(bad.validate(sched), std::invalid_argument);
  bad = cfg;
  bad.t_end = 2.0;
  CHECK_THROWS_AS(bad.validate(sched), std::invalid_argument);
  bad = cfg;
  bad.t_start = 1.5;
  CHECK_THROWS_AS(bad.validate(sched), std::invalid_argument);
  bad = cfg;
  bad.family = SolverFamily::em;
  bad.order = 7;  // order is ignored off the exponential-integrator family
  CHECK_NOTHROW(bad.validate(sched));
}

TEST_CASE("zero-width step is the identity for all three orders") {
  NoiseSchedule sched;
  ScaleSpec sc;
  PolyDir dir = demo_dir();
  NoiseFnT<double> fn = poly_model(sched, dir, 0.7, -0.2, 0.05);
  GraphStateT<double> st = demo_state();
  for (double t : {0.9, 0.4, 0.02}) {
    GraphStateT<double> o1 = gdpms_step_1(fn, sched, sc, st, t, t);
    GraphStateT<double> o2 = gdpms_step_2(fn, sched, sc, st, t, t, 0.5);
    GraphStateT<double> o3 = gdpms_step_3(fn, sched, sc, st, t, t, 1.0 / 3, 2.0 / 3);
    CHECK(max_abs_diff(o1, st) == 0.0);
    CHECK(max_abs_diff(o2, st) == 0.0);
    CHECK(max_abs_diff(o3, st) == 0.0);
  }
}

TEST_CASE("first-order step reproduces the exact semi-linear solution for a constant model") {
  NoiseSchedule sched;
  ScaleSpec sc;
  PolyDir dir = demo_dir();
  double c0 = 0.6;
  NoiseFnT<double> fn = poly_model(sched, dir, c0, 0.0);
  GraphStateT<double> st = demo_state();

  // one large step
  GraphStateT<double> got = gdpms_step_1(fn, sched, sc, st, 0.8, 0.3);
  GraphStateT<double> want = exact_poly_solution(sched, st, dir, 0.8, 0.3, c0, 0, 0);
  CHECK(max_abs_diff(got, want) <= 1e-10);

  // a whole driver run stays exact: every step integrates a constant exactly
  StepPlan plan = build_step_plan(sched, 1, 7, 1.0, 1e-3);
  GraphStateT<double> run = gdpms_run(fn, sched, sc, st, plan, 1);
  GraphStateT<double> full = exact_poly_solution(sched, st, dir, 1.0, 1e-3, c0, 0, 0);
  CHECK(max_abs_diff(run, full) <= 1e-10);
}

TEST_CASE("second-order step: constant model exact at any width, linear model at small width") {
  NoiseSchedule sched;
  ScaleSpec sc;
  PolyDir dir = demo_dir();
  GraphStateT<double> st = demo_state();

  NoiseFnT<double> cfn = poly_model(sched, dir, -0.45, 0.0);
  GraphStateT<double> gc = gdpms_step_2(cfn, sched, sc, st, 1.0, 0.01, 0.5);
  GraphStateT<double> wc = exact_poly_solution(sched, st, dir, 1.0, 0.01, -0.45, 0, 0);
  CHECK(max_abs_diff(gc, wc) <= 1e-10);

  // linear-in-lambda model over a narrow log-snr interval
  double c0 = 0.2, c1 = 0.5;
  NoiseFnT<double> lfn = poly_model(sched, dir, c0, c1);
  double t_prev = 0.5;
  double t_next = sched.t_of_lambda(sched.lambda_of_t(t_prev) + 2e-3);
  GraphStateT<double> gl = gdpms_step_2(lfn, sched, sc, st, t_prev, t_next, 0.5);
  GraphStateT<double> wl =
      exact_poly_solution(sched, st, dir, t_prev, t_next, c0, c1, 0);
  CHECK(max_abs_diff(gl, wl) <= 1e-9);
}

TEST_CASE("third-order step: linear model exact at any width, quadratic at small width") {
  NoiseSchedule sched;
  ScaleSpec sc;
  PolyDir dir = demo_dir();
  GraphStateT<double> st = demo_state();

  double c0 = 0.15, c1 = -0.3;
  NoiseFnT<double> lfn = poly_model(sched, dir, c0, c1);
  GraphStateT<double> gl = gdpms_step_3(lfn, sched, sc, st, 0.9, 0.05, 1.0 / 3, 2.0 / 3);
  GraphStateT<double> wl = exact_poly_solution(sched, st, dir, 0.9, 0.05, c0, c1, 0);
  CHECK(max_abs_diff(gl, wl) <= 1e-9);

  double c2 = 0.5;
  NoiseFnT<double> qfn = poly_model(sched, dir, c0, c1, c2);
  double t_prev = 0.5;
  double t_next = sched.t_of_lambda(sched.lambda_of_t(t_prev) + 0.01);
  GraphStateT<double> gq =
      gdpms_step_3(qfn, sched, sc, st, t_prev, t_next, 1.0 / 3, 2.0 / 3);
  GraphStateT<double> wq =
      exact_poly_solution(sched, st, dir, t_prev, t_next, c0, c1, c2);
  CHECK(max_abs_diff(gq, wq) <= 1e-8);
}

TEST_CASE("empirical convergence orders against a fine fixed-step reference") {
  NoiseSchedule sched;
  ScaleSpec sc;
  NoiseFnT<double> fn = smooth_model(sched);
  double t_end = 0.01;
  double x_ref = scalar_of(rk4_flow(fn, sched, sc, scalar_state(0.8), 1.0, t_end, 4096));

  double targets[3] = {0.9, 1.8, 2.7};
  std::vector<std::vector<int>> budgets = {
      {8, 16, 32, 64}, {8, 16, 32, 64}, {9, 18, 36, 72}};
  for (int order = 1; order <= 3; ++order) {
    std::vector<double> lx, ly;
    for (int nfe : budgets[std::size_t(order - 1)]) {
      StepPlan plan = build_step_plan(sched, order, nfe, 1.0, t_end);
      double x = scalar_of(gdpms_run(fn, sched, sc, scalar_state(0.8), plan, order));
      double err = std::abs(x - x_ref);
      REQUIRE(err > 0.0);
      lx.push_back(std::log(double(nfe)));
      ly.push_back(std::log(err));
    }
    double slope = -fit_slope(lx, ly);
    INFO("order ", order, " slope ", slope);
    CHECK(slope >= targets[std::size_t(order - 1)]);
  }
}

TEST_CASE("reverse-sde sampling matches the analytic scalar marginal") {
  // data distribution N(0,1): the forward marginal stays N(0,1) at every t and
  // the exact noise model is sigma_t * x
  NoiseSchedule sched;
  ScaleSpec sc;
  NoiseFnT<double> fn = [&sched](const GraphStateT<double>& st, const DiscreteGraph&,
                                 double t) {
    NoisePredT<double> out;
    out.eps_x = scale(st.X, sched.alpha_sigma(t).second);
    out.eps_a = TensorT<double>::zeros({2, 1, 1});
    return out;
  };
  const int trials = 10000, steps = 300;
  Rng rng(777);
  double sum = 0.0, sumsq = 0.0;
  for (int k = 0; k < trials; ++k) {
    double x = scalar_of(em_sample_state(fn, sched, sc, 1, 1, 1, steps, rng));
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / trials;
  double var = sumsq / trials - mean * mean;
  double se_mean = std::sqrt(var / trials);
  double se_var = var * std::sqrt(2.0 / (trials - 1));
  INFO("mean ", mean, " var ", var);
  CHECK(std::abs(mean - 0.0) <= 4.0 * se_mean);
  CHECK(std::abs(var - 1.0) <= 4.0 * se_var);
}

TEST_CASE("zero diffusion reduces the sde sampler to explicit euler on the linear drift") {
  NoiseSchedule sched;
  ScaleSpec sc;
  // model output is irrelevant: its coefficient carries the squared diffusion
  NoiseFnT<double> fn = [](const GraphStateT<double>&, const DiscreteGraph&, double) {
    NoisePredT<double> out;
    out.eps_x = TensorT<double>::from({1, 1}, {123.0});
    out.eps_a = TensorT<double>::zeros({2, 1, 1});
    return out;
  };
  const int steps = 200;
  Rng rng(42);
  double got = scalar_of(em_sample_state(fn, sched, sc, 1, 1, 1, steps, rng, 0.0));

  double x = Rng(42).normal();  // same initial draw as the sampler's
  double dt = sched.T / steps;
  for (int i = steps; i >= 1; --i) {
    double f = sched.drift_diffusion(dt * i).first;
    x *= 1.0 - f * dt;
  }
  CHECK(got == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("sde sampler aborts with the step index when the state explodes") {
  NoiseSchedule sched;
  ScaleSpec sc;
  NoiseFnT<double> fn = [](const GraphStateT<double>&, const DiscreteGraph&, double) {
    NoisePredT<double> out;
    out.eps_x =
        TensorT<double>::from({1, 1}, {std::numeric_limits<double>::infinity()});
    out.eps_a = TensorT<double>::zeros({2, 1, 1});
    return out;
  };
  Rng rng(1);
  CHECK_THROWS_WITH_AS(em_sample_state(fn, sched, sc, 1, 1, 1, 50, rng),
                       doctest::Contains("non-finite state at step 50"),
                       std::runtime_error);
}

TEST_CASE("deterministic flow: zero-width identity and encode/decode inversion") {
  NoiseSchedule sched;
  ScaleSpec sc;
  NoiseFnT<double> fn = smooth_model(sched);

  GraphStateT<double> st = scalar_state(0.5);
  GraphStateT<double> same = ode_encode(fn, sched, sc, st, 0.01, 64, 0.01);
  CHECK(scalar_of(same) == 0.5);
  same.X.mutable_data()[0] = 9.0;  // the identity result owns its buffer
  CHECK(scalar_of(st) == 0.5);

  GraphStateT<double> latent = ode_encode(fn, sched, sc, st, 0.3, 100, 0.01);
  CHECK(scalar_of(latent) != 0.5);
  GraphStateT<double> back = rk4_flow(fn, sched, sc, latent, 0.3, 0.01, 100);
  CHECK(scalar_of(back) == doctest::Approx(0.5).epsilon(1e-6));

  GraphStateT<double> latent2 = ode_encode(fn, sched, sc, st, 0.3, 100, 0.01);
  CHECK(scalar_of(latent2) == scalar_of(latent));
}

TEST_CASE("samplers are seed-deterministic and keep edge symmetry with a real network") {
  DenoiserConfig dcfg;
  dcfg.num_blocks = 1;
  dcfg.hidden_dim = 16;
  dcfg.num_heads = 2;
  dcfg.rw_steps = 4;
  dcfg.feat_dim = 2;
  dcfg.n_max = 6;
  Rng init(9);
  DenoiserT<double> model = make_denoiser<double>(dcfg, init);
  NoiseSchedule sched;
  ScaleSpec sc;
  NoiseFnT<double> fn = model_noise_fn(model);

  SamplerConfig cfg;
  cfg.order = 2;
  cfg.nfe = 8;
  cfg.seed = 31;

  Rng ra(31), rb(31), rc(32);
  GraphStateT<double> sa = gdpms_sample_state(fn, sched, sc, cfg, 6, 2, 4, ra);
  GraphStateT<double> sb = gdpms_sample_state(fn, sched, sc, cfg, 6, 2, 4, rb);
  GraphStateT<double> sd = gdpms_sample_state(fn, sched, sc, cfg, 6, 2, 4, rc);
  CHECK(max_abs_diff(sa, sb) == 0.0);
  CHECK(max_abs_diff(sa, sd) > 0.0);
  check_symmetric(sa);

  // symmetry after every single step, all orders
  Rng rs(5);
  GraphStateT<double> st = noise_like(empty_state<double>(6, 2, 4), rs);
  check_symmetric(st);
  StepPlan plan = build_step_plan(sched, 3, 9, 1.0, 1e-3);
  for (int i = 0; i < plan.steps(); ++i) {
    st = gdpms_step_3(fn, sched, sc, st, plan.t[i], plan.t[i + 1], plan.r1, plan.r2);
    check_symmetric(st);
  }

  Rng re(40), rf(40);
  GraphStateT<double> ea = em_sample_state(fn, sched, sc, 6, 2, 4, 12, re);
  GraphStateT<double> eb = em_sample_state(fn, sched, sc, 6, 2, 4, 12, rf);
  CHECK(max_abs_diff(ea, eb) == 0.0);
  check_symmetric(ea);

  Rng rg(50), rh(50);
  DiscreteGraph g1 = gdpms_sample(model, sched, sc, cfg, 4, rg);
  DiscreteGraph g2 = gdpms_sample(model, sched, sc, cfg, 4, rh);
  CHECK(g1 == g2);
  CHECK(g1.n == 4);
  CHECK_NOTHROW(g1.validate(1));

  SamplerConfig rcfg = cfg;
  rcfg.family = SolverFamily::rk4;
  rcfg.nfe = 8;
  Rng ri(60), rj(60);
  CHECK(rk4_sample(model, sched, sc, rcfg, 4, ri) ==
        rk4_sample(model, sched, sc, rcfg, 4, rj));

  Rng rk(70), rl(70);
  CHECK(em_sample(model, sched, sc, 4, 10, rk) == em_sample(model, sched, sc, 4, 10, rl));
}

TEST_CASE("flat predictor guidance leaves the trajectory bit-identical") {
  DenoiserConfig dcfg;
  dcfg.num_blocks = 1;
  dcfg.hidden_dim = 16;
  dcfg.num_heads = 2;
  dcfg.rw_steps = 4;
  dcfg.feat_dim = 2;
  dcfg.n_max = 6;
  Rng init(9);
  DenoiserT<double> model = make_denoiser<double>(dcfg, init);
  Rng pinit(11);
  PropertyNetT<double> pred = make_property_net<double>(dcfg, pinit);
  NoiseSchedule sched;
  ScaleSpec sc;

  // a fresh predictor ships with a zeroed output head; give it teeth first
  for (std::int64_t i = 0; i < pred.r_w2.size(); ++i)
    pred.r_w2.mutable_data()[i] = 0.05 * double(i % 5 - 2);

  SamplerConfig cfg;
  cfg.order = 1;
  cfg.nfe = 6;

  // r = 0: the guided wrapper must not even touch the predictor
  cfg.guidance_weight = 0.0;
  Rng ra(21), rb(21);
  DiscreteGraph plain = gdpms_sample(model, sched, sc, cfg, 4, ra);
  DiscreteGraph off = guided_gdpms1_sample(model, pred, sched, sc, cfg, 4, rb);
  CHECK(plain == off);

  // zeroed output head: value and input gradient vanish identically
  for (auto* t : {&pred.r_w2, &pred.r_b2})
    for (std::int64_t i = 0; i < t->size(); ++i) t->mutable_data()[i] = 0.0;
  cfg.guidance_weight = 0.8;
  Rng rc(21);
  DiscreteGraph flat = guided_gdpms1_sample(model, pred, sched, sc, cfg, 4, rc);
  CHECK(plain == flat);

  SamplerConfig bad = cfg;
  bad.order = 2;
  Rng rd(21);
  CHECK_THROWS_AS(guided_gdpms1_sample(model, pred, sched, sc, bad, 4, rd),
                  std::invalid_argument);
}

TEST_CASE("nonzero guidance bends the trajectory and stays symmetric") {
  DenoiserConfig dcfg;
  dcfg.num_blocks = 1;
  dcfg.hidden_dim = 16;
  dcfg.num_heads = 2;
  dcfg.rw_steps = 4;
  dcfg.feat_dim = 2;
  dcfg.n_max = 6;
  Rng init(9);
  DenoiserT<double> model = make_denoiser<double>(dcfg, init);
  Rng pinit(13);
  PropertyNetT<double> pred = make_property_net<double>(dcfg, pinit);
  for (std::int64_t i = 0; i < pred.r_w2.size(); ++i)
    pred.r_w2.mutable_data()[i] = 0.05 * double(i % 5 - 2);
  NoiseSchedule sched;
  ScaleSpec sc;

  NoiseFnT<double> base = model_noise_fn(model);
  NoiseFnT<double> guided = guided_noise_fn(base, pred, 1.5, sched);
  SamplerConfig cfg;
  cfg.order = 1;
  cfg.nfe = 6;
  Rng ra(77), rb(77);
  GraphStateT<double> plain = gdpms_sample_state(base, sched, sc, cfg, 6, 2, 4, ra);
  GraphStateT<double> bent = gdpms_sample_state(guided, sched, sc, cfg, 6, 2, 4, rb);
  CHECK(max_abs_diff(plain, bent) > 0.0);
  check_symmetric(bent);
}

TEST_CASE("post-processing: component selection and valency repair") {
  // 5-chain plus 3-chain: the larger component survives
  std::vector<std::string> alpha{"C", "N", "O", "F"};
  DiscreteGraph two(8);
  for (int i = 0; i + 1 < 5; ++i) two.set_edge(i, i + 1, 1);
  two.set_edge(5, 6, 1);
  two.set_edge(6, 7, 1);
  DiscreteGraph kept = post_process(two, PostProcessMode::molecule, alpha);
  CHECK(kept.n == 5);

  // generic mode passes anything through untouched
  CHECK(post_process(two, PostProcessMode::generic) == two);

  // over-valent centre: five single bonds on one carbon
  DiscreteGraph star(6);
  for (int i = 1; i < 6; ++i) star.set_edge(0, i, 1);
  DiscreteGraph fixed = post_process(star, PostProcessMode::molecule, alpha);
  Molecule m = molecule_from_graph(fixed, alpha);
  CHECK(check_valency(m).valid);

  CHECK_THROWS_AS(post_process(DiscreteGraph(), PostProcessMode::generic),
                  std::invalid_argument);
  CHECK_THROWS_AS(post_process(two, PostProcessMode::molecule, {}),
                  std::invalid_argument);
}
