#pragma once

#include <utility>

#include "gdiff/tensor.hpp"

namespace gdiff {

// variance-preserving noise schedule: the forward process
//   dx = f(t) x dt + g(t) dW,  beta(t) linear in t,
// with closed forms for the marginal coefficients alpha_t, sigma_t,
// the half-log-SNR lambda(t) and its exact inverse.
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double T = 1.0;

  NoiseSchedule() = default;
  NoiseSchedule(double bmin, double bmax, double horizon);

  double beta(double t) const;
  double log_alpha(double t) const;

  // (alpha_t, sigma_t) with alpha^2 + sigma^2 = 1
  std::pair<double, double> alpha_sigma(double t) const;

  // (f(t), g(t)) = (-beta/2, sqrt(beta))
  std::pair<double, double> drift_diffusion(double t) const;

  double lambda_of_t(double t) const;
  double t_of_lambda(double lam) const;

  // loss weighting; uniform
  double weight(double) const { return 1.0; }

 private:
  void check_time(double t, const char* who) const;
};

// Sample from the forward transition kernel: alpha_t * x0 + sigma_t * noise.
// Differentiable through x0 and noise when a tape is active.
template <typename T>
TensorT<T> perturb(const NoiseSchedule& sched, const TensorT<T>& x0, double t,
                   const TensorT<T>& noise) {
  if (x0.shape() != noise.shape())
    shape_fail("perturb", "x0 " + shape_str(x0.shape()) + " vs noise " +
                              shape_str(noise.shape()));
  auto [a, s] = sched.alpha_sigma(t);
  return add(scale(x0, a), scale(noise, s));
}

}  // namespace gdiff
