#include "gdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gdiff {

NoiseSchedule::NoiseSchedule(double bmin, double bmax, double horizon)
    : beta_min(bmin), beta_max(bmax), T(horizon) {
  if (!(bmin > 0.0) || !(bmax > bmin))
    throw std::invalid_argument("NoiseSchedule: need 0 < beta_min < beta_max, got " +
                                std::to_string(bmin) + ", " + std::to_string(bmax));
  if (!(horizon > 0.0))
    throw std::invalid_argument("NoiseSchedule: horizon must be positive");
}

void NoiseSchedule::check_time(double t, const char* who) const {
  if (!(t >= 0.0) || !(t <= T))
    throw std::out_of_range(std::string(who) + ": t=" + std::to_string(t) +
                            " outside [0, " + std::to_string(T) + "]");
}

double NoiseSchedule::beta(double t) const {
  check_time(t, "beta");
  return beta_min + t * (beta_max - beta_min);
}

double NoiseSchedule::log_alpha(double t) const {
  check_time(t, "log_alpha");
  return -0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min;
}

std::pair<double, double> NoiseSchedule::alpha_sigma(double t) const {
  double la = log_alpha(t);
  double a = std::exp(la);
  // sigma^2 = 1 - alpha^2 = -expm1(2 log alpha); exact 0 at t=0
  double s = std::sqrt(-std::expm1(2.0 * la));
  return {a, s};
}

std::pair<double, double> NoiseSchedule::drift_diffusion(double t) const {
  double b = beta(t);
  return {-0.5 * b, std::sqrt(b)};
}

double NoiseSchedule::lambda_of_t(double t) const {
  check_time(t, "lambda_of_t");
  if (!(t > 0.0)) throw std::out_of_range("lambda_of_t: t must be > 0");
  double la = log_alpha(t);
  // lambda = log(alpha/sigma) = log_alpha - 0.5 log(sigma^2)
  return la - 0.5 * std::log(-std::expm1(2.0 * la));
}

double NoiseSchedule::t_of_lambda(double lam) const {
  if (!std::isfinite(lam)) throw std::out_of_range("t_of_lambda: lambda not finite");
  // -2 log alpha = log(1 + e^{-2 lambda}) =: L, then solve the quadratic
  //   0.5 t^2 (beta_max - beta_min) + t beta_min = L
  // for the root inside [0, T], written to avoid cancellation.
  double x = -2.0 * lam;
  double L = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  double d = beta_max - beta_min;
  double tmp = 2.0 * d * L;
  double t = tmp / ((std::sqrt(beta_min * beta_min + tmp) + beta_min) * d);
  if (t > T * (1.0 + 1e-9))
    throw std::out_of_range("t_of_lambda: lambda=" + std::to_string(lam) +
                            " below the attainable range (maps past t=T)");
  return std::min(t, T);
}

}  // namespace gdiff
