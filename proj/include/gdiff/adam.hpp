#pragma once

// Adam with bias correction. State lives beside the parameters; update order
// is the caller's iteration order, which must be deterministic.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdiff/tensor.hpp"

namespace gdiff {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamStateT {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;  // shared across params; caller bumps once per optimizer step
};

// In-place update of one parameter tensor. `state.step` must already be
// incremented to the current step (1-based) before the first call of a sweep.
template <class T>
void adam_update(TensorT<T>& param, const std::vector<T>& grad, AdamStateT<T>& st,
                 const AdamConfig& cfg, const std::string& name) {
  if (std::int64_t(grad.size()) != param.size())
    throw std::invalid_argument("adam_update: grad size mismatch for '" + name + "'");
  if (st.m.empty()) st.m.assign(grad.size(), T(0));
  if (st.v.empty()) st.v.assign(grad.size(), T(0));
  if (st.m.size() != grad.size() || st.v.size() != grad.size())
    throw std::invalid_argument("adam_update: state size mismatch for '" + name + "'");
  for (const T& g : grad)
    if (!std::isfinite(double(g)))
      throw std::runtime_error("adam_update: non-finite gradient in '" + name + "'");
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(st.step));
  const double bc2 = 1.0 - std::pow(b2, double(st.step));
  T* p = param.mutable_data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double g = double(grad[i]);
    double m = b1 * double(st.m[i]) + (1.0 - b1) * g;
    double v = b2 * double(st.v[i]) + (1.0 - b2) * g * g;
    st.m[i] = T(m);
    st.v[i] = T(v);
    double mhat = m / bc1;
    double vhat = v / bc2;
    p[i] = T(double(p[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

}  // namespace gdiff
