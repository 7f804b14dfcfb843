#pragma once

// Central-difference gradient oracle. Reruns the given loss closure with each
// probed coordinate nudged by +-h and compares against the taped gradient.
// Error metric is |fd - ad| / max(floor, |fd|, |ad|), so noise-level
// disagreements on near-zero gradients do not trip the check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "gdiff/rng.hpp"
#include "gdiff/tensor.hpp"

namespace fdtest {

struct FdResult {
  double max_err = 0.0;
  std::int64_t checked = 0;
};

// loss_fn must recompute the forward pass from the current tensor contents.
// sample_per_tensor < 0 checks every coordinate.
inline FdResult fd_check(const std::function<gdiff::Tensor()>& loss_fn,
                         std::vector<gdiff::Tensor> params, double h = 1e-5,
                         std::int64_t sample_per_tensor = -1, double floor = 1e-3,
                         std::uint64_t seed = 20240817) {
  using namespace gdiff;
  Tape tape;
  {
    TapeScope sc(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  FdResult res;
  Rng rng(seed);
  for (auto& p : params) {
    const std::vector<double>* g = tape.grad(p);
    std::vector<std::int64_t> coords;
    std::int64_t n = p.size();
    if (sample_per_tensor < 0 || n <= sample_per_tensor) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      std::set<std::int64_t> seen;
      while (std::int64_t(seen.size()) < sample_per_tensor) seen.insert(rng.uniform_int(0, n - 1));
      coords.assign(seen.begin(), seen.end());
    }
    for (auto c : coords) {
      double* d = p.mutable_data();
      double orig = d[c];
      double lp, lm;
      d[c] = orig + h;
      {
        NoTapeScope ns;
        lp = loss_fn().item();
      }
      d[c] = orig - h;
      {
        NoTapeScope ns;
        lm = loss_fn().item();
      }
      d[c] = orig;
      double fd = (lp - lm) / (2.0 * h);
      double ad = g ? (*g)[std::size_t(c)] : 0.0;
      double err = std::fabs(fd - ad) / std::max({floor, std::fabs(fd), std::fabs(ad)});
      res.max_err = std::max(res.max_err, err);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace fdtest
