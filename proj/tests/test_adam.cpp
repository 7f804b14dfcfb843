#include <cmath>

#include "doctest.h"
#include "gdiff/adam.hpp"

using namespace gdiff;

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5});
  auto before = p.values();
  AdamStateT<double> st;
  st.step = 1;
  adam_update(p, std::vector<double>{0, 0, 0}, st, AdamConfig{}, "p");
  CHECK(p.values() == before);
}

TEST_CASE("single scalar step matches hand-computed update") {
  // g=1, lr=0.1, first step: mhat=1, vhat=1, delta = -0.1/(1+eps)
  Tensor p = Tensor::from({1}, {0.0});
  AdamStateT<double> st;
  st.step = 1;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_update(p, std::vector<double>{1.0}, st, cfg, "p");
  double expect = -0.1 * 1.0 / (1.0 + cfg.eps);
  CHECK(p.data()[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(st.m[0] == doctest::Approx(0.1));
  CHECK(st.v[0] == doctest::Approx(0.001));

  // second step with same gradient, recompute by hand
  st.step = 2;
  adam_update(p, std::vector<double>{1.0}, st, cfg, "p");
  double m2 = 0.9 * 0.1 + 0.1 * 1.0;
  double v2 = 0.999 * 0.001 + 0.001 * 1.0;
  double mhat = m2 / (1.0 - std::pow(0.9, 2));
  double vhat = v2 / (1.0 - std::pow(0.999, 2));
  double expect2 = expect - 0.1 * mhat / (std::sqrt(vhat) + cfg.eps);
  CHECK(p.data()[0] == doctest::Approx(expect2).epsilon(1e-12));
}

TEST_CASE("non-finite gradient raises with parameter name") {
  Tensor p = Tensor::from({2}, {0.0, 0.0});
  AdamStateT<double> st;
  st.step = 1;
  bool threw = false;
  try {
    adam_update(p, std::vector<double>{1.0, std::nan("")}, st, AdamConfig{}, "blocks.0.w");
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("blocks.0.w") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("updates are deterministic") {
  auto run = [] {
    Tensor p = Tensor::from({4}, {0.1, 0.2, 0.3, 0.4});
    AdamStateT<double> st;
    AdamConfig cfg;
    for (int s = 1; s <= 50; ++s) {
      st.step = s;
      std::vector<double> g = {0.3, -0.2, 0.05 * s, -1.0 / s};
      adam_update(p, g, st, cfg, "p");
    }
    return p.values();
  };
  CHECK(run() == run());
}

TEST_CASE("descends a simple quadratic") {
  Tensor p = Tensor::from({1}, {3.0});
  AdamStateT<double> st;
  AdamConfig cfg;
  cfg.lr = 0.05;
  for (int s = 1; s <= 2000; ++s) {
    st.step = s;
    adam_update(p, std::vector<double>{2.0 * p.data()[0]}, st, cfg, "p");
  }
  CHECK(std::fabs(p.data()[0]) < 1e-3);
}
