#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "gdiff/common.hpp"
#include "gdiff/graph.hpp"
#include "gdiff/rng.hpp"

using namespace gdiff;

namespace {

DiscreteGraph triangle() {
  DiscreteGraph g(3);
  g.set_edge(0, 1, 1);
  g.set_edge(1, 2, 1);
  g.set_edge(0, 2, 1);
  return g;
}

DiscreteGraph path3() {
  DiscreteGraph g(3);
  g.set_edge(0, 1, 1);
  g.set_edge(1, 2, 1);
  return g;
}

DiscreteGraph random_graph(Rng& rng, int n, int num_types, double p) {
  DiscreteGraph g(n);
  for (int i = 0; i < n; ++i) g.node_types[std::size_t(i)] = int(rng.uniform_int(0, num_types - 1));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p) g.set_edge(i, j, int(rng.uniform_int(1, 3)));
  return g;
}

}  // namespace

TEST_CASE("encode places a single node at the scale endpoints") {
  DiscreteGraph g(1);
  g.node_types[0] = 1;
  ScaleSpec sc;
  GraphState st = encode<double>(g, sc, 4, 3);
  CHECK(st.n == 1);
  CHECK(st.X.data()[0] == -0.5);
  CHECK(st.X.data()[1] == 0.5);
  CHECK(st.X.data()[2] == -0.5);
  // active block of both edge channels sits at edge_lo; padding stays zero
  CHECK(st.A.data()[0] == -1.0);
  CHECK(st.A.data()[16] == -1.0);
  CHECK(st.A.data()[1] == 0.0);
  CHECK(st.A.data()[5] == 0.0);
  for (int f = 3; f < 8; ++f) CHECK(st.X.data()[f] == 0.0);
}

TEST_CASE("encode puts single-bond triangle existence at the scale endpoints") {
  GraphState st = encode<double>(triangle(), ScaleSpec{}, 3, 2);
  const double* a = st.A.data();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(a[i * 3 + j] == (i == j ? -1.0 : 1.0));
  // type channel: single bonds at -1/3
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(a[9 + i * 3 + j] == doctest::Approx(i == j ? -1.0 : -1.0 / 3).epsilon(1e-12));
}

TEST_CASE("decode inverts encode over a random corpus") {
  Rng rng(42);
  ScaleSpec sc;
  for (int trial = 0; trial < 200; ++trial) {
    int n = int(rng.uniform_int(1, 12));
    int f = int(rng.uniform_int(1, 5));
    DiscreteGraph g = random_graph(rng, n, f, 0.4);
    GraphState st = encode<double>(g, sc, 16, f);
    CHECK(decode(st, sc) == g);
  }
}

TEST_CASE("float states roundtrip the same way") {
  Rng rng(43);
  ScaleSpec sc;
  for (int trial = 0; trial < 50; ++trial) {
    DiscreteGraph g = random_graph(rng, int(rng.uniform_int(1, 10)), 4, 0.4);
    GraphStateT<float> st = encode<float>(g, sc, 12, 4);
    CHECK(quantize(st, sc) == g);
  }
}

TEST_CASE("quantize thresholds the existence channel at the scale midpoint") {
  ScaleSpec sc;
  GraphState st = empty_state<double>(2, 1, 2);
  double* a = st.A.mutable_data();
  auto set_pair = [&](double ex, double ty) {
    a[1] = a[2] = ex;
    a[4 + 1] = a[4 + 2] = ty;
  };
  set_pair(0.7, 1.0);
  CHECK(quantize(st, sc).has_edge(0, 1));
  CHECK(quantize(st, sc).edge(0, 1) == 3);
  set_pair(-0.2, 1.0);
  CHECK(!quantize(st, sc).has_edge(0, 1));
  set_pair(0.0, 1.0);  // tie goes to absence
  CHECK(!quantize(st, sc).has_edge(0, 1));
  // nearest ordinal level: -1/3 is a single bond, 0.1 rounds to double
  set_pair(0.7, -1.0 / 3);
  CHECK(quantize(st, sc).edge(0, 1) == 1);
  set_pair(0.7, 0.1);
  CHECK(quantize(st, sc).edge(0, 1) == 2);
  // asymmetric channel values are averaged before thresholding
  a[1] = 0.9; a[2] = -0.5; a[5] = -1.0 / 3; a[6] = -1.0 / 3;
  CHECK(quantize(st, sc).has_edge(0, 1));
  a[1] = 0.3; a[2] = -0.5;
  CHECK(!quantize(st, sc).has_edge(0, 1));
}

TEST_CASE("quantize survives symmetric noise below half the level gap") {
  Rng rng(7);
  ScaleSpec sc;
  for (int trial = 0; trial < 100; ++trial) {
    DiscreteGraph g = random_graph(rng, int(rng.uniform_int(2, 10)), 3, 0.5);
    GraphState st = encode<double>(g, sc, 12, 3);
    double* px = st.X.mutable_data();
    double* pa = st.A.mutable_data();
    for (int i = 0; i < g.n; ++i)
      for (int f = 0; f < 3; ++f) px[i * 3 + f] += rng.uniform(-0.15, 0.15);
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < g.n; ++i)
        for (int j = i + 1; j < g.n; ++j) {
          double z = rng.uniform(-0.15, 0.15);
          pa[c * 144 + i * 12 + j] += z;
          pa[c * 144 + j * 12 + i] += z;
        }
    CHECK(quantize(st, sc) == g);
  }
}

TEST_CASE("random-walk return probabilities match brute force on small graphs") {
  Tensor tri = rw_encodings<double>(triangle(), 3);
  // k=1: no self loops
  for (int i = 0; i < 3; ++i) CHECK(tri.data()[i * 3 + 0] == 0.0);
  // k=2: return via either neighbour = 2 * (1/2 * 1/2)
  for (int i = 0; i < 3; ++i) CHECK(tri.data()[i * 3 + 1] == doctest::Approx(0.5).epsilon(1e-12));
  Tensor p = rw_encodings<double>(path3(), 2);
  CHECK(p.data()[0 * 2 + 1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.data()[1 * 2 + 1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.data()[2 * 2 + 1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("random-walk features of an isolated node are identically zero") {
  DiscreteGraph g(3);
  g.set_edge(0, 1, 1);  // node 2 isolated
  Tensor f = rw_encodings<double>(g, 4);
  for (int k = 0; k < 4; ++k) CHECK(f.data()[2 * 4 + k] == 0.0);
  // the connected pair bounces back deterministically on even steps
  CHECK(f.data()[0 * 4 + 1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.data()[0 * 4 + 3] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("random-walk features against a dense matrix-power oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    int n = int(rng.uniform_int(2, 9));
    DiscreteGraph g = random_graph(rng, n, 2, 0.5);
    int m = 5;
    Tensor f = rw_encodings<double>(g, m);
    // oracle: explicit repeated multiplication in fresh code
    std::vector<double> rw(n * n, 0.0);
    for (int i = 0; i < n; ++i) {
      int d = g.degree(i);
      for (int j = 0; j < n; ++j)
        if (i != j && g.has_edge(i, j) && d > 0) rw[i * n + j] = 1.0 / d;
    }
    std::vector<double> acc(n * n, 0.0);
    for (int i = 0; i < n; ++i) acc[i * n + i] = 1.0;  // identity
    for (int k = 1; k <= m; ++k) {
      std::vector<double> nxt(n * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int l = 0; l < n; ++l)
          for (int j = 0; j < n; ++j) nxt[i * n + j] += acc[i * n + l] * rw[l * n + j];
      acc = nxt;
      for (int i = 0; i < n; ++i)
        CHECK(f.data()[i * m + (k - 1)] == doctest::Approx(acc[i * n + i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("shortest-path categories: adjacency, distance two, cutoff, unreachable") {
  std::vector<int> p = spd_encodings(path3(), 4);
  CHECK(p[0 * 3 + 0] == 0);
  CHECK(p[0 * 3 + 1] == 1);
  CHECK(p[0 * 3 + 2] == 2);
  CHECK(p[2 * 3 + 0] == 2);
  // chain of 6 nodes with cutoff 3: distance 5 truncates to 3
  DiscreteGraph chain(6);
  for (int i = 0; i < 5; ++i) chain.set_edge(i, i + 1, 1);
  std::vector<int> c = spd_encodings(chain, 3);
  CHECK(c[0 * 6 + 5] == 3);
  CHECK(c[0 * 6 + 3] == 3);
  CHECK(c[0 * 6 + 2] == 2);
  // two components: cross pairs get the reserved unreachable slot m+1
  DiscreteGraph two(4);
  two.set_edge(0, 1, 1);
  two.set_edge(2, 3, 1);
  std::vector<int> t = spd_encodings(two, 5);
  CHECK(t[0 * 4 + 2] == 6);
  CHECK(t[3 * 4 + 1] == 6);
  CHECK(t[0 * 4 + 1] == 1);
}

TEST_CASE("structural encodings are permutation-equivariant") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    int n = int(rng.uniform_int(2, 10));
    DiscreteGraph g = random_graph(rng, n, 2, 0.4);
    std::vector<int> perm(std::size_t(n), 0);
    for (int i = 0; i < n; ++i) perm[std::size_t(i)] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[std::size_t(i)], perm[std::size_t(rng.uniform_int(0, i))]);
    DiscreteGraph pg = permute(g, perm);
    int m = 4;
    Tensor f = rw_encodings<double>(g, m);
    Tensor pf = rw_encodings<double>(pg, m);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < m; ++k)
        CHECK(pf.data()[perm[std::size_t(i)] * m + k] ==
              doctest::Approx(f.data()[i * m + k]).epsilon(1e-12));
    std::vector<int> s = spd_encodings(g, m);
    std::vector<int> ps = spd_encodings(pg, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(ps[std::size_t(perm[std::size_t(i)] * n + perm[std::size_t(j)])] ==
              s[std::size_t(i * n + j)]);
  }
}

TEST_CASE("permute: identity, inverse composition, and degree preservation") {
  Rng rng(13);
  DiscreteGraph g = random_graph(rng, 7, 3, 0.5);
  GraphState st = encode<double>(g, ScaleSpec{}, 10, 3);
  std::vector<int> id{0, 1, 2, 3, 4, 5, 6};
  GraphState same = permute(st, id);
  for (std::int64_t i = 0; i < st.X.size(); ++i) CHECK(same.X.data()[i] == st.X.data()[i]);
  for (std::int64_t i = 0; i < st.A.size(); ++i) CHECK(same.A.data()[i] == st.A.data()[i]);
  std::vector<int> perm{3, 0, 6, 2, 5, 1, 4};
  std::vector<int> inv(7);
  for (int i = 0; i < 7; ++i) inv[std::size_t(perm[std::size_t(i)])] = i;
  GraphState back = permute(permute(st, perm), inv);
  for (std::int64_t i = 0; i < st.A.size(); ++i) CHECK(back.A.data()[i] == st.A.data()[i]);
  // degree multiset survives permutation + quantization
  DiscreteGraph q = quantize(permute(st, perm), ScaleSpec{});
  std::multiset<int> d0, d1;
  for (int i = 0; i < 7; ++i) d0.insert(g.degree(i));
  for (int i = 0; i < 7; ++i) d1.insert(q.degree(i));
  CHECK(d0 == d1);
  std::vector<int> bad{0, 0, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(permute(st, bad), std::invalid_argument);
}

TEST_CASE("node-count sampling follows the empirical frequencies") {
  NodeCountHist h;
  h.add(15);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) CHECK(h.sample(rng) == 15);
  NodeCountHist h2;
  for (int i = 0; i < 50; ++i) { h2.add(10); h2.add(12); }
  int c10 = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    if (h2.sample(rng) == 10) ++c10;
  double freq = double(c10) / draws;
  double se = std::sqrt(0.25 / draws);
  CHECK(std::abs(freq - 0.5) < 4 * se);
  CHECK(h2.max_count() == 12);
  NodeCountHist empty;
  CHECK_THROWS_AS((void)empty.sample(rng), std::runtime_error);
}

TEST_CASE("noise_like draws symmetric unit-variance edge noise with a clean border") {
  Rng rng(21);
  GraphState tmpl = empty_state<double>(8, 2, 5);
  double sum = 0.0, sumsq = 0.0;
  int cnt = 0;
  for (int rep = 0; rep < 500; ++rep) {
    GraphState z = noise_like(tmpl, rng);
    const double* a = z.A.data();
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          double v = a[c * 64 + i * 8 + j];
          if (i == j) CHECK(v == 0.0);
          if (i >= 5 || j >= 5) CHECK(v == 0.0);
          CHECK(v == a[c * 64 + j * 8 + i]);
          if (i < j && j < 5) { sum += v; sumsq += v * v; ++cnt; }
        }
    const double* x = z.X.data();
    for (int i = 5; i < 8; ++i)
      for (int f = 0; f < 2; ++f) CHECK(x[i * 2 + f] == 0.0);
  }
  double mean = sum / cnt;
  double var = sumsq / cnt - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(double(cnt)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / (cnt - 1.0)));
}

TEST_CASE("graph text format roundtrips byte-exactly and canonicalizes") {
  Rng rng(31);
  std::vector<DiscreteGraph> gs;
  for (int i = 0; i < 20; ++i) gs.push_back(random_graph(rng, int(rng.uniform_int(1, 9)), 4, 0.4));
  std::string text = write_graphs(gs);
  std::vector<DiscreteGraph> back = read_graphs(text);
  REQUIRE(back.size() == gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) CHECK(back[i] == gs[i]);
  CHECK(write_graphs(back) == text);
  // edges listed in reverse order parse to the same graph
  std::string manual = "N 3\nV 0 1 0\nE 2 0 2\nE 1 0 1\n";
  std::vector<DiscreteGraph> m = read_graphs(manual);
  REQUIRE(m.size() == 1);
  CHECK(m[0].edge(0, 2) == 2);
  CHECK(m[0].edge(0, 1) == 1);
  CHECK(write_graphs(m) == "N 3\nV 0 1 0\nE 0 1 1\nE 0 2 2\n\n");
}

TEST_CASE("graph text parser rejects malformed input with byte offsets") {
  CHECK_THROWS_AS((void)read_graphs("N 2\nV 0 0\nE 0 0 1\n"), ParseError);
  CHECK_THROWS_AS((void)read_graphs("N 2\nV 0 0\nE 0 1 7\n"), ParseError);
  CHECK_THROWS_AS((void)read_graphs("N 2\nV 0 0\nE 0 1 1\nE 1 0 2\n"), ParseError);
  CHECK_THROWS_AS((void)read_graphs("N 2\nV 0 0 0\n"), ParseError);
  CHECK_THROWS_AS((void)read_graphs("N 2\nV 0\n"), ParseError);
  CHECK_THROWS_AS((void)read_graphs("Q 2\n"), ParseError);
  CHECK_THROWS_AS((void)read_graphs("V 0 0\n"), ParseError);
  try {
    (void)read_graphs("N 2\nV 0 0\nE 0 5 1\n");
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.offset == 10);  // the E line starts at byte 10
    CHECK(std::string(e.what()).find("byte 10") != std::string::npos);
  }
}

TEST_CASE("encode rejects graphs that exceed capacity or the type alphabet") {
  DiscreteGraph g(5);
  CHECK_THROWS_AS(encode<double>(g, ScaleSpec{}, 4, 2), std::invalid_argument);
  DiscreteGraph h(2);
  h.node_types[1] = 3;
  CHECK_THROWS_AS(encode<double>(h, ScaleSpec{}, 4, 3), std::invalid_argument);
  CHECK_NOTHROW(encode<double>(h, ScaleSpec{}, 4, 4));
}

TEST_CASE("encoding into wider padding leaves the active block untouched") {
  Rng rng(77);
  DiscreteGraph g = random_graph(rng, 6, 3, 0.5);
  GraphState a = encode<double>(g, ScaleSpec{}, 6, 3);
  GraphState b = encode<double>(g, ScaleSpec{}, 11, 3);
  for (int i = 0; i < 6; ++i)
    for (int f = 0; f < 3; ++f)
      CHECK(a.X.data()[i * 3 + f] == b.X.data()[i * 3 + f]);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        CHECK(a.A.data()[c * 36 + i * 6 + j] == b.A.data()[c * 121 + i * 11 + j]);
  CHECK(quantize(b, ScaleSpec{}) == g);
}
