#include "gdiff/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include "gdiff/common.hpp"

namespace gdiff {

int DiscreteGraph::degree(int i) const {
  int d = 0;
  for (int j = 0; j < n; ++j)
    if (j != i && has_edge(i, j)) ++d;
  return d;
}

std::vector<std::uint8_t> DiscreteGraph::adjacency() const {
  std::vector<std::uint8_t> a(std::size_t(n) * n, 0);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = edge_types[k] != 0 ? 1 : 0;
  return a;
}

void DiscreteGraph::validate(int max_node_type) const {
  if (n < 0 || node_types.size() != std::size_t(n) ||
      edge_types.size() != std::size_t(n) * std::size_t(n))
    throw std::invalid_argument("graph: field sizes inconsistent with n=" +
                                std::to_string(n));
  for (int i = 0; i < n; ++i) {
    if (node_types[std::size_t(i)] < 0 ||
        (max_node_type >= 0 && node_types[std::size_t(i)] > max_node_type))
      throw std::invalid_argument("graph: node " + std::to_string(i) +
                                  " has type " +
                                  std::to_string(node_types[std::size_t(i)]) +
                                  " outside [0, " + std::to_string(max_node_type) + "]");
    if (edge(i, i) != 0)
      throw std::invalid_argument("graph: self-loop at node " + std::to_string(i));
    for (int j = 0; j < n; ++j) {
      int t = edge(i, j);
      if (t < 0 || t > kNumEdgeTypes)
        throw std::invalid_argument("graph: edge (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") has type " +
                                    std::to_string(t));
      if (t != edge(j, i))
        throw std::invalid_argument("graph: asymmetric edge (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
    }
  }
}

std::vector<double> rw_return_probs(const DiscreteGraph& g, int m) {
  if (m < 1) throw std::invalid_argument("rw_return_probs: m must be >= 1");
  int n = g.n;
  std::vector<double> rw(std::size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    int d = g.degree(i);
    if (d == 0) continue;  // isolated: zero row
    for (int j = 0; j < n; ++j)
      if (j != i && g.has_edge(i, j)) rw[std::size_t(i) * n + j] = 1.0 / d;
  }
  std::vector<double> p = rw, next(std::size_t(n) * n, 0.0);
  std::vector<double> out(std::size_t(n) * m, 0.0);
  for (int k = 1; k <= m; ++k) {
    for (int i = 0; i < n; ++i) out[std::size_t(i) * m + (k - 1)] = p[std::size_t(i) * n + i];
    if (k == m) break;
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l) {
        double v = p[std::size_t(i) * n + l];
        if (v == 0.0) continue;
        for (int j = 0; j < n; ++j) next[std::size_t(i) * n + j] += v * rw[std::size_t(l) * n + j];
      }
    p.swap(next);
  }
  return out;
}

std::vector<int> spd_encodings(const DiscreteGraph& g, int m) {
  if (m < 1) throw std::invalid_argument("spd_encodings: m must be >= 1");
  int n = g.n;
  std::vector<int> out(std::size_t(n) * n, m + 1);
  std::vector<int> dist(std::size_t(n), -1);
  std::deque<int> q;
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[std::size_t(s)] = 0;
    q.clear();
    q.push_back(s);
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      for (int v = 0; v < n; ++v)
        if (v != u && g.has_edge(u, v) && dist[std::size_t(v)] < 0) {
          dist[std::size_t(v)] = dist[std::size_t(u)] + 1;
          q.push_back(v);
        }
    }
    for (int v = 0; v < n; ++v) {
      int d = dist[std::size_t(v)];
      out[std::size_t(s) * n + v] = v == s ? 0 : (d < 0 ? m + 1 : std::min(d, m));
    }
  }
  return out;
}

void check_permutation(const std::vector<int>& perm, int n) {
  if (perm.size() != std::size_t(n))
    throw std::invalid_argument("permutation: length " + std::to_string(perm.size()) +
                                ", expected " + std::to_string(n));
  std::vector<std::uint8_t> seen(std::size_t(n), 0);
  for (int v : perm) {
    if (v < 0 || v >= n || seen[std::size_t(v)])
      throw std::invalid_argument("permutation: not a bijection on [0, " +
                                  std::to_string(n) + ")");
    seen[std::size_t(v)] = 1;
  }
}

DiscreteGraph permute(const DiscreteGraph& g, const std::vector<int>& perm) {
  check_permutation(perm, g.n);
  DiscreteGraph out(g.n);
  for (int i = 0; i < g.n; ++i)
    out.node_types[std::size_t(perm[std::size_t(i)])] = g.node_types[std::size_t(i)];
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      out.edge_types[std::size_t(perm[std::size_t(i)]) * g.n + perm[std::size_t(j)]] =
          g.edge(i, j);
  return out;
}

void NodeCountHist::add(int n) {
  if (n < 0) throw std::invalid_argument("NodeCountHist::add: negative count");
  if (counts.size() <= std::size_t(n)) counts.resize(std::size_t(n) + 1, 0);
  ++counts[std::size_t(n)];
}

std::int64_t NodeCountHist::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

int NodeCountHist::max_count() const {
  for (int i = int(counts.size()) - 1; i >= 0; --i)
    if (counts[std::size_t(i)] > 0) return i;
  return 0;
}

int NodeCountHist::sample(Rng& rng) const {
  std::int64_t t = total();
  if (t <= 0) throw std::runtime_error("NodeCountHist::sample: empty histogram");
  std::int64_t r = rng.uniform_int(std::int64_t(0), t - 1);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (r < counts[i]) return int(i);
    r -= counts[i];
  }
  return int(counts.size()) - 1;  // unreachable
}

std::string write_graphs(const std::vector<DiscreteGraph>& gs) {
  std::ostringstream os;
  for (const DiscreteGraph& g : gs) {
    g.validate();
    os << "N " << g.n << "\n";
    os << "V";
    for (int i = 0; i < g.n; ++i) os << " " << g.node_types[std::size_t(i)];
    os << "\n";
    for (int i = 0; i < g.n; ++i)
      for (int j = i + 1; j < g.n; ++j)
        if (g.has_edge(i, j)) os << "E " << i << " " << j << " " << g.edge(i, j) << "\n";
    os << "\n";
  }
  return os.str();
}

namespace {

struct LineReader {
  const std::string& text;
  std::size_t pos = 0;

  bool next(std::string& line, std::size_t& line_off) {
    if (pos >= text.size()) return false;
    line_off = pos;
    std::size_t e = text.find('\n', pos);
    if (e == std::string::npos) {
      line = text.substr(pos);
      pos = text.size();
    } else {
      line = text.substr(pos, e - pos);
      pos = e + 1;
    }
    return true;
  }
};

[[noreturn]] void parse_fail(const std::string& msg, std::size_t off) {
  throw ParseError("graph file: " + msg, off);
}

}  // namespace

std::vector<DiscreteGraph> read_graphs(const std::string& text) {
  std::vector<DiscreteGraph> out;
  LineReader lr{text};
  std::string line;
  std::size_t off = 0;
  bool have = false;
  DiscreteGraph g;
  bool saw_nodes = false;
  auto finish = [&]() {
    if (!have) return;
    if (!saw_nodes) parse_fail("graph missing V line", off);
    g.validate();
    out.push_back(std::move(g));
    have = false;
    saw_nodes = false;
  };
  while (lr.next(line, off)) {
    // strip trailing carriage return, tolerate whitespace-only separators
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) {
      finish();
      continue;
    }
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "N") {
      if (have) finish();
      int n = -1;
      if (!(is >> n) || n < 1) parse_fail("bad node count in N line", off);
      g = DiscreteGraph(n);
      have = true;
      saw_nodes = false;
    } else if (tag == "V") {
      if (!have) parse_fail("V line before N line", off);
      for (int i = 0; i < g.n; ++i) {
        int t = -1;
        if (!(is >> t) || t < 0) parse_fail("V line needs " + std::to_string(g.n) +
                                            " non-negative types", off);
        g.node_types[std::size_t(i)] = t;
      }
      int extra;
      if (is >> extra) parse_fail("V line has more entries than nodes", off);
      saw_nodes = true;
    } else if (tag == "E") {
      if (!have || !saw_nodes) parse_fail("E line outside a graph record", off);
      int i = -1, j = -1, t = -1;
      if (!(is >> i >> j >> t)) parse_fail("E line needs <i> <j> <type>", off);
      if (i < 0 || j < 0 || i >= g.n || j >= g.n)
        parse_fail("edge endpoint out of range", off);
      if (i == j) parse_fail("self-loop edge", off);
      if (t < 1 || t > kNumEdgeTypes) parse_fail("edge type outside 1..3", off);
      if (g.has_edge(i, j)) parse_fail("duplicate edge", off);
      g.set_edge(i, j, t);
    } else {
      parse_fail("unknown line tag '" + tag + "'", off);
    }
  }
  finish();
  return out;
}

void save_graphs(const std::string& path, const std::vector<DiscreteGraph>& gs) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::string s = write_graphs(gs);
  f.write(s.data(), std::streamsize(s.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<DiscreteGraph> load_graphs(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return read_graphs(ss.str());
}

}  // namespace gdiff
