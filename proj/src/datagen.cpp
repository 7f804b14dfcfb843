#include "gdiff/datagen.hpp"

#include "gdiff/chem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace gdiff {

void DatasetSpec::validate() const {
  if (kind != "community_small" && kind != "ego_from_network" &&
      kind != "molecule_file" && kind != "file")
    throw std::invalid_argument("DatasetSpec: unknown kind '" + kind + "'");
  if (kind == "file" && path.empty())
    throw std::invalid_argument("DatasetSpec: kind 'file' needs path");
  if (count <= 0) throw std::invalid_argument("DatasetSpec: count must be positive");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw std::invalid_argument("DatasetSpec: split_ratio must lie in (0,1)");
  if (kind == "ego_from_network") {
    if (network_path.empty())
      throw std::invalid_argument("DatasetSpec: ego_from_network needs network_path");
    if (hops < 1) throw std::invalid_argument("DatasetSpec: hops must be >= 1");
    if (min_nodes < 1 || max_nodes < min_nodes)
      throw std::invalid_argument("DatasetSpec: bad node bounds");
  }
  if (kind == "molecule_file" && molecule_path.empty())
    throw std::invalid_argument("DatasetSpec: molecule_file needs molecule_path");
}

std::vector<DiscreteGraph> gen_community_small(int count, Rng& rng) {
  std::vector<DiscreteGraph> out;
  out.reserve(std::size_t(count));
  const int kMaxEdges = 62;
  while (int(out.size()) < count) {
    int n = int(rng.uniform_int(12, 20));
    int half = (n + 1) / 2;
    DiscreteGraph g(n);
    int edges = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        bool same = (i < half) == (j < half);
        if (rng.uniform() < (same ? 0.7 : 0.05)) {
          g.set_edge(i, j, 1);
          ++edges;
        }
      }
    bool linked = false;
    for (int i = 0; i < half && !linked; ++i)
      for (int j = half; j < n && !linked; ++j) linked = g.has_edge(i, j);
    if (!linked) {
      int i = int(rng.uniform_int(0, half - 1));
      int j = int(rng.uniform_int(half, n - 1));
      g.set_edge(i, j, 1);
      ++edges;
    }
    if (edges > kMaxEdges) continue;  // redraw the whole graph, n included
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

struct Network {
  std::vector<std::vector<int>> adj;  // compact ids, sorted neighbours
};

Network read_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("extract_ego: cannot open '" + path + "'");
  std::unordered_map<long long, int> id;
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int lineno = 0;
  auto intern = [&](long long v) {
    auto it = id.find(v);
    if (it != id.end()) return it->second;
    int k = int(id.size());
    id.emplace(v, k);
    return k;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long long u, v;
    if (!(ls >> u)) continue;  // blank / comment-only line
    if (!(ls >> v))
      throw std::runtime_error("extract_ego: '" + path + "' line " +
                               std::to_string(lineno) + ": expected 'u v'");
    long long extra;
    if (ls >> extra)
      throw std::runtime_error("extract_ego: '" + path + "' line " +
                               std::to_string(lineno) + ": trailing fields");
    if (u == v) continue;  // self-loops carry no structure here
    edges.emplace_back(intern(u), intern(v));
  }
  Network net;
  net.adj.resize(id.size());
  for (auto [a, b] : edges) {
    net.adj[std::size_t(a)].push_back(b);
    net.adj[std::size_t(b)].push_back(a);
  }
  for (auto& nb : net.adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return net;
}

}  // namespace

std::vector<DiscreteGraph> extract_ego(const std::string& network_path, int hops,
                                       int min_nodes, int max_nodes, int count,
                                       Rng& rng) {
  Network net = read_network(network_path);
  int nv = int(net.adj.size());
  std::vector<int> centers(std::size_t(nv), 0);
  std::iota(centers.begin(), centers.end(), 0);
  for (int i = nv - 1; i > 0; --i)
    std::swap(centers[std::size_t(i)], centers[std::size_t(rng.uniform_int(0, i))]);

  std::vector<DiscreteGraph> out;
  std::vector<int> dist(std::size_t(nv), -1);
  for (int c : centers) {
    if (int(out.size()) == count) break;
    // BFS ball of the hop radius
    std::vector<int> ball{c};
    dist[std::size_t(c)] = 0;
    for (std::size_t head = 0; head < ball.size(); ++head) {
      int u = ball[head];
      if (dist[std::size_t(u)] == hops) continue;
      for (int w : net.adj[std::size_t(u)])
        if (dist[std::size_t(w)] < 0) {
          dist[std::size_t(w)] = dist[std::size_t(u)] + 1;
          ball.push_back(w);
        }
    }
    std::vector<int> members = ball;
    for (int u : ball) dist[std::size_t(u)] = -1;  // reset for the next center
    int n = int(members.size());
    if (n < min_nodes || n > max_nodes) continue;
    std::sort(members.begin(), members.end());
    std::unordered_map<int, int> relabel;
    for (int i = 0; i < n; ++i) relabel.emplace(members[std::size_t(i)], i);
    DiscreteGraph g(n);
    for (int i = 0; i < n; ++i)
      for (int w : net.adj[std::size_t(members[std::size_t(i)])]) {
        auto it = relabel.find(w);
        if (it != relabel.end()) g.set_edge(i, it->second, 1);
      }
    out.push_back(std::move(g));
  }
  if (int(out.size()) < count)
    throw std::runtime_error("extract_ego: only " + std::to_string(out.size()) +
                             " of " + std::to_string(count) +
                             " qualifying ego graphs in '" + network_path + "'");
  return out;
}

SplitResult split(const std::vector<DiscreteGraph>& graphs, double ratio,
                  std::uint64_t seed) {
  if (graphs.empty()) throw std::invalid_argument("split: empty graph list");
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("split: ratio must lie in (0,1)");
  std::vector<int> order(graphs.size(), 0);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = int(order.size()) - 1; i > 0; --i)
    std::swap(order[std::size_t(i)], order[std::size_t(rng.uniform_int(0, i))]);
  std::size_t ntrain = std::size_t(std::llround(ratio * double(graphs.size())));
  if (ntrain > graphs.size()) ntrain = graphs.size();
  SplitResult res;
  for (std::size_t k = 0; k < order.size(); ++k) {
    int src = order[k];
    (k < ntrain ? res.train : res.test).push_back(graphs[std::size_t(src)]);
    (k < ntrain ? res.train_idx : res.test_idx).push_back(src);
  }
  return res;
}

std::vector<Molecule> gen_molecule_corpus(int count, int max_atoms, Rng& rng) {
  if (count <= 0)
    throw std::invalid_argument("gen_molecule_corpus: count must be positive");
  if (max_atoms < 1)
    throw std::invalid_argument("gen_molecule_corpus: max_atoms must be >= 1");
  ValenceTable table;
  std::vector<Molecule> out;
  std::set<std::uint64_t> seen;
  std::int64_t attempts = 0;
  while (int(out.size()) < count) {
    if (++attempts > 400ll * count)
      throw std::runtime_error(
          "gen_molecule_corpus: cannot reach " + std::to_string(count) +
          " distinct molecules at max_atoms " + std::to_string(max_atoms));
    // size skews heavily toward the cap, like curated small-molecule sets
    double u = rng.uniform();
    int n = u < 0.55 ? max_atoms
            : u < 0.75 ? max_atoms - 1
            : u < 0.87 ? max_atoms - 2
            : u < 0.94 ? max_atoms - 3
            : u < 0.98 ? max_atoms - 4
                       : max_atoms - 5;
    if (n < 1) n = 1;

    Molecule m;
    for (int v = 0; v < n; ++v) {
      double e = rng.uniform();
      m.atoms.push_back(e < 0.72 ? "C" : e < 0.84 ? "N" : e < 0.98 ? "O" : "F");
    }
    std::vector<int> cap(std::size_t(n), 0);
    for (int v = 0; v < n; ++v)
      cap[std::size_t(v)] = table.lookup(m.atoms[std::size_t(v)]);

    // random-attachment spanning tree that never oversubscribes an atom
    bool dead = false;
    for (int v = 1; v < n; ++v) {
      std::vector<int> cands;
      for (int p = 0; p < v; ++p)
        if (cap[std::size_t(p)] > 0) cands.push_back(p);
      if (cands.empty()) {
        dead = true;  // e.g. an all-fluorine draw
        break;
      }
      int p = cands[std::size_t(rng.uniform_int(0, int(cands.size()) - 1))];
      m.bonds.push_back({p, v, 1});
      --cap[std::size_t(p)];
      --cap[std::size_t(v)];
    }
    if (dead) continue;

    std::vector<std::uint8_t> adj(std::size_t(n) * std::size_t(n), 0);
    for (const Bond& b : m.bonds)
      adj[std::size_t(b.i) * n + b.j] = adj[std::size_t(b.j) * n + b.i] = 1;

    // occasional ring closure between spare-capacity non-neighbors
    int extras = rng.uniform() < 0.45 ? (rng.uniform() < 0.25 ? 2 : 1) : 0;
    for (int e = 0; e < extras; ++e) {
      std::vector<std::pair<int, int>> pairs;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          if (!adj[std::size_t(i) * n + j] && cap[std::size_t(i)] > 0 &&
              cap[std::size_t(j)] > 0)
            pairs.push_back({i, j});
      if (pairs.empty()) break;
      auto [i, j] = pairs[std::size_t(rng.uniform_int(0, int(pairs.size()) - 1))];
      m.bonds.push_back({i, j, 1});
      adj[std::size_t(i) * n + j] = adj[std::size_t(j) * n + i] = 1;
      --cap[std::size_t(i)];
      --cap[std::size_t(j)];
    }

    // sprinkle double and (rarely) triple bonds into remaining capacity
    for (Bond& b : m.bonds) {
      if (cap[std::size_t(b.i)] > 0 && cap[std::size_t(b.j)] > 0 &&
          rng.uniform() < 0.18) {
        ++b.order;
        --cap[std::size_t(b.i)];
        --cap[std::size_t(b.j)];
        if (cap[std::size_t(b.i)] > 0 && cap[std::size_t(b.j)] > 0 &&
            rng.uniform() < 0.15) {
          ++b.order;
          --cap[std::size_t(b.i)];
          --cap[std::size_t(b.j)];
        }
      }
    }

    std::uint64_t h = canonical_hash(m);
    if (seen.insert(h).second) out.push_back(std::move(m));
  }
  return out;
}

MoleculeIngest ingest_molecules(const std::string& path,
                                const std::vector<std::string>& alphabet,
                                int max_atoms) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_molecules: cannot open '" + path + "'");
  MoleculeIngest out;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    std::size_t b = line.find_last_not_of(" \t\r");
    std::string smi = line.substr(a, b - a + 1);
    Molecule mol;
    try {
      mol = parse_smiles(smi);
    } catch (const ParseError&) {
      ++out.skipped;
      continue;
    }
    bool known = true;
    for (const std::string& el : mol.atoms)
      if (std::find(alphabet.begin(), alphabet.end(), el) == alphabet.end()) {
        known = false;
        break;
      }
    if (!known || mol.n() > max_atoms) {
      ++out.skipped;
      continue;
    }
    out.graphs.push_back(graph_from_molecule(mol, alphabet));
    out.hist.add(mol.n());
  }
  return out;
}

std::vector<DiscreteGraph> build_dataset(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  if (spec.kind == "community_small") return gen_community_small(spec.count, rng);
  if (spec.kind == "ego_from_network")
    return extract_ego(spec.network_path, spec.hops, spec.min_nodes, spec.max_nodes,
                       spec.count, rng);
  if (spec.kind == "file") return load_graphs(spec.path);
  MoleculeIngest mi =
      ingest_molecules(spec.molecule_path, {"C", "N", "O", "F"}, spec.max_atoms);
  return mi.graphs;
}

}  // namespace gdiff
