#include "gdiff/chem.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <queue>
#include <stdexcept>

namespace gdiff {

namespace {

// splitmix64 finalizer; the workhorse label mixer below
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t hash_str(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return mix64(h);
}

// adjacency as order matrix (0 = no bond)
std::vector<int> order_matrix(const Molecule& m) {
  int n = m.n();
  std::vector<int> a(std::size_t(n) * std::size_t(n), 0);
  for (const Bond& b : m.bonds) {
    a[std::size_t(b.i) * n + b.j] = b.order;
    a[std::size_t(b.j) * n + b.i] = b.order;
  }
  return a;
}

// one full WL refinement history: labels[r][v] after r rounds
std::vector<std::vector<std::uint64_t>> wl_rounds(const Molecule& m, int rounds) {
  int n = m.n();
  std::vector<std::vector<std::uint64_t>> hist;
  std::vector<std::uint64_t> cur(std::size_t(n), 0);
  for (int v = 0; v < n; ++v) cur[std::size_t(v)] = hash_str(m.atoms[std::size_t(v)]);
  hist.push_back(cur);
  std::vector<std::vector<std::pair<int, int>>> adj;
  adj.resize(std::size_t(n));
  for (const Bond& b : m.bonds) {
    adj[std::size_t(b.i)].push_back({b.j, b.order});
    adj[std::size_t(b.j)].push_back({b.i, b.order});
  }
  for (int r = 0; r < rounds; ++r) {
    std::vector<std::uint64_t> next(std::size_t(n), 0);
    for (int v = 0; v < n; ++v) {
      std::vector<std::uint64_t> sig;
      for (auto [u, o] : adj[std::size_t(v)])
        sig.push_back(mix64(cur[std::size_t(u)] ^ (std::uint64_t(o) * 0x100000001b3ull)));
      std::sort(sig.begin(), sig.end());
      std::uint64_t h = mix64(cur[std::size_t(v)]);
      for (std::uint64_t s : sig) h = mix64(h ^ s);
      next[std::size_t(v)] = h;
    }
    cur = std::move(next);
    hist.push_back(cur);
  }
  return hist;
}

}  // namespace

void Molecule::validate() const {
  int nn = n();
  std::vector<std::uint8_t> seen(std::size_t(nn) * std::size_t(nn), 0);
  for (const Bond& b : bonds) {
    if (b.i < 0 || b.i >= nn || b.j < 0 || b.j >= nn)
      throw std::invalid_argument("Molecule: bond index out of range");
    if (b.i == b.j) throw std::invalid_argument("Molecule: self bond");
    if (b.order < 1 || b.order > 3)
      throw std::invalid_argument("Molecule: bond order " + std::to_string(b.order) +
                                  " outside 1..3");
    std::size_t k = std::size_t(std::min(b.i, b.j)) * nn + std::max(b.i, b.j);
    if (seen[k]) throw std::invalid_argument("Molecule: duplicate bond");
    seen[k] = 1;
  }
  for (const std::string& a : atoms)
    if (a.empty()) throw std::invalid_argument("Molecule: empty element symbol");
}

std::vector<int> Molecule::order_sums() const {
  std::vector<int> s(std::size_t(n()), 0);
  for (const Bond& b : bonds) {
    s[std::size_t(b.i)] += b.order;
    s[std::size_t(b.j)] += b.order;
  }
  return s;
}

int ValenceTable::lookup(const std::string& element) const {
  auto it = max_order.find(element);
  if (it == max_order.end())
    throw std::invalid_argument("valence table: unknown element '" + element + "'");
  return it->second;
}

// --- SMILES ------------------------------------------------------------------

Molecule parse_smiles(const std::string& s) {
  static const ValenceTable kTable{};
  Molecule m;
  int prev = -1;
  int pending = 0;  // 0 = no explicit bond symbol since the last atom
  std::vector<int> branch;  // saved `prev` values, innermost last
  std::vector<std::size_t> branch_at;
  struct OpenRing {
    int atom = -1;
    int order = 0;
    std::size_t at = 0;
  };
  std::map<int, OpenRing> rings;

  auto add_bond = [&](int i, int j, int order, std::size_t at) {
    if (i == j) throw ParseError("ring closure forms a self bond", at);
    for (const Bond& b : m.bonds)
      if ((b.i == i && b.j == j) || (b.i == j && b.j == i))
        throw ParseError("duplicate bond", at);
    m.bonds.push_back({std::min(i, j), std::max(i, j), order});
  };

  auto close_or_open_ring = [&](int label, std::size_t at) {
    if (prev < 0) throw ParseError("ring closure before any atom", at);
    auto it = rings.find(label);
    if (it == rings.end()) {
      rings[label] = {prev, pending, at};
    } else {
      OpenRing open = it->second;
      rings.erase(it);
      int order;
      if (open.order == 0 && pending == 0) order = 1;
      else if (open.order == 0) order = pending;
      else if (pending == 0) order = open.order;
      else if (open.order == pending) order = pending;
      else throw ParseError("ring bond order mismatch", at);
      add_bond(open.atom, prev, order, at);
    }
    pending = 0;
  };

  std::size_t i = 0;
  const std::size_t len = s.size();
  while (i < len) {
    char c = s[i];
    if (c >= 'A' && c <= 'Z') {
      std::string el(1, c);
      if (i + 1 < len && s[i + 1] >= 'a' && s[i + 1] <= 'z' &&
          kTable.max_order.count(el + s[i + 1]))
        el += s[i + 1];
      if (!kTable.max_order.count(el))
        throw ParseError("unknown element '" + el + "'", i);
      int cur = m.n();
      m.atoms.push_back(el);
      if (prev >= 0) add_bond(prev, cur, pending == 0 ? 1 : pending, i);
      else if (pending != 0)
        throw ParseError("bond symbol before any atom", i);
      pending = 0;
      prev = cur;
      i += el.size();
    } else if (c == '-' || c == '=' || c == '#') {
      if (pending != 0) throw ParseError("two bond symbols in a row", i);
      pending = c == '-' ? 1 : c == '=' ? 2 : 3;
      ++i;
    } else if (c >= '1' && c <= '9') {
      close_or_open_ring(c - '0', i);
      ++i;
    } else if (c == '%') {
      if (i + 2 >= len || !std::isdigit(std::uint8_t(s[i + 1])) ||
          !std::isdigit(std::uint8_t(s[i + 2])))
        throw ParseError("expected two digits after '%'", i);
      close_or_open_ring((s[i + 1] - '0') * 10 + (s[i + 2] - '0'), i);
      i += 3;
    } else if (c == '(') {
      if (prev < 0) throw ParseError("branch before any atom", i);
      if (pending != 0) throw ParseError("bond symbol before branch", i);
      branch.push_back(prev);
      branch_at.push_back(i);
      ++i;
    } else if (c == ')') {
      if (branch.empty()) throw ParseError("unbalanced parentheses", i);
      if (pending != 0) throw ParseError("dangling bond in branch", i);
      prev = branch.back();
      branch.pop_back();
      branch_at.pop_back();
      ++i;
    } else if (c >= 'a' && c <= 'z') {
      throw ParseError(std::string("unsupported feature: aromatic atom '") + c + "'", i);
    } else if (c == '[') {
      throw ParseError("unsupported feature: bracket atom", i);
    } else if (c == '.') {
      throw ParseError("unsupported feature: disconnected fragment", i);
    } else if (c == '/' || c == '\\') {
      throw ParseError("unsupported feature: stereo bond", i);
    } else if (c == '@') {
      throw ParseError("unsupported feature: chirality mark", i);
    } else if (c == '+') {
      throw ParseError("unsupported feature: charge", i);
    } else if (c == '0') {
      throw ParseError("ring label must be 1-9 or %nn", i);
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", i);
    }
  }
  if (!branch.empty()) throw ParseError("unbalanced parentheses", branch_at.back());
  if (!rings.empty())
    throw ParseError("dangling ring closure " + std::to_string(rings.begin()->first),
                     rings.begin()->second.at);
  if (pending != 0) throw ParseError("dangling bond symbol", len);
  if (m.atoms.empty()) throw ParseError("empty SMILES", 0);
  m.validate();
  return m;
}

std::string write_smiles(const Molecule& m) {
  m.validate();
  int n = m.n();
  if (n == 0) throw std::invalid_argument("write_smiles: empty molecule");

  std::vector<std::vector<std::pair<int, int>>> adj;
  adj.resize(std::size_t(n));
  for (const Bond& b : m.bonds) {
    adj[std::size_t(b.i)].push_back({b.j, b.order});
    adj[std::size_t(b.j)].push_back({b.i, b.order});
  }
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());

  // spanning DFS from atom 0; non-tree edges turn into ring closures
  std::vector<int> parent(std::size_t(n), -2);
  std::vector<std::vector<std::pair<int, int>>> kids;  // (child, order)
  kids.resize(std::size_t(n));
  struct RingEnd {
    int label = 0, order = 0;
  };
  std::vector<std::vector<RingEnd>> ring_at;
  ring_at.resize(std::size_t(n));
  int next_label = 1;
  {
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    parent[0] = -1;
    std::vector<std::uint8_t> ring_done(std::size_t(n) * std::size_t(n), 0);
    while (!stack.empty()) {
      auto& [v, k] = stack.back();
      if (k >= adj[std::size_t(v)].size()) {
        stack.pop_back();
        continue;
      }
      auto [u, o] = adj[std::size_t(v)][k++];
      if (parent[std::size_t(u)] == -2) {
        parent[std::size_t(u)] = v;
        kids[std::size_t(v)].push_back({u, o});
        stack.push_back({u, 0});
      } else if (u != parent[std::size_t(v)]) {
        std::size_t key = std::size_t(std::min(u, v)) * n + std::max(u, v);
        if (!ring_done[key]) {
          ring_done[key] = 1;
          if (next_label > 99)
            throw std::invalid_argument("write_smiles: too many ring bonds");
          ring_at[std::size_t(v)].push_back({next_label, o});
          ring_at[std::size_t(u)].push_back({next_label, o});
          ++next_label;
        }
      }
    }
  }
  for (int v = 0; v < n; ++v)
    if (parent[std::size_t(v)] == -2)
      throw std::invalid_argument("write_smiles: disconnected molecule");

  std::string out;
  auto bond_sym = [](int o) { return o == 2 ? "=" : o == 3 ? "#" : ""; };
  // recursive emission, explicit stack to stay allocation-friendly
  struct Frame {
    int v;
    int order_in;
    std::size_t next_kid = 0;
    bool opened_paren = false;
  };
  std::vector<Frame> st{{0, 0, 0, false}};
  while (!st.empty()) {
    Frame& f = st.back();
    if (f.next_kid == 0) {
      out += bond_sym(f.order_in);
      out += m.atoms[std::size_t(f.v)];
      auto ring = ring_at[std::size_t(f.v)];
      std::sort(ring.begin(), ring.end(),
                [](const RingEnd& a, const RingEnd& b) { return a.label < b.label; });
      for (const RingEnd& r : ring) {
        out += bond_sym(r.order);
        if (r.label < 10) out += char('0' + r.label);
        else {
          out += '%';
          out += char('0' + r.label / 10);
          out += char('0' + r.label % 10);
        }
      }
    }
    if (f.opened_paren) {
      out += ')';
      f.opened_paren = false;
    }
    const auto& ks = kids[std::size_t(f.v)];
    if (f.next_kid >= ks.size()) {
      st.pop_back();
      continue;
    }
    auto [child, order] = ks[f.next_kid];
    bool last = f.next_kid + 1 == ks.size();
    ++f.next_kid;
    if (!last) {
      out += '(';
      f.opened_paren = true;
    }
    st.push_back({child, order, 0, false});
  }
  return out;
}

// --- valency -----------------------------------------------------------------

ValencyReport check_valency(const Molecule& m, const ValenceTable& table) {
  ValencyReport rep;
  std::vector<int> sums = m.order_sums();
  for (int v = 0; v < m.n(); ++v)
    if (sums[std::size_t(v)] > table.lookup(m.atoms[std::size_t(v)]))
      rep.violators.push_back(v);
  rep.valid = rep.violators.empty();
  return rep;
}

Molecule correct_valency(Molecule m, const ValenceTable& table) {
  m.validate();
  for (;;) {
    std::vector<int> sums = m.order_sums();
    int victim = -1;
    for (int v = 0; v < m.n(); ++v)
      if (sums[std::size_t(v)] > table.lookup(m.atoms[std::size_t(v)])) {
        victim = v;
        break;
      }
    if (victim < 0) return m;
    // highest-order incident bond, ties toward the lower neighbor index
    int best = -1, best_order = 0, best_nbr = 0;
    for (std::size_t k = 0; k < m.bonds.size(); ++k) {
      const Bond& b = m.bonds[k];
      if (b.i != victim && b.j != victim) continue;
      int nbr = b.i == victim ? b.j : b.i;
      if (best < 0 || b.order > best_order ||
          (b.order == best_order && nbr < best_nbr)) {
        best = int(k);
        best_order = b.order;
        best_nbr = nbr;
      }
    }
    if (--m.bonds[std::size_t(best)].order == 0)
      m.bonds.erase(m.bonds.begin() + best);
  }
}

// --- hashing and fingerprints ------------------------------------------------

std::uint64_t canonical_hash(const Molecule& m) {
  int n = m.n();
  int rounds = std::max(n, 10);
  auto hist = wl_rounds(m, rounds);
  std::vector<std::uint64_t> fin = hist.back();
  std::sort(fin.begin(), fin.end());
  std::uint64_t h = mix64(std::uint64_t(n));
  for (std::uint64_t l : fin) h = mix64(h ^ l);
  return h;
}

Fingerprint fingerprint(const Molecule& m, int radius, int nbits) {
  if (radius < 0) throw std::invalid_argument("fingerprint: radius must be >= 0");
  if (nbits < 64) throw std::invalid_argument("fingerprint: nbits must be >= 64");
  Fingerprint fp;
  fp.nbits = nbits;
  fp.words.assign(std::size_t((nbits + 63) / 64), 0);
  auto hist = wl_rounds(m, radius);
  for (int r = 0; r <= radius; ++r)
    for (int v = 0; v < m.n(); ++v) {
      std::uint64_t id =
          mix64(hist[std::size_t(r)][std::size_t(v)] ^ (std::uint64_t(r) << 32));
      std::uint64_t bit = id % std::uint64_t(nbits);
      fp.words[std::size_t(bit / 64)] |= 1ull << (bit % 64);
    }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.nbits != b.nbits || a.words.size() != b.words.size())
    throw std::invalid_argument("tanimoto: fingerprint sizes differ");
  std::int64_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < a.words.size(); ++k) {
    inter += std::popcount(a.words[k] & b.words[k]);
    uni += std::popcount(a.words[k] | b.words[k]);
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

// --- exact isomorphism -------------------------------------------------------

namespace {

bool extend_mapping(const Molecule& a, const Molecule& b, const std::vector<int>& oa,
                    const std::vector<int>& ob, std::vector<int>& map,
                    std::vector<std::uint8_t>& used, int v) {
  int n = a.n();
  if (v == n) return true;
  for (int w = 0; w < n; ++w) {
    if (used[std::size_t(w)]) continue;
    if (a.atoms[std::size_t(v)] != b.atoms[std::size_t(w)]) continue;
    bool ok = true;
    for (int u = 0; u < v; ++u)
      if (oa[std::size_t(v) * n + u] != ob[std::size_t(w) * n + map[std::size_t(u)]]) {
        ok = false;
        break;
      }
    if (!ok) continue;
    map[std::size_t(v)] = w;
    used[std::size_t(w)] = 1;
    if (extend_mapping(a, b, oa, ob, map, used, v + 1)) return true;
    used[std::size_t(w)] = 0;
  }
  return false;
}

}  // namespace

bool isomorphic(const Molecule& a, const Molecule& b) {
  if (a.n() != b.n() || a.bonds.size() != b.bonds.size()) return false;
  int n = a.n();
  std::vector<std::string> ea = a.atoms, eb = b.atoms;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  if (ea != eb) return false;
  std::vector<int> sa = a.order_sums(), sb = b.order_sums();
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa != sb) return false;
  std::vector<int> oa = order_matrix(a), ob = order_matrix(b);
  std::vector<int> map(std::size_t(n), -1);
  std::vector<std::uint8_t> used(std::size_t(n), 0);
  return extend_mapping(a, b, oa, ob, map, used, 0);
}

// --- components and graph bridge ---------------------------------------------

Molecule largest_component(const Molecule& m) {
  int n = m.n();
  if (n == 0) return m;
  std::vector<std::vector<int>> adj;
  adj.resize(std::size_t(n));
  for (const Bond& b : m.bonds) {
    adj[std::size_t(b.i)].push_back(b.j);
    adj[std::size_t(b.j)].push_back(b.i);
  }
  std::vector<int> comp(std::size_t(n), -1);
  int ncomp = 0;
  for (int v = 0; v < n; ++v) {
    if (comp[std::size_t(v)] >= 0) continue;
    std::queue<int> q;
    q.push(v);
    comp[std::size_t(v)] = ncomp;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int w : adj[std::size_t(u)])
        if (comp[std::size_t(w)] < 0) {
          comp[std::size_t(w)] = ncomp;
          q.push(w);
        }
    }
    ++ncomp;
  }
  std::vector<int> size(std::size_t(ncomp), 0);
  for (int v = 0; v < n; ++v) ++size[std::size_t(comp[std::size_t(v)])];
  // scanning components in order of their lowest member makes "first max" the
  // documented tie-break
  int best = 0;
  for (int c = 1; c < ncomp; ++c)
    if (size[std::size_t(c)] > size[std::size_t(best)]) best = c;
  std::vector<int> relabel(std::size_t(n), -1);
  Molecule out;
  for (int v = 0; v < n; ++v)
    if (comp[std::size_t(v)] == best) {
      relabel[std::size_t(v)] = out.n();
      out.atoms.push_back(m.atoms[std::size_t(v)]);
    }
  for (const Bond& b : m.bonds)
    if (comp[std::size_t(b.i)] == best)
      out.bonds.push_back({std::min(relabel[std::size_t(b.i)], relabel[std::size_t(b.j)]),
                           std::max(relabel[std::size_t(b.i)], relabel[std::size_t(b.j)]),
                           b.order});
  return out;
}

Molecule molecule_from_graph(const DiscreteGraph& g,
                             const std::vector<std::string>& alphabet) {
  Molecule m;
  for (int v = 0; v < g.n; ++v) {
    int t = g.node_types[std::size_t(v)];
    if (t < 0 || t >= int(alphabet.size()))
      throw std::invalid_argument("molecule_from_graph: node type " +
                                  std::to_string(t) + " outside the alphabet");
    m.atoms.push_back(alphabet[std::size_t(t)]);
  }
  for (int i = 0; i < g.n; ++i)
    for (int j = i + 1; j < g.n; ++j) {
      int t = g.edge(i, j);
      if (t == 0) continue;
      if (t < 1 || t > 3)
        throw std::invalid_argument("molecule_from_graph: edge type " +
                                    std::to_string(t) + " outside bond orders 1..3");
      m.bonds.push_back({i, j, t});
    }
  return m;
}

DiscreteGraph graph_from_molecule(const Molecule& m,
                                  const std::vector<std::string>& alphabet) {
  m.validate();
  DiscreteGraph g(m.n());
  for (int v = 0; v < m.n(); ++v) {
    auto it = std::find(alphabet.begin(), alphabet.end(), m.atoms[std::size_t(v)]);
    if (it == alphabet.end())
      throw std::invalid_argument("graph_from_molecule: element '" +
                                  m.atoms[std::size_t(v)] + "' outside the alphabet");
    g.node_types[std::size_t(v)] = int(it - alphabet.begin());
  }
  for (const Bond& b : m.bonds) g.set_edge(b.i, b.j, b.order);
  return g;
}

}  // namespace gdiff
