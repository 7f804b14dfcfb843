#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gdiff/common.hpp"
#include "gdiff/graph.hpp"

namespace gdiff {

// Kekulized, hydrogen-free molecule: element symbols plus typed bonds
// (order 1..3). Aromatic rings are expected pre-kekulized upstream.
struct Bond {
  int i = 0, j = 0, order = 1;
  bool operator==(const Bond& o) const {
    return i == o.i && j == o.j && order == o.order;
  }
};

struct Molecule {
  std::vector<std::string> atoms;
  std::vector<Bond> bonds;

  int n() const { return int(atoms.size()); }
  // throws std::invalid_argument on self-bonds, duplicate bonds, bad order,
  // or out-of-range indices
  void validate() const;
  // total bond order per atom
  std::vector<int> order_sums() const;
};

// element -> maximum total bond order for a neutral atom
struct ValenceTable {
  std::map<std::string, int> max_order = {
      {"C", 4}, {"N", 3}, {"O", 2},  {"F", 1},  {"P", 5},
      {"S", 6}, {"Cl", 1}, {"Br", 1}, {"I", 1}};

  // throws std::invalid_argument on unknown element
  int lookup(const std::string& element) const;
};

// Supported subset: element letters of the table above, bond symbols
// `-` `=` `#` (single when omitted), branches `(...)`, ring closures 1-9 and
// %nn. Aromatic lowercase, brackets, charges, stereo marks, and dots raise
// ParseError("unsupported feature ...") with a byte offset.
Molecule parse_smiles(const std::string& s);

// DFS emission over a spanning tree; non-tree bonds become ring closures
// with the bond symbol written at both ends. parse(write(m)) is isomorphic
// to m. Throws std::invalid_argument when m is empty or disconnected.
std::string write_smiles(const Molecule& m);

struct ValencyReport {
  bool valid = true;
  std::vector<int> violators;  // ascending atom indices over the table max
};
ValencyReport check_valency(const Molecule& m, const ValenceTable& table = {});

// Repeatedly visit the lowest-index violating atom and decrement its
// highest-order incident bond (ties toward the lower neighbor index),
// deleting bonds that reach order 0. Total bond order strictly decreases,
// so this terminates with a valid molecule.
Molecule correct_valency(Molecule m, const ValenceTable& table = {});

// Weisfeiler-Lehman refinement over (element, sorted neighbor (order, label)
// multiset) for max(n, 10) rounds; the digest combines the sorted final
// labels, so it is invariant under atom reindexing.
std::uint64_t canonical_hash(const Molecule& m);

// Circular-substructure bitset: WL neighborhood identifiers at radii
// 0..radius hashed into `nbits` positions.
struct Fingerprint {
  std::vector<std::uint64_t> words;
  int nbits = 0;
};
Fingerprint fingerprint(const Molecule& m, int radius = 2, int nbits = 2048);

// |a AND b| / |a OR b|, with the empty/empty case defined as 1.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

// Exact backtracking isomorphism test (element- and bond-order-preserving).
// Exponential in the worst case; intended for small molecules and tests.
bool isomorphic(const Molecule& a, const Molecule& b);

// Keep the component with the most atoms (ties toward the one holding the
// lowest atom index); atoms keep their relative order.
Molecule largest_component(const Molecule& m);

// Graph encoding bridge: node type = index into `alphabet`, edge type =
// bond order. Throws std::invalid_argument on out-of-alphabet entries.
Molecule molecule_from_graph(const DiscreteGraph& g,
                             const std::vector<std::string>& alphabet);
DiscreteGraph graph_from_molecule(const Molecule& m,
                                  const std::vector<std::string>& alphabet);

}  // namespace gdiff
