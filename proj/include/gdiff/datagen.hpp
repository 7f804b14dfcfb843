#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdiff/chem.hpp"
#include "gdiff/graph.hpp"
#include "gdiff/rng.hpp"

namespace gdiff {

// Which corpus to build and how to cut it. Generators are pure functions of
// (spec, seed): rerunning with the same fields reproduces the same graphs.
struct DatasetSpec {
  std::string kind;  // community_small | ego_from_network | molecule_file | file
  int count = 100;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  // ego extraction
  std::string network_path;
  int hops = 1;
  int min_nodes = 4;
  int max_nodes = 18;
  // molecule ingestion
  std::string molecule_path;
  int max_atoms = 9;
  // pre-built graphs file
  std::string path;

  void validate() const;  // throws std::invalid_argument
};

// Two dense blocks of sizes ceil(n/2), floor(n/2) with n uniform on {12..20};
// within-block edges appear with p=0.7, cross-block with p=0.05, and one
// forced cross edge keeps the halves attached. Whole graphs exceeding 62
// edges are redrawn so every sample respects the published size envelope.
std::vector<DiscreteGraph> gen_community_small(int count, Rng& rng);

// Induced subgraphs on BFS balls around distinct random centers of an
// edge-list network, filtered to [min_nodes, max_nodes] and relabelled
// 0..n-1 in ascending original-id order.
std::vector<DiscreteGraph> extract_ego(const std::string& network_path, int hops,
                                       int min_nodes, int max_nodes, int count,
                                       Rng& rng);

// Synthetic small-molecule corpus over {C,N,O,F}: capacity-respecting random
// trees with occasional ring closures and bond-order upgrades, deduplicated
// by canonical hash. Every output is connected and passes check_valency.
// Sizes skew toward max_atoms the way small-molecule datasets do.
std::vector<Molecule> gen_molecule_corpus(int count, int max_atoms, Rng& rng);

struct MoleculeIngest {
  std::vector<DiscreteGraph> graphs;
  NodeCountHist hist;       // node-count PMF support over accepted molecules
  std::int64_t skipped = 0; // lines outside the alphabet / size budget
};

// One molecule per line in SMILES form; lines that fail to parse, use atoms
// outside `alphabet`, or exceed max_atoms are counted in `skipped`.
MoleculeIngest ingest_molecules(const std::string& path,
                                const std::vector<std::string>& alphabet,
                                int max_atoms);

struct SplitResult {
  std::vector<DiscreteGraph> train;
  std::vector<DiscreteGraph> test;
  // positions in the input list, aligned with train/test; lets per-graph
  // labels follow the shuffle
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

// Seeded shuffle followed by a prefix cut at round(ratio * size).
SplitResult split(const std::vector<DiscreteGraph>& graphs, double ratio,
                  std::uint64_t seed);

// Dispatch on spec.kind; the full (unsplit) corpus.
std::vector<DiscreteGraph> build_dataset(const DatasetSpec& spec);

}  // namespace gdiff
