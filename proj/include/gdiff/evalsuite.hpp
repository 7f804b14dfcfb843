#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gdiff/chem.hpp"
#include "gdiff/graph.hpp"

namespace gdiff {

// Binning and kernel-bandwidth settings shared by every descriptor metric.
struct DescriptorConfig {
  int clus_bins = 100;   // clustering coefficients over [0, 1]
  int spec_bins = 200;   // Laplacian eigenvalues over [0, 2]
  int sigma_points = 50; // kernel bandwidths, log-spaced
  double sigma_lo = 1e-5;
  double sigma_hi = 1e5;

  // ascending bandwidth grid: sigma_points values log-uniform on
  // [sigma_lo, sigma_hi]
  std::vector<double> sigma_grid() const;
  // throws std::invalid_argument on non-positive bins/points or a bad range
  void validate() const;
};

// --- per-graph descriptors; each returns a probability vector (sums to 1) ---

// mass of nodes with degree d, entries d = 0 .. n-1
std::vector<double> degree_hist(const DiscreteGraph& g);

// local clustering coefficients (triangles over wedges; 0 for degree < 2)
// binned over [0, 1]; the value 1 lands in the top bin
std::vector<double> clustering_hist(const DiscreteGraph& g, int bins = 100);

// eigenvalues of the symmetric normalized Laplacian binned over [0, 2].
// Isolated nodes contribute eigenvalue 0. Values are rounded to nine
// decimals before binning, keeping the histogram stable under node
// reorderings that perturb the eigensolver at round-off scale.
std::vector<double> spectrum_hist(const DiscreteGraph& g, int bins = 200);

// n*n row-major matrix I - D^{-1/2} A D^{-1/2} over the binary adjacency;
// rows/columns of isolated nodes are identically zero
std::vector<double> normalized_laplacian(const DiscreteGraph& g);

// ascending eigenvalues of normalized_laplacian(g)
std::vector<double> laplacian_spectrum(const DiscreteGraph& g);

// Eigenvalues of a dense symmetric matrix (n*n row-major, ascending) via
// cyclic Jacobi rotations. Exact symmetry is assumed, not checked.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, int n);

// --- kernel two-sample distance ---

// Maximum mean discrepancy between two sets of equal-length vectors under
// the Gaussian kernel exp(-|x-y|^2 / (2 sigma^2)). Biased V-statistic
// (diagonal terms included), clamped at zero. Throws std::invalid_argument
// on empty sets or mismatched vector lengths.
double mmd_rbf(const std::vector<std::vector<double>>& a,
               const std::vector<std::vector<double>>& b, double sigma);

// max of mmd_rbf over a bandwidth grid
double mmd_sweep(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b,
                 const std::vector<double>& grid);

// zero-pad every vector in both sets to the longest length present in either
void pad_histograms(std::vector<std::vector<double>>& a,
                    std::vector<std::vector<double>>& b);

// worst-case (max over the bandwidth grid) distance per descriptor
struct GraphSetMmd {
  double degree = 0.0;
  double clustering = 0.0;
  double spectrum = 0.0;
};
GraphSetMmd descriptor_mmds(const std::vector<DiscreteGraph>& ref,
                            const std::vector<DiscreteGraph>& gen,
                            const DescriptorConfig& cfg = {});

// --- molecule sample quality ---

// Percentages over a batch of decoded molecules, taken before any valency
// repair. unique is measured among the valid molecules, novel among the
// unique hashes (absent from train_hashes). Empty denominators yield 0.
struct MoleculeMetrics {
  double valid_wo_check = 0.0;
  double unique = 0.0;
  double novel = 0.0;
  int n_samples = 0;
  int n_valid = 0;
  int n_unique = 0;
  int n_novel = 0;
};
MoleculeMetrics molecule_metrics(const std::vector<Molecule>& samples,
                                 const std::set<std::uint64_t>& train_hashes,
                                 const ValenceTable& table = {});

// Everything the eval command reports: descriptor distances, optional
// molecule percentages, set sizes, and the configuration that produced them.
struct MetricReport {
  DescriptorConfig cfg;
  int ref_count = 0;
  int gen_count = 0;
  bool has_graph_metrics = false;
  GraphSetMmd graph;
  bool has_molecule_metrics = false;
  MoleculeMetrics mol;

  // one metric<TAB>value line per entry, config echoed as config.* lines
  std::string to_tsv() const;
};

}  // namespace gdiff
