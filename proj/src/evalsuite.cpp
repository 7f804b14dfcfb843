#include "gdiff/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace gdiff {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

int bin_of(double value, double hi, int bins) {
  double x = value;
  if (x < 0.0) x = 0.0;
  if (x > hi) x = hi;
  int b = int(x / hi * bins);
  return b >= bins ? bins - 1 : b;
}

}  // namespace

std::vector<double> DescriptorConfig::sigma_grid() const {
  validate();
  std::vector<double> grid;
  grid.resize(std::size_t(sigma_points));
  if (sigma_points == 1) {
    grid[0] = sigma_lo;
    return grid;
  }
  double llo = std::log(sigma_lo), lhi = std::log(sigma_hi);
  for (int i = 0; i < sigma_points; ++i)
    grid[std::size_t(i)] = std::exp(llo + (lhi - llo) * i / (sigma_points - 1));
  return grid;
}

void DescriptorConfig::validate() const {
  require(clus_bins >= 1, "DescriptorConfig: clus_bins must be >= 1");
  require(spec_bins >= 1, "DescriptorConfig: spec_bins must be >= 1");
  require(sigma_points >= 1, "DescriptorConfig: sigma_points must be >= 1");
  require(std::isfinite(sigma_lo) && sigma_lo > 0.0,
          "DescriptorConfig: sigma_lo must be positive");
  require(std::isfinite(sigma_hi) && sigma_hi >= sigma_lo,
          "DescriptorConfig: sigma_hi must be >= sigma_lo");
}

std::vector<double> degree_hist(const DiscreteGraph& g) {
  require(g.n > 0, "degree_hist: empty graph");
  std::vector<double> h(std::size_t(g.n), 0.0);
  for (int i = 0; i < g.n; ++i) h[std::size_t(g.degree(i))] += 1.0 / g.n;
  return h;
}

std::vector<double> clustering_hist(const DiscreteGraph& g, int bins) {
  require(g.n > 0, "clustering_hist: empty graph");
  require(bins >= 1, "clustering_hist: bins must be >= 1");
  std::vector<double> h(std::size_t(bins), 0.0);
  for (int i = 0; i < g.n; ++i) {
    std::vector<int> nbr;
    for (int j = 0; j < g.n; ++j)
      if (j != i && g.has_edge(i, j)) nbr.push_back(j);
    int d = int(nbr.size());
    double c = 0.0;
    if (d >= 2) {
      int tri = 0;
      for (std::size_t p = 0; p < nbr.size(); ++p)
        for (std::size_t q = p + 1; q < nbr.size(); ++q)
          if (g.has_edge(nbr[p], nbr[q])) ++tri;
      c = 2.0 * tri / (double(d) * (d - 1));
    }
    h[std::size_t(bin_of(c, 1.0, bins))] += 1.0 / g.n;
  }
  return h;
}

std::vector<double> normalized_laplacian(const DiscreteGraph& g) {
  require(g.n > 0, "normalized_laplacian: empty graph");
  int n = g.n;
  std::vector<int> deg(std::size_t(n), 0);
  for (int i = 0; i < n; ++i) deg[std::size_t(i)] = g.degree(i);
  std::vector<double> lap(std::size_t(n) * std::size_t(n), 0.0);
  for (int i = 0; i < n; ++i) {
    if (deg[std::size_t(i)] == 0) continue;  // zero row: eigenvalue 0
    lap[std::size_t(i) * n + i] = 1.0;
    for (int j = 0; j < n; ++j)
      if (j != i && g.has_edge(i, j))
        lap[std::size_t(i) * n + j] =
            -1.0 / std::sqrt(double(deg[std::size_t(i)]) * deg[std::size_t(j)]);
  }
  return lap;
}

std::vector<double> jacobi_eigenvalues(std::vector<double> a, int n) {
  require(n >= 0 && a.size() == std::size_t(n) * std::size_t(n),
          "jacobi_eigenvalues: matrix size does not match n");
  if (n == 0) return {};
  auto at = [&](int i, int j) -> double& { return a[std::size_t(i) * n + j]; };
  double fro = 0.0;
  for (double v : a) fro += v * v;
  double tol2 = 1e-30 * std::max(1.0, fro);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off2 = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off2 += at(p, q) * at(p, q);
    if (off2 <= tol2) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = at(p, q);
        if (apq == 0.0) continue;
        double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e154) {
          t = 0.5 / theta;  // avoid theta^2 overflow
        } else {
          t = std::copysign(1.0, theta) /
              (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        at(p, p) -= t * apq;
        at(q, q) += t * apq;
        at(p, q) = at(q, p) = 0.0;
        for (int k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          double akp = at(k, p), akq = at(k, q);
          at(k, p) = at(p, k) = c * akp - s * akq;
          at(k, q) = at(q, k) = s * akp + c * akq;
        }
      }
    }
  }
  std::vector<double> ev;
  ev.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) ev[std::size_t(i)] = at(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

std::vector<double> laplacian_spectrum(const DiscreteGraph& g) {
  return jacobi_eigenvalues(normalized_laplacian(g), g.n);
}

std::vector<double> spectrum_hist(const DiscreteGraph& g, int bins) {
  require(bins >= 1, "spectrum_hist: bins must be >= 1");
  std::vector<double> h(std::size_t(bins), 0.0);
  for (double ev : laplacian_spectrum(g)) {
    // structured spectra sit exactly on bin edges; snap so round-off from
    // the eigensolver cannot move a value across one
    double snapped = std::round(ev * 1e9) / 1e9;
    h[std::size_t(bin_of(snapped, 2.0, bins))] += 1.0 / g.n;
  }
  return h;
}

namespace {

double mean_kernel(const std::vector<std::vector<double>>& xs,
                   const std::vector<std::vector<double>>& ys, double inv2s2) {
  double acc = 0.0;
  for (const auto& x : xs) {
    for (const auto& y : ys) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        double d = x[k] - y[k];
        d2 += d * d;
      }
      acc += std::exp(-d2 * inv2s2);
    }
  }
  return acc / (double(xs.size()) * double(ys.size()));
}

}  // namespace

double mmd_rbf(const std::vector<std::vector<double>>& a,
               const std::vector<std::vector<double>>& b, double sigma) {
  require(!a.empty() && !b.empty(), "mmd_rbf: empty sample set");
  require(std::isfinite(sigma) && sigma > 0.0,
          "mmd_rbf: sigma must be positive");
  std::size_t len = a[0].size();
  for (const auto& v : a)
    require(v.size() == len, "mmd_rbf: histogram length mismatch");
  for (const auto& v : b)
    require(v.size() == len, "mmd_rbf: histogram length mismatch");
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double m2 = mean_kernel(a, a, inv2s2) + mean_kernel(b, b, inv2s2) -
              2.0 * mean_kernel(a, b, inv2s2);
  return m2 > 0.0 ? m2 : 0.0;
}

double mmd_sweep(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b,
                 const std::vector<double>& grid) {
  require(!grid.empty(), "mmd_sweep: empty bandwidth grid");
  double worst = 0.0;
  for (double s : grid) worst = std::max(worst, mmd_rbf(a, b, s));
  return worst;
}

void pad_histograms(std::vector<std::vector<double>>& a,
                    std::vector<std::vector<double>>& b) {
  std::size_t len = 0;
  for (const auto& v : a) len = std::max(len, v.size());
  for (const auto& v : b) len = std::max(len, v.size());
  for (auto& v : a) v.resize(len, 0.0);
  for (auto& v : b) v.resize(len, 0.0);
}

GraphSetMmd descriptor_mmds(const std::vector<DiscreteGraph>& ref,
                            const std::vector<DiscreteGraph>& gen,
                            const DescriptorConfig& cfg) {
  cfg.validate();
  require(!ref.empty() && !gen.empty(), "descriptor_mmds: empty graph set");
  std::vector<std::vector<double>> dr, dg, cr, cg, sr, sg;
  for (const auto& g : ref) {
    dr.push_back(degree_hist(g));
    cr.push_back(clustering_hist(g, cfg.clus_bins));
    sr.push_back(spectrum_hist(g, cfg.spec_bins));
  }
  for (const auto& g : gen) {
    dg.push_back(degree_hist(g));
    cg.push_back(clustering_hist(g, cfg.clus_bins));
    sg.push_back(spectrum_hist(g, cfg.spec_bins));
  }
  pad_histograms(dr, dg);  // degree length varies with node count
  auto grid = cfg.sigma_grid();
  GraphSetMmd out;
  out.degree = mmd_sweep(dr, dg, grid);
  out.clustering = mmd_sweep(cr, cg, grid);
  out.spectrum = mmd_sweep(sr, sg, grid);
  return out;
}

MoleculeMetrics molecule_metrics(const std::vector<Molecule>& samples,
                                 const std::set<std::uint64_t>& train_hashes,
                                 const ValenceTable& table) {
  MoleculeMetrics r;
  r.n_samples = int(samples.size());
  std::set<std::uint64_t> seen;
  for (const auto& m : samples) {
    if (m.n() == 0 || !check_valency(m, table).valid) continue;
    ++r.n_valid;
    seen.insert(canonical_hash(m));
  }
  r.n_unique = int(seen.size());
  for (std::uint64_t h : seen)
    if (!train_hashes.count(h)) ++r.n_novel;
  if (r.n_samples > 0) r.valid_wo_check = 100.0 * r.n_valid / r.n_samples;
  if (r.n_valid > 0) r.unique = 100.0 * r.n_unique / r.n_valid;
  if (r.n_unique > 0) r.novel = 100.0 * r.n_novel / r.n_unique;
  return r;
}

std::string MetricReport::to_tsv() const {
  std::ostringstream os;
  os << std::setprecision(12);
  os << "ref_count\t" << ref_count << "\n";
  os << "gen_count\t" << gen_count << "\n";
  if (has_graph_metrics) {
    os << "mmd_degree\t" << graph.degree << "\n";
    os << "mmd_clustering\t" << graph.clustering << "\n";
    os << "mmd_spectrum\t" << graph.spectrum << "\n";
  }
  if (has_molecule_metrics) {
    os << "valid_wo_check\t" << mol.valid_wo_check << "\n";
    os << "unique\t" << mol.unique << "\n";
    os << "novel\t" << mol.novel << "\n";
    os << "n_samples\t" << mol.n_samples << "\n";
    os << "n_valid\t" << mol.n_valid << "\n";
    os << "n_unique\t" << mol.n_unique << "\n";
    os << "n_novel\t" << mol.n_novel << "\n";
  }
  os << "config.clus_bins\t" << cfg.clus_bins << "\n";
  os << "config.spec_bins\t" << cfg.spec_bins << "\n";
  os << "config.sigma_points\t" << cfg.sigma_points << "\n";
  os << "config.sigma_lo\t" << cfg.sigma_lo << "\n";
  os << "config.sigma_hi\t" << cfg.sigma_hi << "\n";
  return os.str();
}

}  // namespace gdiff
