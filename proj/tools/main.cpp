#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "gdiff/checkpoint.hpp"
#include "gdiff/chem.hpp"
#include "gdiff/config.hpp"
#include "gdiff/datagen.hpp"
#include "gdiff/evalsuite.hpp"
#include "gdiff/graph.hpp"
#include "gdiff/samplers.hpp"
#include "gdiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace gdiff;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S UTC", std::gmtime(&t));
  return buf;
}

double count_edges(const DiscreteGraph& g) {
  int e = 0;
  for (int i = 0; i < g.n; ++i)
    for (int j = i + 1; j < g.n; ++j)
      if (g.edge(i, j) != 0) ++e;
  return double(e);
}

std::vector<double> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label file '" + path + "'");
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t cut = line.find('#');
    if (cut != std::string::npos) line.resize(cut);
    std::istringstream ls(line);
    double v = 0.0;
    if (ls >> v) {
      std::string rest;
      if (ls >> rest)
        throw std::runtime_error("label file '" + path + "' line " +
                                 std::to_string(lineno) + ": trailing fields");
      out.push_back(v);
    }
  }
  return out;
}

struct GenDataArgs {
  DatasetSpec spec;
  std::string out;
};

void run_gen_data(const GenDataArgs& a) {
  try {
    a.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("gen-data", e.what());
  }
  std::vector<DiscreteGraph> graphs = build_dataset(a.spec);
  if (!a.out.empty() && a.out.find('/') != std::string::npos)
    fs::create_directories(fs::path(a.out).parent_path());
  save_graphs(a.out, graphs);
  int nmin = graphs.empty() ? 0 : graphs.front().n, nmax = nmin;
  for (const DiscreteGraph& g : graphs) {
    nmin = std::min(nmin, g.n);
    nmax = std::max(nmax, g.n);
  }
  std::printf("wrote %zu graphs (%d..%d nodes) to %s\n", graphs.size(), nmin, nmax,
              a.out.c_str());
}

struct GenMolsArgs {
  int count = 5000;
  int max_atoms = 9;
  std::int64_t seed = 0;
  std::string out;
};

void run_gen_mols(const GenMolsArgs& a) {
  Rng rng(std::uint64_t(a.seed));
  std::vector<Molecule> mols = gen_molecule_corpus(a.count, a.max_atoms, rng);
  if (!a.out.empty() && a.out.find('/') != std::string::npos)
    fs::create_directories(fs::path(a.out).parent_path());
  std::ofstream outf(a.out);
  if (!outf) throw std::runtime_error("cannot write '" + a.out + "'");
  for (const Molecule& m : mols) outf << write_smiles(m) << "\n";
  std::printf("wrote %zu molecules to %s\n", mols.size(), a.out.c_str());
}

struct TrainArgs {
  std::string config_path;
  std::string out_dir;
  std::string command_line;
  // flag overrides; negative/empty means "keep the file's value"
  std::int64_t seed = -1;
  std::int64_t steps = -1;
  std::int64_t batch = -1;
  std::string precision;
};

void run_train(const TrainArgs& a) {
  std::string text = read_file(a.config_path);
  Ini ini = parse_ini(text);
  check_ini(ini, {"dataset", "schedule", "denoiser", "train"});

  DatasetSpec ds = dataset_from_ini(ini);
  NoiseSchedule sched = schedule_from_ini(ini);
  DenoiserConfig dc = denoiser_from_ini(ini);
  TrainConfig tc = train_from_ini(ini);
  if (a.seed >= 0) tc.seed = std::uint64_t(a.seed);
  if (a.steps >= 0) tc.total_steps = a.steps;
  if (a.batch > 0) tc.batch_size = int(a.batch);
  if (!a.precision.empty()) tc.precision = a.precision;
  tc.validate();

  std::string target = ini.get_str("train", "target", "denoiser");
  if (target != "denoiser" && target != "property")
    throw ConfigError("train.target", "must be denoiser or property, got '" + target + "'");

  std::vector<DiscreteGraph> graphs = build_dataset(ds);
  SplitResult sp = split(graphs, ds.split_ratio, ds.seed);

  fs::create_directories(a.out_dir);
  save_graphs(a.out_dir + "/dataset_full.txt", graphs);
  save_graphs(a.out_dir + "/train.txt", sp.train);
  save_graphs(a.out_dir + "/test.txt", sp.test);

  std::ofstream log(a.out_dir + "/run.log");
  if (!log) throw std::runtime_error("cannot write '" + a.out_dir + "/run.log'");
  log << "version: " << kVersion << "\n"
      << "started: " << utc_now() << "\n"
      << "command: " << a.command_line << "\n"
      << "config: " << a.config_path << "\n"
      << "config_hash: " << std::hex << fnv1a(text) << std::dec << "\n"
      << "seed: " << tc.seed << "\n"
      << "target: " << target << "\n"
      << "graphs: " << graphs.size() << " (" << sp.train.size() << " train, "
      << sp.test.size() << " test)\n"
      << "--- config echo ---\n"
      << text << "--- end config ---\n";
  log.flush();

  nlohmann::json extra = nlohmann::json::object();
  extra["target"] = target;
  extra["dataset_kind"] = ds.kind;

  std::vector<double> labels;
  if (target == "property") {
    std::string lab = ini.get_str("train", "labels", "edge_count");
    extra["labels"] = lab;
    if (lab == "edge_count") {
      for (const DiscreteGraph& g : sp.train) labels.push_back(count_edges(g));
    } else {
      std::vector<double> all = read_labels(lab);
      if (all.size() != graphs.size())
        throw std::runtime_error("label file '" + lab + "': " +
                                 std::to_string(all.size()) + " labels for " +
                                 std::to_string(graphs.size()) + " graphs");
      for (int idx : sp.train_idx) labels.push_back(all[std::size_t(idx)]);
    }
    if (ini.get_bool("train", "standardize_labels", false)) {
      double mean = 0.0;
      for (double v : labels) mean += v;
      mean /= double(labels.size());
      double var = 0.0;
      for (double v : labels) var += (v - mean) * (v - mean);
      double sd = std::sqrt(var / double(labels.size()));
      if (!(sd > 0.0))
        throw std::runtime_error("standardize_labels: labels have zero variance");
      for (double& v : labels) v = (v - mean) / sd;
      extra["label_mean"] = mean;
      extra["label_std"] = sd;
    }
  }

  auto t0 = std::chrono::steady_clock::now();
  TrainReport rep;
  if (target == "denoiser") {
    rep = tc.precision == "f32"
              ? train_denoiser<float>(dc, tc, sched, sp.train, a.out_dir, ScaleSpec{}, extra)
              : train_denoiser<double>(dc, tc, sched, sp.train, a.out_dir, ScaleSpec{}, extra);
  } else {
    rep = tc.precision == "f32"
              ? train_property<float>(dc, tc, sched, sp.train, labels, a.out_dir, ScaleSpec{}, extra)
              : train_property<double>(dc, tc, sched, sp.train, labels, a.out_dir, ScaleSpec{}, extra);
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  log << "finished: " << utc_now() << "\n"
      << "steps: " << rep.steps << "\n"
      << "first_loss: " << rep.first_loss << "\n"
      << "final_loss: " << rep.final_loss << "\n"
      << "final_checkpoint: " << rep.final_checkpoint << "\n"
      << "wall_seconds: " << secs << "\n";
  std::printf("trained %lld steps in %.1f s; loss %.4f -> %.4f; final checkpoint %s\n",
              (long long)rep.steps, secs, rep.first_loss, rep.final_loss,
              rep.final_checkpoint.c_str());
}

// molecules sampled from a checkpoint trained on SMILES ingestion decode
// against the same fixed alphabet the ingestion used
const std::vector<std::string> kMolAlphabet = {"C", "N", "O", "F"};

std::string pick_group(const Checkpoint& ck, const std::string& requested) {
  std::string g = requested == "raw" ? "param" : requested;
  if (g == "ema" && !has_param_group(ck, "ema")) g = "param";
  if (!has_param_group(ck, g))
    throw std::runtime_error("checkpoint has no '" + g + "' parameter group");
  return g;
}

void require_kind(const Checkpoint& ck, const std::string& kind,
                  const std::string& path) {
  std::string have = ck.meta.value("kind", std::string("?"));
  if (have != kind)
    throw std::runtime_error("'" + path + "' is a " + have +
                             " checkpoint; expected " + kind);
}

struct SampleArgs {
  std::string ckpt;
  std::string solver = "gdpms3";
  std::int64_t nfe = 30;
  std::int64_t num = 1;
  std::int64_t seed = 0;
  std::string weights = "ema";  // ema | raw
  std::string out;
};

SamplerConfig solver_config(const std::string& solver, int nfe) {
  SamplerConfig cfg;
  cfg.nfe = nfe;
  if (solver == "em") {
    cfg.family = SolverFamily::em;
  } else if (solver == "rk4") {
    cfg.family = SolverFamily::rk4;
  } else if (solver == "gdpms1" || solver == "gdpms2" || solver == "gdpms3") {
    cfg.family = SolverFamily::gdpms;
    cfg.order = solver.back() - '0';
  } else {
    throw std::runtime_error("unknown solver '" + solver +
                             "' (em|gdpms1|gdpms2|gdpms3|rk4)");
  }
  return cfg;
}

template <typename T>
void sample_with(const Checkpoint& ck, const SampleArgs& a) {
  DenoiserConfig dc = denoiser_config_from_json(ck.meta.at("denoiser"));
  NoiseSchedule sched = schedule_from_json(ck.meta.at("schedule"));
  ScaleSpec sc = scale_spec_from_json(ck.meta.at("scale"));
  NodeCountHist hist = node_hist_from_json(ck.meta.at("node_hist"));
  if (hist.total() <= 0)
    throw std::runtime_error("checkpoint carries an empty node-count histogram");
  DenoiserT<T> model = denoiser_from_params<T>(
      dc, extract_param_group<T>(ck, pick_group(ck, a.weights)));
  SamplerConfig cfg = solver_config(a.solver, int(a.nfe));
  cfg.validate(sched);
  bool molecules = ck.meta.value("dataset_kind", std::string()) == "molecule_file";

  if (!a.out.empty() && a.out.find('/') != std::string::npos)
    fs::create_directories(fs::path(a.out).parent_path());
  Rng master(std::uint64_t(a.seed));
  auto t0 = std::chrono::steady_clock::now();
  std::vector<DiscreteGraph> graphs;
  std::vector<std::string> lines;
  for (std::int64_t i = 0; i < a.num; ++i) {
    Rng rng = master.fork(std::uint64_t(i));
    int n = hist.sample(rng);
    DiscreteGraph g;
    if (cfg.family == SolverFamily::em)
      g = em_sample(model, sched, sc, n, int(a.nfe), rng);
    else if (cfg.family == SolverFamily::rk4)
      g = rk4_sample(model, sched, sc, cfg, n, rng);
    else
      g = gdpms_sample(model, sched, sc, cfg, n, rng);
    if (molecules) {
      // keep the raw decode (largest component, no valency repair) so the
      // validity-without-check metric stays meaningful downstream
      Molecule m = largest_component(molecule_from_graph(g, kMolAlphabet));
      lines.push_back(write_smiles(m));
    } else {
      graphs.push_back(g);
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (molecules) {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
    for (const std::string& s : lines) out << s << "\n";
  } else {
    save_graphs(a.out, graphs);
  }
  std::printf("sampled %lld %s with %s (nfe %lld) in %.1f s -> %s\n",
              (long long)a.num, molecules ? "molecules" : "graphs",
              a.solver.c_str(), (long long)a.nfe, secs, a.out.c_str());
}

void run_sample(const SampleArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  require_kind(ck, "denoiser", a.ckpt);
  if (ck.meta.value("precision", std::string("f64")) == "f32")
    sample_with<float>(ck, a);
  else
    sample_with<double>(ck, a);
}

struct EvalArgs {
  std::string ref, gen, train, out;
  bool molecules = false;
};

// one SMILES per line; unparseable lines are skipped and counted
std::pair<std::vector<Molecule>, int> read_smiles_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<Molecule> mols;
  int skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      mols.push_back(parse_smiles(line));
    } catch (const std::exception&) {
      ++skipped;
    }
  }
  return {mols, skipped};
}

// descriptor metrics only look at the connectivity, so no alphabet is needed
DiscreteGraph skeleton_of(const Molecule& m) {
  DiscreteGraph g(m.n());
  for (const Bond& b : m.bonds) g.set_edge(b.i, b.j, b.order);
  return g;
}

void run_eval(const EvalArgs& a) {
  MetricReport rep;
  if (a.molecules) {
    auto [ref_mols, ref_skip] = read_smiles_lines(a.ref);
    auto [gen_mols, gen_skip] = read_smiles_lines(a.gen);
    if (ref_skip + gen_skip > 0)
      std::fprintf(stderr, "warning: skipped %d unparseable line(s)\n",
                   ref_skip + gen_skip);
    rep.ref_count = int(ref_mols.size());
    rep.gen_count = int(gen_mols.size());
    std::vector<DiscreteGraph> ref_gs, gen_gs;
    for (const Molecule& m : ref_mols)
      if (m.n() > 0) ref_gs.push_back(skeleton_of(m));
    for (const Molecule& m : gen_mols)
      if (m.n() > 0) gen_gs.push_back(skeleton_of(m));
    rep.has_graph_metrics = true;
    rep.graph = descriptor_mmds(ref_gs, gen_gs, rep.cfg);
    std::set<std::uint64_t> train_hashes;
    if (!a.train.empty()) {
      auto [train_mols, train_skip] = read_smiles_lines(a.train);
      (void)train_skip;
      for (const Molecule& m : train_mols) train_hashes.insert(canonical_hash(m));
    }
    rep.has_molecule_metrics = true;
    rep.mol = molecule_metrics(gen_mols, train_hashes);
  } else {
    std::vector<DiscreteGraph> ref = load_graphs(a.ref);
    std::vector<DiscreteGraph> gen = load_graphs(a.gen);
    rep.ref_count = int(ref.size());
    rep.gen_count = int(gen.size());
    rep.has_graph_metrics = true;
    rep.graph = descriptor_mmds(ref, gen, rep.cfg);
  }
  if (!a.out.empty() && a.out.find('/') != std::string::npos)
    fs::create_directories(fs::path(a.out).parent_path());
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
  out << rep.to_tsv();
  std::printf("%s", rep.to_tsv().c_str());
}

struct OptimizeArgs {
  std::string ckpt, predictor, input, out;
  double delta = 0.4;
  std::int64_t steps = 50;
  std::int64_t restarts = 1;
  std::int64_t seed = 0;
  double guide = 0.0;
  double t_xi = 0.3;
  std::string weights = "ema";
};

template <typename T>
void optimize_with(const Checkpoint& dk, const Checkpoint& pk,
                   const OptimizeArgs& a) {
  DenoiserT<T> model = denoiser_from_params<T>(
      denoiser_config_from_json(dk.meta.at("denoiser")),
      extract_param_group<T>(dk, pick_group(dk, a.weights)));
  PropertyNetT<T> predictor = property_net_from_params<T>(
      denoiser_config_from_json(pk.meta.at("denoiser")),
      extract_param_group<T>(pk, pick_group(pk, a.weights)));
  NoiseSchedule sched = schedule_from_json(dk.meta.at("schedule"));
  ScaleSpec sc = scale_spec_from_json(dk.meta.at("scale"));
  NodeCountHist hist = node_hist_from_json(dk.meta.at("node_hist"));
  // a predictor trained on standardized labels reports in those units;
  // fold the stored moments back in for the human-readable columns
  double lmean = pk.meta.value("label_mean", 0.0);
  double lstd = pk.meta.value("label_std", 1.0);

  auto [mols, skipped] = read_smiles_lines(a.input);
  if (skipped > 0)
    std::fprintf(stderr, "warning: skipped %d unparseable line(s)\n", skipped);
  if (mols.empty()) throw std::runtime_error("no usable molecules in '" + a.input + "'");

  OptimizeConfig ocfg;
  ocfg.delta = a.delta;
  ocfg.ascent_steps = int(a.steps);
  ocfg.restarts = int(a.restarts);
  ocfg.guidance_weight = a.guide;
  ocfg.t_xi = a.t_xi;

  if (!a.out.empty() && a.out.find('/') != std::string::npos)
    fs::create_directories(fs::path(a.out).parent_path());
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
  out << "index\tinput\toutput\tsuccess\tinput_score\tbest_score\t"
         "improvement\tsimilarity\n";
  out << std::setprecision(10);
  Rng master(std::uint64_t(a.seed));
  double sum_improvement = 0.0;
  int successes = 0;
  for (std::size_t i = 0; i < mols.size(); ++i) {
    ocfg.seed = master.fork(i).seed();
    OptimizeResult res =
        optimize_molecule(mols[i], model, predictor, sched, sc, kMolAlphabet,
                          hist, ocfg);
    double in_score = res.input_score * lstd + lmean;
    out << i << "\t" << write_smiles(mols[i]) << "\t";
    if (res.success) {
      double best = res.best_score * lstd + lmean;
      out << write_smiles(res.best) << "\t1\t" << in_score << "\t" << best
          << "\t" << (best - in_score) << "\t" << res.similarity << "\n";
      sum_improvement += best - in_score;
      ++successes;
    } else {
      out << "-\t0\t" << in_score << "\t-\t-\t-\n";
    }
  }
  std::printf("optimized %zu molecules: %d within the similarity budget, "
              "mean improvement %.4f -> %s\n",
              mols.size(), successes,
              successes ? sum_improvement / successes : 0.0, a.out.c_str());
}

void run_optimize(const OptimizeArgs& a) {
  Checkpoint dk = load_checkpoint(a.ckpt);
  Checkpoint pk = load_checkpoint(a.predictor);
  require_kind(dk, "denoiser", a.ckpt);
  require_kind(pk, "property", a.predictor);
  if (dk.meta.value("precision", std::string("f64")) == "f32")
    optimize_with<float>(dk, pk, a);
  else
    optimize_with<double>(dk, pk, a);
}

void run_inspect(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  std::printf("kind: %s\n", ck.meta.value("kind", std::string("?")).c_str());
  std::printf("step: %lld\n", (long long)ck.meta.value("step", std::int64_t(-1)));
  std::string groups;
  for (const char* g : {"param", "ema", "adam_m", "adam_v"})
    if (has_param_group(ck, g)) groups += groups.empty() ? g : std::string(" ") + g;
  std::printf("groups: %s\n", groups.c_str());
  std::size_t scalars = 0, nparam = 0;
  for (const auto& [name, t] : ck.tensors) {
    if (name.rfind("param/", 0) == 0) {
      ++nparam;
      scalars += t.size();
    }
  }
  std::printf("param tensors: %zu (%zu scalars)\n", nparam, scalars);
  nlohmann::json meta = ck.meta;
  std::printf("meta: %s\n", meta.dump(2).c_str());
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph diffusion toolkit"};
  app.require_subcommand(1);

  GenDataArgs gd;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a graph dataset file");
  gen->add_option("--kind", gd.spec.kind,
                  "community_small | ego_from_network | molecule_file | file")
      ->required();
  gen->add_option("--count", gd.spec.count, "number of graphs");
  std::int64_t gd_seed = 0;
  gen->add_option("--seed", gd_seed, "generator seed");
  gen->add_option("--out", gd.out, "output path")->required();
  gen->add_option("--network", gd.spec.network_path, "edge-list file for ego extraction");
  gen->add_option("--hops", gd.spec.hops, "ego ball radius");
  gen->add_option("--min-nodes", gd.spec.min_nodes, "lower node bound");
  gen->add_option("--max-nodes", gd.spec.max_nodes, "upper node bound");
  gen->add_option("--molecule-file", gd.spec.molecule_path, "SMILES list for ingestion");
  gen->add_option("--max-atoms", gd.spec.max_atoms, "skip molecules above this size");
  gen->add_option("--path", gd.spec.path, "graph file to load for kind=file");

  GenMolsArgs gm;
  CLI::App* mols = app.add_subcommand("gen-mols", "generate a synthetic SMILES corpus");
  mols->add_option("--count", gm.count, "number of distinct molecules");
  mols->add_option("--max-atoms", gm.max_atoms, "heavy-atom cap");
  mols->add_option("--seed", gm.seed, "generator seed");
  mols->add_option("--out", gm.out, "output SMILES file")->required();

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "run a training loop from a config file");
  tr->add_option("--config", ta.config_path, "INI config path")->required();
  tr->add_option("--out", ta.out_dir, "output directory")->required();
  tr->add_option("--seed", ta.seed, "override train.seed");
  tr->add_option("--steps", ta.steps, "override train.total_steps");
  tr->add_option("--batch-size", ta.batch, "override train.batch_size");
  tr->add_option("--precision", ta.precision, "override train.precision (f32|f64)");

  SampleArgs sa;
  CLI::App* smp = app.add_subcommand("sample", "draw graphs from a trained model");
  smp->add_option("--ckpt", sa.ckpt, "denoiser checkpoint")->required();
  smp->add_option("--solver", sa.solver, "em | gdpms1 | gdpms2 | gdpms3 | rk4");
  smp->add_option("--nfe", sa.nfe, "model evaluations per sample");
  smp->add_option("--num", sa.num, "number of samples");
  smp->add_option("--seed", sa.seed, "sampling seed");
  smp->add_option("--weights", sa.weights, "parameter group: ema | raw");
  smp->add_option("--out", sa.out, "output file")->required();

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "compare a generated set against a reference");
  ev->add_option("--ref", ea.ref, "reference set")->required();
  ev->add_option("--gen", ea.gen, "generated set")->required();
  ev->add_flag("--molecules", ea.molecules, "inputs are SMILES line files");
  ev->add_option("--train", ea.train, "training SMILES for the novelty metric");
  ev->add_option("--out", ea.out, "report path (TSV)")->required();

  OptimizeArgs oa;
  CLI::App* opt = app.add_subcommand("optimize", "push molecules toward higher predicted property");
  opt->add_option("--ckpt", oa.ckpt, "denoiser checkpoint")->required();
  opt->add_option("--predictor", oa.predictor, "property checkpoint")->required();
  opt->add_option("--delta", oa.delta, "similarity threshold in [0,1]");
  opt->add_option("--steps", oa.steps, "ascent steps per restart");
  opt->add_option("--restarts", oa.restarts, "independent restarts");
  opt->add_option("--seed", oa.seed, "optimization seed");
  opt->add_option("--guide", oa.guide, "guidance weight for the decode");
  opt->add_option("--t-xi", oa.t_xi, "latent anchor time");
  opt->add_option("--weights", oa.weights, "parameter group: ema | raw");
  opt->add_option("--input", oa.input, "SMILES file to optimize")->required();
  opt->add_option("--out", oa.out, "per-molecule report path (TSV)")->required();

  std::string ckpt_path;
  CLI::App* ins = app.add_subcommand("inspect-ckpt", "print checkpoint summary");
  ins->add_option("--ckpt", ckpt_path, "checkpoint path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      gd.spec.seed = std::uint64_t(gd_seed);
      run_gen_data(gd);
    } else if (mols->parsed()) {
      run_gen_mols(gm);
    } else if (tr->parsed()) {
      ta.command_line = join_args(argc, argv);
      run_train(ta);
    } else if (smp->parsed()) {
      run_sample(sa);
    } else if (ev->parsed()) {
      run_eval(ea);
    } else if (opt->parsed()) {
      run_optimize(oa);
    } else if (ins->parsed()) {
      run_inspect(ckpt_path);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
