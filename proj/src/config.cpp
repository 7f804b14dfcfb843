#include "gdiff/config.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

namespace gdiff {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// ConfigError::what() carries a "config field 'x': " prefix; recover the bare
// message so re-wrapping under a section path doesn't stack prefixes.
std::string bare_msg(const ConfigError& e) {
  std::string pre = "config field '" + e.field + "': ";
  std::string w = e.what();
  return w.rfind(pre, 0) == 0 ? w.substr(pre.size()) : w;
}

// section -> allowed keys; sections themselves are a closed set
const std::map<std::string, std::set<std::string>>& registry() {
  static const std::map<std::string, std::set<std::string>> reg{
      {"dataset",
       {"kind", "count", "split_ratio", "seed", "network_path", "hops", "min_nodes",
        "max_nodes", "molecule_path", "max_atoms", "path"}},
      {"schedule", {"beta_min", "beta_max", "T"}},
      {"denoiser",
       {"num_blocks", "hidden_dim", "num_heads", "rw_steps", "feat_dim", "n_max"}},
      {"train",
       {"batch_size", "total_steps", "lr", "ema_decay", "seed", "precision",
        "checkpoint_every", "t_floor", "target", "labels", "standardize_labels"}},
      {"sample",
       {"method", "steps", "count", "seed", "guidance_r", "property_ckpt", "use_ema",
        "node_count"}},
      {"eval",
       {"descriptors", "report", "reference", "samples", "subsample", "seed",
        "kekulized"}},
      {"optimize",
       {"steps", "lr", "seed", "t_anchor", "count", "property_ckpt", "out",
        "tanimoto_min"}},
  };
  return reg;
}

}  // namespace

bool Ini::has(const std::string& sec, const std::string& key) const {
  auto s = sections.find(sec);
  return s != sections.end() && s->second.count(key) != 0;
}

std::string Ini::get_str(const std::string& sec, const std::string& key,
                         const std::string& fallback) const {
  auto s = sections.find(sec);
  if (s == sections.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

std::int64_t Ini::get_int(const std::string& sec, const std::string& key,
                          std::int64_t fallback) const {
  if (!has(sec, key)) return fallback;
  const std::string& v = sections.at(sec).at(key);
  char* end = nullptr;
  long long r = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError(sec + "." + key, "not an integer: '" + v + "'");
  return r;
}

double Ini::get_double(const std::string& sec, const std::string& key,
                       double fallback) const {
  if (!has(sec, key)) return fallback;
  const std::string& v = sections.at(sec).at(key);
  char* end = nullptr;
  double r = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError(sec + "." + key, "not a number: '" + v + "'");
  return r;
}

bool Ini::get_bool(const std::string& sec, const std::string& key,
                   bool fallback) const {
  if (!has(sec, key)) return fallback;
  std::string v = sections.at(sec).at(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(sec + "." + key, "not a boolean: '" + v + "'");
}

Ini parse_ini(const std::string& text) {
  Ini ini;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(lineno), "empty section name");
      ini.sections[section];  // a section may legitimately stay empty
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno), "key before any [section]");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno), "empty key");
    if (!ini.sections[section].emplace(key, val).second)
      throw ConfigError(section + "." + key, "duplicate key");
  }
  return ini;
}

void check_ini(const Ini& ini, const std::vector<std::string>& strict_sections) {
  const auto& reg = registry();
  for (const auto& [sec, kv] : ini.sections) {
    auto r = reg.find(sec);
    if (r == reg.end()) throw ConfigError(sec, "unknown section");
    (void)kv;
  }
  for (const std::string& sec : strict_sections) {
    auto s = ini.sections.find(sec);
    if (s == ini.sections.end()) continue;
    const std::set<std::string>& allowed = registry().at(sec);
    for (const auto& [key, val] : s->second) {
      (void)val;
      if (!allowed.count(key)) throw ConfigError(sec + "." + key, "unknown key");
    }
  }
}

DatasetSpec dataset_from_ini(const Ini& ini) {
  DatasetSpec s;
  s.kind = ini.get_str("dataset", "kind", "");
  s.count = int(ini.get_int("dataset", "count", s.count));
  s.split_ratio = ini.get_double("dataset", "split_ratio", s.split_ratio);
  s.seed = std::uint64_t(ini.get_int("dataset", "seed", 0));
  s.network_path = ini.get_str("dataset", "network_path", "");
  s.hops = int(ini.get_int("dataset", "hops", s.hops));
  s.min_nodes = int(ini.get_int("dataset", "min_nodes", s.min_nodes));
  s.max_nodes = int(ini.get_int("dataset", "max_nodes", s.max_nodes));
  s.molecule_path = ini.get_str("dataset", "molecule_path", "");
  s.max_atoms = int(ini.get_int("dataset", "max_atoms", s.max_atoms));
  s.path = ini.get_str("dataset", "path", "");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("dataset", e.what());
  }
  return s;
}

NoiseSchedule schedule_from_ini(const Ini& ini) {
  try {
    return NoiseSchedule(ini.get_double("schedule", "beta_min", 0.1),
                         ini.get_double("schedule", "beta_max", 20.0),
                         ini.get_double("schedule", "T", 1.0));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("schedule", e.what());
  }
}

DenoiserConfig denoiser_from_ini(const Ini& ini) {
  DenoiserConfig c;
  c.num_blocks = int(ini.get_int("denoiser", "num_blocks", c.num_blocks));
  c.hidden_dim = int(ini.get_int("denoiser", "hidden_dim", c.hidden_dim));
  c.num_heads = int(ini.get_int("denoiser", "num_heads", c.num_heads));
  c.rw_steps = int(ini.get_int("denoiser", "rw_steps", c.rw_steps));
  c.feat_dim = int(ini.get_int("denoiser", "feat_dim", c.feat_dim));
  c.n_max = int(ini.get_int("denoiser", "n_max", c.n_max));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("denoiser." + e.field, bare_msg(e));
  }
  return c;
}

TrainConfig train_from_ini(const Ini& ini) {
  TrainConfig c;
  c.batch_size = int(ini.get_int("train", "batch_size", c.batch_size));
  c.total_steps = ini.get_int("train", "total_steps", c.total_steps);
  c.lr = ini.get_double("train", "lr", c.lr);
  c.ema_decay = ini.get_double("train", "ema_decay", c.ema_decay);
  c.seed = std::uint64_t(ini.get_int("train", "seed", 0));
  c.precision = ini.get_str("train", "precision", c.precision);
  c.checkpoint_every = ini.get_int("train", "checkpoint_every", c.checkpoint_every);
  c.t_floor = ini.get_double("train", "t_floor", c.t_floor);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("train." + e.field, bare_msg(e));
  }
  return c;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace gdiff
