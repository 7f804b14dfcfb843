#include "gdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gdiff {

namespace {
constexpr char kMagic[8] = {'G', 'D', 'I', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersionTag = 1;

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(p[i])) << (8 * i);
  return v;
}
std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(p[i])) << (8 * i);
  return v;
}
}  // namespace

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::invalid_argument("checkpoint: no tensor named '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json meta = ck.meta;
  meta["format_version"] = kVersionTag;
  nlohmann::json tl = nlohmann::json::array();
  for (const auto& [name, t] : ck.tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    tl.push_back(e);
  }
  meta["tensors"] = tl;
  std::string mjson = meta.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersionTag);
  put_u64(out, mjson.size());
  out += mjson;
  for (const auto& [name, t] : ck.tensors) {
    static_assert(sizeof(double) == 8);
    const char* p = reinterpret_cast<const char*>(t.data());
    out.append(p, std::size_t(t.size()) * 8);  // little-endian host assumed
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  f.flush();
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) + 12 ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t ver = get_u32(buf.data() + 8);
  if (ver != kVersionTag)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(ver) + " in " + path);
  std::uint64_t mlen = get_u64(buf.data() + 12);
  std::size_t off = sizeof(kMagic) + 12;
  if (off + mlen > buf.size())
    throw std::runtime_error("checkpoint: truncated meta block in " + path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(buf.substr(off, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: bad meta JSON in " + path + ": " + e.what());
  }
  off += mlen;

  Checkpoint ck;
  if (!meta.contains("tensors") || !meta["tensors"].is_array())
    throw std::runtime_error("checkpoint: meta lacks tensor directory in " + path);
  for (const auto& e : meta["tensors"]) {
    std::string name = e.at("name").get<std::string>();
    Shape shp = e.at("shape").get<Shape>();
    std::int64_t cnt = numel(shp);
    if (off + std::size_t(cnt) * 8 > buf.size())
      throw std::runtime_error("checkpoint: truncated tensor '" + name + "' in " + path);
    std::vector<double> vals(std::size_t(cnt), 0.0);
    std::memcpy(vals.data(), buf.data() + off, std::size_t(cnt) * 8);
    off += std::size_t(cnt) * 8;
    ck.tensors.emplace_back(name, Tensor::from(shp, std::move(vals)));
  }
  meta.erase("tensors");
  meta.erase("format_version");
  ck.meta = std::move(meta);
  return ck;
}

template <typename T>
void add_param_group(Checkpoint& ck, const std::string& group,
                     const ParamSetT<T>& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const TensorT<T>& t = ps.tensor(i);
    std::vector<double> v(t.data(), t.data() + t.size());
    ck.tensors.emplace_back(group + "/" + ps.name(i),
                            Tensor::from(t.shape(), std::move(v)));
  }
}

bool has_param_group(const Checkpoint& ck, const std::string& group) {
  std::string pre = group + "/";
  for (const auto& [n, t] : ck.tensors)
    if (n.rfind(pre, 0) == 0) return true;
  return false;
}

template <typename T>
ParamSetT<T> extract_param_group(const Checkpoint& ck, const std::string& group,
                                 bool requires_grad) {
  std::string pre = group + "/";
  ParamSetT<T> ps;
  for (const auto& [n, t] : ck.tensors) {
    if (n.rfind(pre, 0) != 0) continue;
    std::vector<T> v(t.data(), t.data() + t.size());
    ps.add(n.substr(pre.size()), TensorT<T>::from(t.shape(), std::move(v), requires_grad));
  }
  if (ps.size() == 0)
    throw std::runtime_error("checkpoint: no tensors in group '" + group + "'");
  return ps;
}

template void add_param_group<float>(Checkpoint&, const std::string&, const ParamSetT<float>&);
template void add_param_group<double>(Checkpoint&, const std::string&, const ParamSetT<double>&);
template ParamSetT<float> extract_param_group<float>(const Checkpoint&, const std::string&, bool);
template ParamSetT<double> extract_param_group<double>(const Checkpoint&, const std::string&, bool);


nlohmann::json denoiser_config_json(const DenoiserConfig& cfg) {
  return {{"num_blocks", cfg.num_blocks},   {"hidden_dim", cfg.hidden_dim},
          {"num_heads", cfg.num_heads},     {"rw_steps", cfg.rw_steps},
          {"feat_dim", cfg.feat_dim},       {"n_max", cfg.n_max}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig cfg;
  cfg.num_blocks = j.at("num_blocks").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.rw_steps = j.at("rw_steps").get<int>();
  cfg.feat_dim = j.at("feat_dim").get<int>();
  cfg.n_max = j.at("n_max").get<int>();
  cfg.validate();
  return cfg;
}

nlohmann::json schedule_json(const NoiseSchedule& s) {
  return {{"beta_min", s.beta_min}, {"beta_max", s.beta_max}, {"T", s.T}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  return NoiseSchedule(j.at("beta_min").get<double>(), j.at("beta_max").get<double>(),
                       j.at("T").get<double>());
}

nlohmann::json scale_spec_json(const ScaleSpec& sc) {
  return {{"node_lo", sc.node_lo}, {"node_hi", sc.node_hi},
          {"edge_lo", sc.edge_lo}, {"edge_hi", sc.edge_hi}};
}

ScaleSpec scale_spec_from_json(const nlohmann::json& j) {
  ScaleSpec sc;
  sc.node_lo = j.at("node_lo").get<double>();
  sc.node_hi = j.at("node_hi").get<double>();
  sc.edge_lo = j.at("edge_lo").get<double>();
  sc.edge_hi = j.at("edge_hi").get<double>();
  return sc;
}

nlohmann::json node_hist_json(const NodeCountHist& h) {
  return nlohmann::json(h.counts);
}

NodeCountHist node_hist_from_json(const nlohmann::json& j) {
  NodeCountHist h;
  h.counts = j.get<std::vector<std::int64_t>>();
  return h;
}

}  // namespace gdiff
