#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gdiff/denoiser.hpp"
#include "gdiff/schedule.hpp"
#include "gdiff/tensor.hpp"

namespace gdiff {

// Versioned on-disk container: a JSON meta block plus raw 64-bit-float tensor
// payloads. Roundtrips bit-exactly. Layout documented in FORMATS.md.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  bool has_tensor(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Parameter sets are stored under "<group>/<param name>"; values convert
// through double, which is exact for float-valued training runs.
template <typename T>
void add_param_group(Checkpoint& ck, const std::string& group,
                     const ParamSetT<T>& ps);
template <typename T>
ParamSetT<T> extract_param_group(const Checkpoint& ck, const std::string& group,
                                 bool requires_grad = true);
bool has_param_group(const Checkpoint& ck, const std::string& group);

extern template void add_param_group<float>(Checkpoint&, const std::string&, const ParamSetT<float>&);
extern template void add_param_group<double>(Checkpoint&, const std::string&, const ParamSetT<double>&);
extern template ParamSetT<float> extract_param_group<float>(const Checkpoint&, const std::string&, bool);
extern template ParamSetT<double> extract_param_group<double>(const Checkpoint&, const std::string&, bool);

// Meta-block round trips for the structured pieces a sampler needs to rebuild
// a model from its checkpoint alone.
nlohmann::json denoiser_config_json(const DenoiserConfig& cfg);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);
nlohmann::json schedule_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);
nlohmann::json scale_spec_json(const ScaleSpec& sc);
ScaleSpec scale_spec_from_json(const nlohmann::json& j);
nlohmann::json node_hist_json(const NodeCountHist& h);
NodeCountHist node_hist_from_json(const nlohmann::json& j);

}  // namespace gdiff
