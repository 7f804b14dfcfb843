#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gdiff/common.hpp"
#include "gdiff/datagen.hpp"
#include "gdiff/denoiser.hpp"
#include "gdiff/schedule.hpp"
#include "gdiff/trainer.hpp"

namespace gdiff {

// Minimal INI dialect: `[section]` headers, `key = value` lines, `#` or `;`
// comments (full line or trailing), blank lines ignored. Values keep inner
// spaces; surrounding whitespace is trimmed. Duplicate keys are an error.
struct Ini {
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& sec, const std::string& key) const;
  // typed getters: fall back to `fallback` when absent, throw ConfigError
  // ("sec.key") on malformed values
  std::string get_str(const std::string& sec, const std::string& key,
                      const std::string& fallback) const;
  std::int64_t get_int(const std::string& sec, const std::string& key,
                       std::int64_t fallback) const;
  double get_double(const std::string& sec, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& sec, const std::string& key, bool fallback) const;
};

// Throws ConfigError with a line number on malformed text.
Ini parse_ini(const std::string& text);

// Rejects sections outside the known set, and unknown keys inside every
// section listed in `strict_sections`. Field paths read `section.key`.
void check_ini(const Ini& ini, const std::vector<std::string>& strict_sections);

// Section readers (each validates its struct before returning).
DatasetSpec dataset_from_ini(const Ini& ini);
NoiseSchedule schedule_from_ini(const Ini& ini);
DenoiserConfig denoiser_from_ini(const Ini& ini);
TrainConfig train_from_ini(const Ini& ini);

// FNV-1a over the raw config text; logged so runs can be matched to configs.
std::uint64_t fnv1a(const std::string& text);

}  // namespace gdiff
