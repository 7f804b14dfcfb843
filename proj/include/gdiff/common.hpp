#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gdiff {

inline constexpr const char* kVersion = "0.1.0";

// Thrown on malformed text input (SMILES, graph files, configs).
// offset is a byte position into the offending input.
struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& msg, std::size_t off)
      : std::runtime_error(msg + " (byte " + std::to_string(off) + ")"), offset(off) {}
};

// Config validation failure; field is a dotted path like "model.hidden".
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(const std::string& fld, const std::string& msg)
      : std::runtime_error("config field '" + fld + "': " + msg), field(fld) {}
};

}  // namespace gdiff
