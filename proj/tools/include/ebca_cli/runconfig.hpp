#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebca/matrix.hpp"

namespace ebca::cli {

// Raised for anything the user got wrong: unknown keys, bad values, missing
// required keys, malformed config files. Mapped to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind { i64, u64, f64, boolean, text };

struct FieldSpec {
  std::string key;
  Kind kind = Kind::text;
  std::string def;  // canonical default; ignored when required
  double min = -1e308;
  double max = 1e308;
  std::vector<std::string> choices;  // text fields only; empty = free-form
  bool required = false;
};

using KeyValueMap = std::map<std::string, std::string>;

// A fully resolved run: every schema key present with a validated canonical
// value. This is exactly what the manifest echoes.
struct RunConfig {
  std::string command;
  KeyValueMap values;

  std::int64_t get_i64(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_f64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_text(const std::string& key) const;
};

const std::vector<FieldSpec>& schema_for(const std::string& command);
const std::vector<std::string>& command_names();

// key=value lines; blank lines and #-comments skipped; duplicate keys are an
// error. A command= line, when present, must match the invoked subcommand.
KeyValueMap read_config_file(const std::string& path);

RunConfig resolve_config(const std::string& command, const KeyValueMap& file_values,
                         const KeyValueMap& overrides);

// command= first, then every key sorted; rerunning the subcommand with
// --config <manifest> reproduces the run byte for byte.
void write_manifest(const RunConfig& cfg, const std::string& path);

std::vector<int> parse_int_list(const std::string& text, const std::string& what);
Vector parse_real_list(const std::string& text, const std::string& what);

}  // namespace ebca::cli
