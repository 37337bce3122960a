#include "ebca_cli/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ebca::cli {

namespace {

constexpr const char* kDefaultGammaAttn = "0.002";
constexpr const char* kDefaultGammaReg = "0.02";
constexpr const char* kDefaultGammaAttnTrace = "0.003";
constexpr const char* kDefaultGammaRegTrace = "0.0045";
constexpr const char* kDefaultGammaAttnInpaint = "0.02";
constexpr const char* kDefaultGammaRegInpaint = "0.002";

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::int64_t parse_i64(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + text + "'");
  }
  return v;
}

double parse_f64(const std::string& key, const std::string& text) {
  try {
    return parse_double(text);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "0" || text == "false") return false;
  if (text == "1" || text == "true") return true;
  throw ConfigError("key '" + key + "': expected 0/1, got '" + text + "'");
}

// Validates one raw value against its spec and returns the canonical form
// written to manifests.
std::string canonicalize(const FieldSpec& spec, const std::string& raw) {
  switch (spec.kind) {
    case Kind::i64: {
      const std::int64_t v = parse_i64(spec.key, raw);
      if (v < spec.min || v > spec.max) {
        throw ConfigError("key '" + spec.key + "': value " + std::to_string(v) +
                          " out of range [" + format_double(spec.min) + ", " +
                          format_double(spec.max) + "]");
      }
      return std::to_string(v);
    }
    case Kind::u64:
      return std::to_string(parse_u64(spec.key, raw));
    case Kind::f64: {
      const double v = parse_f64(spec.key, raw);
      if (!(v >= spec.min && v <= spec.max)) {
        throw ConfigError("key '" + spec.key + "': value " + format_double(v) +
                          " out of range [" + format_double(spec.min) + ", " +
                          format_double(spec.max) + "]");
      }
      return format_double(v);
    }
    case Kind::boolean:
      return parse_bool(spec.key, raw) ? "1" : "0";
    case Kind::text:
      if (!spec.choices.empty() &&
          std::find(spec.choices.begin(), spec.choices.end(), raw) == spec.choices.end()) {
        std::string allowed;
        for (const std::string& c : spec.choices) {
          if (!allowed.empty()) allowed += ", ";
          allowed += c;
        }
        throw ConfigError("key '" + spec.key + "': '" + raw + "' is not one of {" +
                          allowed + "}");
      }
      return raw;
  }
  throw ConfigError("key '" + spec.key + "': unhandled kind");
}

std::vector<FieldSpec> sampler_schema(const char* default_n_seeds,
                                      const char* default_gamma_attn,
                                      const char* default_gamma_reg,
                                      const char* default_prompt) {
  return {
      {"seed", Kind::u64, "7"},
      {"n_seeds", Kind::i64, default_n_seeds, 1, 100000},
      {"steps", Kind::i64, "50", 1, 10000},
      {"beta_start", Kind::f64, "0.0001", 1e-12, 0.999},
      {"beta_end", Kind::f64, "0.2", 1e-12, 0.999},
      {"prompt", Kind::text, default_prompt},
      {"checkpoint", Kind::text, ""},
      {"gamma_attn", Kind::f64, default_gamma_attn, 0.0, 100.0},
      {"gamma_reg", Kind::f64, default_gamma_reg, 0.0, 100.0},
      {"alpha", Kind::f64, "0", 0.0, 1000.0},
      {"schedule", Kind::text, "constant", 0, 0, {"constant", "step", "exp"}},
      {"tau", Kind::i64, "0", 0, 1000000},
      {"lambda", Kind::f64, "0.9", 1e-12, 1.0},
  };
}

std::map<std::string, std::vector<FieldSpec>> build_schemas() {
  std::map<std::string, std::vector<FieldSpec>> m;
  m["gradcheck"] = {
      {"seed", Kind::u64, "42"},
      {"seeds", Kind::i64, "100", 1, 100000},
      {"max_keys", Kind::i64, "8", 1, 64},
      {"max_queries", Kind::i64, "16", 1, 256},
      {"max_dim", Kind::i64, "8", 1, 64},
      {"tol", Kind::f64, "1e-06", 1e-300, 1.0},
      {"fd_step", Kind::f64, "1e-05", 1e-12, 0.5},
      {"inject_sign_flip", Kind::boolean, "0"},
  };
  m["hopfield-demo"] = {
      {"seed", Kind::u64, "3"},
      {"n_patterns", Kind::i64, "16", 1, 65536},
      {"dim", Kind::i64, "32", 1, 65536},
      {"beta", Kind::f64, "2", 1e-12, 1e6},
      {"eta", Kind::f64, "1", 0.0, 1.0},
      {"iters", Kind::i64, "500", 1, 10000000},
      {"tol", Kind::f64, "1e-08", 1e-300, 1.0},
  };
  m["train"] = {
      {"seed", Kind::u64, "17"},
      {"steps", Kind::i64, "2000", 0, 1000000},
      {"lr", Kind::f64, "0.001", 1e-12, 1.0},
      {"batch", Kind::i64, "4", 1, 4096},
      {"optimizer", Kind::text, "adam", 0, 0, {"sgd", "adam"}},
      {"heldout", Kind::i64, "64", 1, 65536},
      {"T", Kind::i64, "50", 1, 10000},
      {"beta_start", Kind::f64, "0.0001", 1e-12, 0.999},
      {"beta_end", Kind::f64, "0.2", 1e-12, 0.999},
      {"n_concepts", Kind::i64, "8", 2, 8},
      {"single_copies", Kind::i64, "2", 0, 1000},
      {"pair_copies", Kind::i64, "1", 0, 1000},
      {"shuffle_labels", Kind::boolean, "0"},
      {"amplitude", Kind::f64, "0.9", 1e-12, 1.0},
      {"init_seed", Kind::u64, "2024"},
      {"checkpoint_out", Kind::text, "denoiser.ckpt"},
  };
  {
    auto s = sampler_schema("1", kDefaultGammaAttn, kDefaultGammaReg, "0,7");
    s.push_back({"variant", Kind::text, "baseline", 0, 0, {"baseline", "ebcu", "both"}});
    s.push_back({"init_seed", Kind::u64, "2024"});
    m["sample"] = std::move(s);
  }
  {
    auto s = sampler_schema("1", "0", "0", "0,7");
    s.push_back({"variant", Kind::text, "ebcq", 0, 0, {"ebcq"}});
    s.push_back({"alpha_s", Kind::text, "1,1"});
    s.push_back({"init_seed", Kind::u64, "2024"});
    m["compose"] = std::move(s);
  }
  {
    auto s = sampler_schema("1", kDefaultGammaAttnInpaint, kDefaultGammaRegInpaint, "7");
    s.push_back({"variant", Kind::text, "baseline", 0, 0, {"baseline", "ebcu"}});
    s.push_back({"mask", Kind::text, "", 0, 0, {}, true});
    s.push_back({"known_concept", Kind::i64, "0", 0, 7});
    s.push_back({"amplitude", Kind::f64, "0.9", 1e-12, 1.0});
    s.push_back({"init_seed", Kind::u64, "2024"});
    m["inpaint"] = std::move(s);
  }
  {
    auto s = sampler_schema("30", kDefaultGammaAttnTrace, kDefaultGammaRegTrace, "0,7");
    s.push_back({"variant", Kind::text, "both", 0, 0, {"both"}});
    m["energy-trace"] = std::move(s);
  }
  return m;
}

const std::map<std::string, std::vector<FieldSpec>>& schemas() {
  static const std::map<std::string, std::vector<FieldSpec>> kSchemas = build_schemas();
  return kSchemas;
}

}  // namespace

const std::vector<FieldSpec>& schema_for(const std::string& command) {
  const auto it = schemas().find(command);
  if (it == schemas().end()) throw ConfigError("unknown command '" + command + "'");
  return it->second;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> kNames = [] {
    std::vector<std::string> names;
    for (const auto& [name, schema] : schemas()) names.push_back(name);
    return names;
  }();
  return kNames;
}

KeyValueMap read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  KeyValueMap kv;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto pos = stripped.find('=');
    if (pos == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(stripped.substr(0, pos));
    const std::string value = trim(stripped.substr(pos + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

RunConfig resolve_config(const std::string& command, const KeyValueMap& file_values,
                         const KeyValueMap& overrides) {
  const std::vector<FieldSpec>& schema = schema_for(command);
  KeyValueMap merged = file_values;
  for (const auto& [k, v] : overrides) merged[k] = v;
  if (const auto it = merged.find("command"); it != merged.end()) {
    if (it->second != command) {
      throw ConfigError("config file is for command '" + it->second +
                        "', invoked as '" + command + "'");
    }
    merged.erase(it);
  }
  for (const auto& [k, v] : merged) {
    const bool known = std::any_of(schema.begin(), schema.end(),
                                   [&](const FieldSpec& f) { return f.key == k; });
    if (!known) throw ConfigError("unknown key '" + k + "' for command '" + command + "'");
  }
  RunConfig cfg;
  cfg.command = command;
  for (const FieldSpec& spec : schema) {
    const auto it = merged.find(spec.key);
    if (it == merged.end()) {
      if (spec.required) {
        throw ConfigError("command '" + command + "' requires key '" + spec.key + "'");
      }
      cfg.values[spec.key] = canonicalize(spec, spec.def);
    } else {
      cfg.values[spec.key] = canonicalize(spec, it->second);
    }
  }
  return cfg;
}

void write_manifest(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  os << "command=" << cfg.command << '\n';
  for (const auto& [k, v] : cfg.values) os << k << '=' << v << '\n';
}

namespace {

const std::string& lookup(const RunConfig& cfg, const std::string& key) {
  const auto it = cfg.values.find(key);
  if (it == cfg.values.end()) {
    throw std::logic_error("config key not in schema: " + key);
  }
  return it->second;
}

}  // namespace

std::int64_t RunConfig::get_i64(const std::string& key) const {
  return parse_i64(key, lookup(*this, key));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_u64(key, lookup(*this, key));
}

double RunConfig::get_f64(const std::string& key) const {
  return parse_f64(key, lookup(*this, key));
}

bool RunConfig::get_bool(const std::string& key) const {
  return parse_bool(key, lookup(*this, key));
}

const std::string& RunConfig::get_text(const std::string& key) const {
  return lookup(*this, key);
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const std::string f = trim(field);
    if (f.empty()) throw ConfigError(what + ": empty entry in '" + text + "'");
    out.push_back(static_cast<int>(parse_i64(what, f)));
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

Vector parse_real_list(const std::string& text, const std::string& what) {
  Vector out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const std::string f = trim(field);
    if (f.empty()) throw ConfigError(what + ": empty entry in '" + text + "'");
    out.push_back(parse_f64(what, f));
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

}  // namespace ebca::cli
