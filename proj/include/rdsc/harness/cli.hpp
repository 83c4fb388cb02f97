#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdsc/common/error.hpp"

namespace rdsc {

inline constexpr const char* kOutputDirEnv = "RDSC_OUTPUT_DIR";

/// Output directory: explicit value, else $RDSC_OUTPUT_DIR, else "results".
inline std::string default_output_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "results";
}

/// "0.0157", "4/255" or "4/255.0" -> double.
inline double parse_level(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto slash = s.find('/');
    if (slash == std::string::npos) {
      const double v = std::stod(s, &used);
      if (used != s.size()) throw ArgumentError("");
      return v;
    }
    const std::string a = s.substr(0, slash), b = s.substr(slash + 1);
    const double num = std::stod(a, &used);
    if (used != a.size()) throw ArgumentError("");
    const double den = std::stod(b, &used);
    if (used != b.size() || den == 0.0) throw ArgumentError("");
    return num / den;
  } catch (const std::exception&) {
    throw ArgumentError("cannot parse '" + s + "' as a number or fraction");
  }
}

inline nlohmann::ordered_json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config " + path.string());
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
}

/// Overlays `file` onto `flags` in place. File values win; every key set on
/// both sides with different values yields a warning naming the key.
inline std::vector<std::string> merge_config(nlohmann::ordered_json& flags, const nlohmann::ordered_json& file,
                                             const std::string& prefix = "") {
  if (!file.is_object()) throw ArgumentError("config: top level must be an object");
  std::vector<std::string> warnings;
  for (auto it = file.begin(); it != file.end(); ++it) {
    const std::string key = prefix + it.key();
    if (flags.contains(it.key()) && flags[it.key()].is_object() && it.value().is_object()) {
      auto sub = merge_config(flags[it.key()], it.value(), key + ".");
      warnings.insert(warnings.end(), sub.begin(), sub.end());
      continue;
    }
    if (flags.contains(it.key()) && flags[it.key()] != it.value())
      warnings.push_back("config file overrides command-line value for '" + key + "': " + flags[it.key()].dump() + " -> " +
                         it.value().dump());
    flags[it.key()] = it.value();
  }
  return warnings;
}

}  // namespace rdsc
