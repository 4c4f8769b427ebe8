#pragma once

// Flat `name = value` configuration files.
//
// Layering is done by merging: later sources override earlier ones, and the
// command line is just another source. A FieldTable binds dotted keys to the
// members of the settings structs so that a full, resolved snapshot can be
// written back out and re-read bit-for-bit.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "areapo/dynamics.hpp"

namespace areapo {

struct ConfigEntry {
  std::string value;
  std::string source;
  int line = 0;
};

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source);
  /// Throws ConfigError naming `path` when it cannot be opened.
  static KeyValueConfig load_file(const std::string& path);

  void set(const std::string& key, const std::string& value, const std::string& source = "command line",
           int line = 0);
  /// Parses `key=value`; used for command-line overrides.
  void set_assignment(const std::string& assignment, const std::string& source = "command line");
  void merge(const KeyValueConfig& later);

  const ConfigEntry* find(const std::string& key) const;
  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, ConfigEntry> entries_;
};

std::string format_double(double v);
double parse_double(const std::string& text);

class FieldTable {
 public:
  using Ref = std::variant<double*, int*, std::int64_t*, std::uint64_t*, bool*, std::string*, Eigen::Vector4d*,
                           std::vector<double>*, std::vector<int>*, std::vector<std::string>*, Actuation*>;

  template <typename T>
  FieldTable& add(std::string key, T& field) {
    fields_.push_back({std::move(key), Ref(&field)});
    return *this;
  }

  /// Assigns every bound key present in `cfg`. Unknown keys are an error unless `allow_unknown`.
  void apply(const KeyValueConfig& cfg, bool allow_unknown = false) const;
  void write(std::ostream& out) const;
  bool has(const std::string& key) const;

 private:
  struct Field {
    std::string key;
    Ref ref;
  };
  std::vector<Field> fields_;
};

/// Binds every ModelParams member under `prefix` (e.g. "model.").
void bind_model_params(FieldTable& table, ModelParams<double>& params, const std::string& prefix);

}  // namespace areapo
