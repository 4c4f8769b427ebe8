#include "areapo/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

#include "areapo/errors.hpp"

namespace areapo {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename Int>
Int parse_integer(const std::string& text) {
  Int v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw InvalidInput("expected an integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw InvalidInput("expected a boolean, got '" + text + "'");
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += fmt(items[i]);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvalidInput("cannot format number");
  return std::string(buf, ptr);
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  double v = 0;
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (ec != std::errc() || ptr != end || t.empty()) throw InvalidInput("expected a number, got '" + text + "'");
  return v;
}

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'name = value', got '" + line + "'", source, line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", source, line_no);
    cfg.set(key, value, source, line_no);
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value, const std::string& source, int line) {
  entries_[key] = ConfigEntry{value, source, line};
}

void KeyValueConfig::set_assignment(const std::string& assignment, const std::string& source) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'", source);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), source);
}

void KeyValueConfig::merge(const KeyValueConfig& later) {
  for (const auto& [k, e] : later.entries_) entries_[k] = e;
}

const ConfigEntry* KeyValueConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool FieldTable::has(const std::string& key) const {
  for (const auto& f : fields_)
    if (f.key == key) return true;
  return false;
}

void FieldTable::apply(const KeyValueConfig& cfg, bool allow_unknown) const {
  if (!allow_unknown) {
    for (const auto& [key, entry] : cfg.entries())
      if (!has(key)) throw ConfigError("unknown key '" + key + "'", entry.source, entry.line);
  }
  for (const auto& field : fields_) {
    const ConfigEntry* entry = cfg.find(field.key);
    if (!entry) continue;
    const std::string& v = entry->value;
    try {
      std::visit(
          [&](auto* ptr) {
            using T = std::remove_pointer_t<decltype(ptr)>;
            if constexpr (std::is_same_v<T, double>) {
              *ptr = parse_double(v);
            } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::int64_t> ||
                                 std::is_same_v<T, std::uint64_t>) {
              *ptr = parse_integer<T>(v);
            } else if constexpr (std::is_same_v<T, bool>) {
              *ptr = parse_bool(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
              *ptr = v;
            } else if constexpr (std::is_same_v<T, Eigen::Vector4d>) {
              const auto items = split_list(v);
              if (items.size() != 4) throw InvalidInput("expected 4 comma-separated numbers");
              for (int i = 0; i < 4; ++i) (*ptr)(i) = parse_double(items[i]);
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
              ptr->clear();
              for (const auto& item : split_list(v)) ptr->push_back(parse_double(item));
            } else if constexpr (std::is_same_v<T, std::vector<int>>) {
              ptr->clear();
              for (const auto& item : split_list(v)) ptr->push_back(parse_integer<int>(item));
            } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
              *ptr = split_list(v);
            } else if constexpr (std::is_same_v<T, Actuation>) {
              *ptr = parse_actuation(v);
            }
          },
          field.ref);
    } catch (const InvalidInput& e) {
      throw ConfigError("key '" + field.key + "': " + e.what(), entry->source, entry->line);
    }
  }
}

void FieldTable::write(std::ostream& out) const {
  for (const auto& field : fields_) {
    out << field.key << " = ";
    std::visit(
        [&](auto* ptr) {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, double>) {
            out << format_double(*ptr);
          } else if constexpr (std::is_same_v<T, bool>) {
            out << (*ptr ? "true" : "false");
          } else if constexpr (std::is_same_v<T, std::string>) {
            out << *ptr;
          } else if constexpr (std::is_same_v<T, Eigen::Vector4d>) {
            out << format_double((*ptr)(0)) << ", " << format_double((*ptr)(1)) << ", "
                << format_double((*ptr)(2)) << ", " << format_double((*ptr)(3));
          } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            out << join(*ptr, [](double d) { return format_double(d); });
          } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            out << join(*ptr, [](int i) { return std::to_string(i); });
          } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            out << join(*ptr, [](const std::string& s) { return s; });
          } else if constexpr (std::is_same_v<T, Actuation>) {
            out << to_string(*ptr);
          } else {
            out << *ptr;
          }
        },
        field.ref);
    out << '\n';
  }
}

void bind_model_params(FieldTable& t, ModelParams<double>& p, const std::string& prefix) {
  t.add(prefix + "mass_1", p.mass_1)
      .add(prefix + "mass_2", p.mass_2)
      .add(prefix + "length_1", p.length_1)
      .add(prefix + "length_2", p.length_2)
      .add(prefix + "com_1", p.com_1)
      .add(prefix + "com_2", p.com_2)
      .add(prefix + "inertia_1", p.inertia_1)
      .add(prefix + "inertia_2", p.inertia_2)
      .add(prefix + "gravity", p.gravity)
      .add(prefix + "damping_1", p.damping_1)
      .add(prefix + "damping_2", p.damping_2)
      .add(prefix + "coulomb_1", p.coulomb_1)
      .add(prefix + "coulomb_2", p.coulomb_2)
      .add(prefix + "torque_limit", p.torque_limit)
      .add(prefix + "motor_inertia", p.motor_inertia);
}

}  // namespace areapo
