#pragma once

// User-facing health checks: tabular oracle identities and fixtures,
// energy conservation of the plant, network gradient checks and reward values.

#include <iosfwd>
#include <string>
#include <vector>

namespace areapo {

struct SelftestCheck {
  std::string group;  // oracle, physics, gradient, reward
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SelftestOptions {
  /// Comma-separated group names; empty runs every group.
  std::string filter;
  /// Extra fixture files checked against their expected values (oracle group).
  std::vector<std::string> fixtures;
};

std::vector<std::string> selftest_groups();
std::vector<SelftestCheck> run_selftest(const SelftestOptions& options);
/// One line per check; returns true when every check passed.
bool print_selftest(const std::vector<SelftestCheck>& checks, std::ostream& out);

}  // namespace areapo
