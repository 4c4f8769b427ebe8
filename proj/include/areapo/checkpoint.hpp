#pragma once

// Versioned little-endian binary checkpoints. Optional sections (critic,
// optimizer state) are flagged in the header so that a policy-only file can
// be shipped for evaluation. save(load(bytes)) reproduces `bytes` exactly.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "areapo/environment.hpp"
#include "areapo/nn.hpp"

namespace areapo {

/// Incremental gain and entropy-gain estimates.
struct GainEstimates {
  double rho = 0.0;
  double rho_entropy = 0.0;

  friend bool operator==(const GainEstimates&, const GainEstimates&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Actuation task = Actuation::Pendubot;
  std::int64_t iteration = 0;
  std::int64_t frames = 0;
  nn::GaussianPolicy policy;
  std::optional<nn::Critic> critic;
  std::optional<nn::OptimizerState> optimizer;
  RunningStats obs_stats;
  GainEstimates gains;

  /// Same checkpoint without critic and optimizer state.
  Checkpoint policy_only() const;
};

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws CheckpointError on bad magic, unknown version, truncation or inconsistent shapes.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace areapo
