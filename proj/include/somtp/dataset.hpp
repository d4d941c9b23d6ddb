#pragma once

#include "somtp/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace somtp {

struct DatasetConfig {
  std::size_t n_instances = 1000;
  std::uint64_t seed = 0;
  double map_half_extent = 3.0;   // obstacles live in [-h, h]^2 (6 m x 6 m map)
  double goal_half_extent = 3.0;  // goal positions in [-g, g]^2
  int n_obs = 3;
  double r_lo = 0.0;
  double r_hi = 0.5;
  std::array<double, 3> split_ratio{18.0, 1.0, 1.0};  // train / test / val weights
  double start_clearance = 0.4;  // robot radius + expansion; the start must be strictly safe
  int max_resample = 1000;

  void validate() const;
};

/// Uniform goals (heading in (-pi, pi]) and obstacles; obstacles that would
/// make the start pose unsafe are redrawn. Throws std::runtime_error if an
/// obstacle cannot be placed within `max_resample` draws.
std::vector<ProblemInstance> generate(const DatasetConfig& cfg);

struct DatasetSplit {
  std::vector<ProblemInstance> train;
  std::vector<ProblemInstance> test;
  std::vector<ProblemInstance> val;
};

DatasetSplit split(const std::vector<ProblemInstance>& instances,
                   const std::array<double, 3>& ratio, std::uint64_t seed);

/// JSON-lines file: one header record then one {goal, obstacles} record per
/// instance. `cfg` is echoed into the header when given.
void save_dataset(const std::vector<ProblemInstance>& instances, const std::filesystem::path& path,
                  const std::optional<DatasetConfig>& cfg = std::nullopt,
                  const std::string& split_name = "all");

std::vector<ProblemInstance> load_dataset(const std::filesystem::path& path);

}  // namespace somtp
