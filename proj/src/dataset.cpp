#include "somtp/dataset.hpp"

#include "somtp/error.hpp"
#include "somtp/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace somtp {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "somtp-dataset";
constexpr int kVersion = 1;

json config_json(const DatasetConfig& c) {
  return {{"n_instances", c.n_instances},   {"seed", c.seed},
          {"map_half_extent", c.map_half_extent}, {"goal_half_extent", c.goal_half_extent},
          {"n_obs", c.n_obs},               {"r_lo", c.r_lo},
          {"r_hi", c.r_hi},                 {"split_ratio", c.split_ratio},
          {"start_clearance", c.start_clearance}};
}

json instance_json(const ProblemInstance& inst) {
  json obs = json::array();
  for (const Obstacle& o : inst.obstacles) obs.push_back({o.x, o.y, o.r});
  return {{"goal", {inst.goal.x, inst.goal.y, inst.goal.phi}}, {"obstacles", obs}};
}

ProblemInstance instance_from_json(const json& j) {
  ProblemInstance inst;
  const auto& g = j.at("goal");
  if (g.size() != 3) throw FormatError("goal must have three entries");
  inst.goal = {g[0].get<double>(), g[1].get<double>(), g[2].get<double>()};
  for (const auto& o : j.at("obstacles")) {
    if (o.size() != 3) throw FormatError("obstacle must have three entries");
    inst.obstacles.push_back({o[0].get<double>(), o[1].get<double>(), o[2].get<double>()});
  }
  return inst;
}

}  // namespace

void DatasetConfig::validate() const {
  if (!(map_half_extent > 0.0) || !(goal_half_extent > 0.0))
    throw std::invalid_argument("map extents must be positive");
  if (n_obs < 0) throw std::invalid_argument("n_obs must be nonnegative");
  if (!(r_lo >= 0.0 && r_lo <= r_hi)) throw std::invalid_argument("radius range must satisfy 0 <= r_lo <= r_hi");
  for (double w : split_ratio)
    if (!(w >= 0.0)) throw std::invalid_argument("split weights must be nonnegative");
  if (!(split_ratio[0] + split_ratio[1] + split_ratio[2] > 0.0))
    throw std::invalid_argument("split weights must not all be zero");
  if (!(start_clearance >= 0.0)) throw std::invalid_argument("start clearance must be nonnegative");
  if (max_resample < 1) throw std::invalid_argument("max_resample must be >= 1");
}

std::vector<ProblemInstance> generate(const DatasetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<ProblemInstance> out;
  out.reserve(cfg.n_instances);
  for (std::size_t n = 0; n < cfg.n_instances; ++n) {
    ProblemInstance inst;
    inst.goal.x = uniform(-cfg.goal_half_extent, cfg.goal_half_extent);
    inst.goal.y = uniform(-cfg.goal_half_extent, cfg.goal_half_extent);
    // unit() is in [0, 1), so this lands in (-pi, pi].
    inst.goal.phi = M_PI - 2.0 * M_PI * unit(rng);
    for (int j = 0; j < cfg.n_obs; ++j) {
      Obstacle o;
      int tries = 0;
      while (true) {
        o.x = uniform(-cfg.map_half_extent, cfg.map_half_extent);
        o.y = uniform(-cfg.map_half_extent, cfg.map_half_extent);
        o.r = uniform(cfg.r_lo, cfg.r_hi);
        const double rad = o.r + cfg.start_clearance;
        if (o.x * o.x + o.y * o.y - rad * rad > 0.0) break;
        if (++tries >= cfg.max_resample) {
          throw std::runtime_error("could not place an obstacle clear of the start pose");
        }
      }
      inst.obstacles.push_back(o);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

DatasetSplit split(const std::vector<ProblemInstance>& instances,
                   const std::array<double, 3>& ratio, std::uint64_t seed) {
  const double total = ratio[0] + ratio[1] + ratio[2];
  if (!(total > 0.0) || ratio[0] < 0.0 || ratio[1] < 0.0 || ratio[2] < 0.0) {
    throw std::invalid_argument("invalid split ratio");
  }
  const std::size_t n = instances.size();
  const auto share = [&](double w) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * w / total + 0.5));
  };
  const std::size_t n_test = std::min(n, share(ratio[1]));
  const std::size_t n_val = std::min(n - n_test, share(ratio[2]));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    const ProblemInstance& inst = instances[order[i]];
    if (i < n_test) {
      out.test.push_back(inst);
    } else if (i < n_test + n_val) {
      out.val.push_back(inst);
    } else {
      out.train.push_back(inst);
    }
  }
  return out;
}

void save_dataset(const std::vector<ProblemInstance>& instances, const std::filesystem::path& path,
                  const std::optional<DatasetConfig>& cfg, const std::string& split_name) {
  json header = {{"format", kFormat}, {"version", kVersion}, {"count", instances.size()},
                 {"split", split_name}};
  if (cfg) header["config"] = config_json(*cfg);
  std::ostringstream out;
  out << header.dump() << '\n';
  for (const ProblemInstance& inst : instances) out << instance_json(inst).dump() << '\n';
  io::write_atomic(path, out.str());
}

std::vector<ProblemInstance> load_dataset(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty dataset file: " + path.string());
  std::vector<ProblemInstance> out;
  std::size_t count = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format") != kFormat) throw FormatError("not a dataset file: " + path.string());
    if (header.at("version").get<int>() != kVersion) {
      throw FormatError("unsupported dataset version in " + path.string());
    }
    count = header.at("count").get<std::size_t>();
    out.reserve(count);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      out.push_back(instance_from_json(json::parse(line)));
    }
  } catch (const json::exception& e) {
    throw FormatError("corrupt dataset " + path.string() + ": " + e.what());
  }
  if (out.size() != count) {
    throw FormatError("dataset " + path.string() + " holds " + std::to_string(out.size()) +
                      " records, header says " + std::to_string(count));
  }
  return out;
}

}  // namespace somtp
