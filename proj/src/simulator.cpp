#include "somtp/simulator.hpp"

#include "somtp/error.hpp"
#include "somtp/io.hpp"
#include "somtp/vehicle_model.hpp"

#include "json.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace somtp {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "somtp-tasks";
constexpr int kVersion = 1;

bool reached(const State& x, const Task& task) {
  return std::hypot(x.x - task.goal.x, x.y - task.goal.y) <= task.target_radius;
}

bool all_finite(const ControlSequence& u) { return u.flat().allFinite(); }

}  // namespace

void Task::validate() const {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (!(target_radius > 0.0)) throw std::invalid_argument("target_radius must be positive");
  for (const Obstacle& o : obstacles)
    if (!(o.r >= 0.0)) throw std::invalid_argument("obstacle radius must be nonnegative");
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Collision: return "collision";
    case Outcome::Timeout: return "timeout";
  }
  return "unknown";
}

double wrap_angle(double a) {
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

ProblemInstance to_local_frame(const State& pose, const State& goal,
                               const std::vector<Obstacle>& obstacles) {
  const double c = std::cos(pose.phi);
  const double s = std::sin(pose.phi);
  auto local = [&](double x, double y) {
    const double dx = x - pose.x;
    const double dy = y - pose.y;
    return std::pair{c * dx + s * dy, -s * dx + c * dy};
  };
  ProblemInstance inst;
  const auto [gx, gy] = local(goal.x, goal.y);
  inst.goal = {gx, gy, wrap_angle(goal.phi - pose.phi)};
  inst.obstacles.reserve(obstacles.size());
  for (const Obstacle& o : obstacles) {
    const auto [ox, oy] = local(o.x, o.y);
    inst.obstacles.push_back({ox, oy, o.r});
  }
  return inst;
}

State to_world_frame(const State& pose, const State& local) {
  const double c = std::cos(pose.phi);
  const double s = std::sin(pose.phi);
  return {pose.x + c * local.x - s * local.y, pose.y + s * local.x + c * local.y, pose.phi + local.phi};
}

Obstacle to_world_frame(const State& pose, const Obstacle& local) {
  const State p = to_world_frame(pose, State{local.x, local.y, 0.0});
  return {p.x, p.y, local.r};
}

bool in_collision(const State& x, const std::vector<Obstacle>& obstacles, const PlannerConfig& cfg) {
  for (const Obstacle& o : obstacles) {
    const double reach = o.r + cfg.robot_radius;
    const double dx = x.x - o.x;
    const double dy = x.y - o.y;
    if (dx * dx + dy * dy - reach * reach <= 0.0) return true;
  }
  return false;
}

double weighted_distance(const State& x, const State& goal, const PlannerConfig& cfg) {
  const double ex = x.x - goal.x;
  const double ey = x.y - goal.y;
  const double ephi = wrap_angle(x.phi - goal.phi);
  return std::sqrt(cfg.q_weights[0] * ex * ex + cfg.q_weights[1] * ey * ey + cfg.q_weights[2] * ephi * ephi);
}

EpisodeResult run_task(const Task& task, const Planner& planner, const PlannerConfig& cfg) {
  task.validate();
  cfg.validate();
  EpisodeResult res;
  State x = task.start;
  res.states.push_back(x);

  for (int t = 0;; ++t) {
    res.steps = t;
    res.final_distance = weighted_distance(x, task.goal, cfg);
    if (in_collision(x, task.obstacles, cfg)) {
      res.outcome = Outcome::Collision;
      return res;
    }
    if (reached(x, task)) {
      res.outcome = Outcome::Success;
      return res;
    }
    if (t >= task.max_steps) {
      res.outcome = Outcome::Timeout;
      return res;
    }

    ControlSequence plan;
    try {
      plan = planner(to_local_frame(x, task.goal, task.obstacles));
    } catch (const std::exception& e) {
      res.outcome = Outcome::Timeout;
      res.note = std::string("planner failed: ") + e.what();
      return res;
    }
    if (plan.horizon() < 1 || !all_finite(plan)) {
      res.outcome = Outcome::Timeout;
      res.note = "planner returned no usable control";
      return res;
    }
    const Control u = plan[0];
    x = step(x, u, cfg);
    res.controls.push_back(u);
    res.states.push_back(x);
  }
}

Score score(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw std::invalid_argument("cannot score an empty result list");
  Score s;
  s.total = static_cast<int>(results.size());
  double dist = 0.0;
  for (const EpisodeResult& r : results) {
    if (r.outcome != Outcome::Success) continue;
    ++s.successes;
    dist += r.final_distance;
  }
  s.success_rate = 100.0 * s.successes / s.total;
  s.mean_distance = s.successes > 0 ? dist / s.successes : 0.0;
  return s;
}

std::string to_string(ObstaclePlacement p) { return p == ObstaclePlacement::Map ? "map" : "beside"; }

ObstaclePlacement parse_placement(std::string_view name) {
  if (name == "map") return ObstaclePlacement::Map;
  if (name == "beside") return ObstaclePlacement::Beside;
  throw std::invalid_argument("unknown obstacle placement '" + std::string(name) + "' (map|beside)");
}

void TaskSuiteConfig::validate() const {
  if (n_obs < 0) throw std::invalid_argument("n_obs must be nonnegative");
  if (!(goal_min > 0.0 && goal_min <= goal_max)) throw std::invalid_argument("goal distance range is invalid");
  if (!(r_lo >= 0.0 && r_lo <= r_hi)) throw std::invalid_argument("radius range is invalid");
  if (!(map_half_extent > 0.0)) throw std::invalid_argument("map_half_extent must be positive");
  if (!(gap_min >= 0.0 && gap_min <= gap_max) || !(clearance >= 0.0))
    throw std::invalid_argument("gaps must satisfy 0 <= gap_min <= gap_max and clearance >= 0");
  if (!(target_radius > 0.0) || max_steps < 1) throw std::invalid_argument("invalid episode limits");
  if (max_resample < 1) throw std::invalid_argument("max_resample must be >= 1");
}

std::vector<Task> generate_tasks(const TaskSuiteConfig& cfg, const PlannerConfig& planner) {
  cfg.validate();
  planner.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double keep_out = planner.robot_radius + planner.expansion + cfg.clearance;

  std::vector<Task> tasks;
  tasks.reserve(cfg.n_tasks);
  for (std::size_t i = 0; i < cfg.n_tasks; ++i) {
    Task task;
    task.target_radius = cfg.target_radius;
    task.max_steps = cfg.max_steps;
    const double dist = uniform(cfg.goal_min, cfg.goal_max);
    const double bearing = uniform(-cfg.max_bearing, cfg.max_bearing);
    task.goal = {dist * std::cos(bearing), dist * std::sin(bearing),
                 wrap_angle(bearing + uniform(-cfg.heading_spread, cfg.heading_spread))};

    for (int j = 0; j < cfg.n_obs; ++j) {
      bool placed = false;
      for (int attempt = 0; attempt < cfg.max_resample && !placed; ++attempt) {
        const double r = uniform(cfg.r_lo, cfg.r_hi);
        double ox = 0.0;
        double oy = 0.0;
        if (cfg.placement == ObstaclePlacement::Map) {
          ox = uniform(-cfg.map_half_extent, cfg.map_half_extent);
          oy = uniform(-cfg.map_half_extent, cfg.map_half_extent);
        } else {
          const double along = uniform(0.25, 0.75);
          const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
          const double offset = side * (r + planner.robot_radius + uniform(cfg.gap_min, cfg.gap_max));
          ox = along * task.goal.x - offset * std::sin(bearing);
          oy = along * task.goal.y + offset * std::cos(bearing);
        }
        const double reach = r + keep_out;
        const bool start_clear = ox * ox + oy * oy > reach * reach;
        const bool goal_clear = std::hypot(ox - task.goal.x, oy - task.goal.y) > reach;
        if (start_clear && goal_clear) {
          task.obstacles.push_back({ox, oy, r});
          placed = true;
        }
      }
      if (!placed) throw std::runtime_error("could not place an obstacle clear of start and goal");
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

void save_tasks(const std::vector<Task>& tasks, const std::filesystem::path& path) {
  std::ostringstream out;
  out << json{{"format", kFormat}, {"version", kVersion}, {"count", tasks.size()}}.dump() << '\n';
  for (const Task& t : tasks) {
    json obs = json::array();
    for (const Obstacle& o : t.obstacles) obs.push_back({o.x, o.y, o.r});
    out << json{{"start", {t.start.x, t.start.y, t.start.phi}},
                {"goal", {t.goal.x, t.goal.y, t.goal.phi}},
                {"obstacles", obs},
                {"target_radius", t.target_radius},
                {"max_steps", t.max_steps}}
               .dump()
        << '\n';
  }
  io::write_atomic(path, out.str());
}

std::vector<Task> load_tasks(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty task file: " + path.string());
  std::vector<Task> tasks;
  std::size_t count = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format") != kFormat || header.at("version") != kVersion) {
      throw FormatError("not a version-1 task file: " + path.string());
    }
    count = header.at("count").get<std::size_t>();
    auto pose = [](const json& j) {
      if (j.size() != 3) throw FormatError("pose must have three entries");
      return State{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    };
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      Task t;
      t.start = pose(j.at("start"));
      t.goal = pose(j.at("goal"));
      for (const auto& o : j.at("obstacles")) {
        if (o.size() != 3) throw FormatError("obstacle must have three entries");
        t.obstacles.push_back({o[0].get<double>(), o[1].get<double>(), o[2].get<double>()});
      }
      t.target_radius = j.at("target_radius").get<double>();
      t.max_steps = j.at("max_steps").get<int>();
      t.validate();
      tasks.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed task file " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError("invalid task in " + path.string() + ": " + e.what());
  }
  if (tasks.size() != count) throw FormatError("task file is truncated: " + path.string());
  return tasks;
}

void write_trace(const EpisodeResult& result, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# outcome=" << to_string(result.outcome) << " steps=" << result.steps << '\n';
  out << "step,X,Y,phi,v,q\n";
  for (std::size_t i = 0; i < result.states.size(); ++i) {
    const State& s = result.states[i];
    out << i << ',' << io::format_double(s.x) << ',' << io::format_double(s.y) << ','
        << io::format_double(s.phi) << ',';
    if (i < result.controls.size()) {
      out << io::format_double(result.controls[i].v) << ',' << io::format_double(result.controls[i].q);
    } else {
      out << ',';
    }
    out << '\n';
  }
  io::write_atomic(path, out.str());
}

}  // namespace somtp
