#pragma once

#include "somtp/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace somtp {

struct Task {
  State start;
  State goal;
  std::vector<Obstacle> obstacles;
  double target_radius = 0.3;
  int max_steps = 200;

  void validate() const;
  friend bool operator==(const Task&, const Task&) = default;
};

enum class Outcome { Success, Collision, Timeout };

std::string to_string(Outcome o);

struct EpisodeResult {
  Outcome outcome = Outcome::Timeout;
  int steps = 0;
  double final_distance = 0.0;  // Q-weighted pose error at the last state
  std::vector<State> states;     // world frame, states[0] is the start
  std::vector<Control> controls; // controls[i] moved states[i] to states[i + 1]
  std::string note;
};

using Planner = std::function<ControlSequence(const ProblemInstance&)>;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Expresses goal and obstacles in the frame attached to `pose`. Radii are kept.
ProblemInstance to_local_frame(const State& pose, const State& goal,
                               const std::vector<Obstacle>& obstacles);

/// Inverse of the transform above for a single pose or obstacle.
State to_world_frame(const State& pose, const State& local);
Obstacle to_world_frame(const State& pose, const Obstacle& local);

/// True when the robot disc touches any obstacle disc (no planning margin).
bool in_collision(const State& x, const std::vector<Obstacle>& obstacles, const PlannerConfig& cfg);

/// sqrt of the Q-weighted squared pose error, heading error wrapped.
double weighted_distance(const State& x, const State& goal, const PlannerConfig& cfg);

/// Receding-horizon loop in the world frame. Each step checks collision, then
/// success, then plans in the local frame and applies the first control. A
/// planner that throws or returns non-finite controls ends the episode as a
/// timeout with a note.
EpisodeResult run_task(const Task& task, const Planner& planner, const PlannerConfig& cfg);

struct Score {
  double success_rate = 0.0;  // percent
  double mean_distance = 0.0; // over successful episodes only, 0 if none
  int successes = 0;
  int total = 0;
};

/// Throws std::invalid_argument on an empty list.
Score score(const std::vector<EpisodeResult>& results);

/// Where task obstacles go. Map draws centres uniformly over the map square,
/// as the dataset does; Beside puts every obstacle next to the start-goal segment.
enum class ObstaclePlacement { Map, Beside };

std::string to_string(ObstaclePlacement p);
ObstaclePlacement parse_placement(std::string_view name);

struct TaskSuiteConfig {
  std::size_t n_tasks = 20;
  std::uint64_t seed = 0;
  int n_obs = 3;
  double goal_min = 1.5;     // start-goal distance range
  double goal_max = 2.8;
  double max_bearing = 0.7853981633974483;  // goal lies within this angle of the start heading
  double heading_spread = 0.0;  // goal heading is the bearing plus up to this much
  ObstaclePlacement placement = ObstaclePlacement::Map;
  double map_half_extent = 3.0;
  double r_lo = 0.0;
  double r_hi = 0.5;
  double gap_min = 0.0;      // Beside only: free space between the start-goal segment
  double gap_max = 0.4;      // and an obstacle's physical edge (obstacle plus robot radius)
  double clearance = 0.1;    // extra gap kept around start and goal
  double target_radius = 0.3;
  int max_steps = 200;
  int max_resample = 1000;

  void validate() const;
};

/// Start at the origin, goal ahead within `max_bearing`, obstacles placed per
/// `placement` while keeping start and goal clear.
std::vector<Task> generate_tasks(const TaskSuiteConfig& cfg, const PlannerConfig& planner);

void save_tasks(const std::vector<Task>& tasks, const std::filesystem::path& path);
std::vector<Task> load_tasks(const std::filesystem::path& path);

/// "step,X,Y,phi,v,q" rows; the last state has empty control fields.
void write_trace(const EpisodeResult& result, const std::filesystem::path& path);

}  // namespace somtp
