#include "doctest.h"

#include "somtp/error.hpp"
#include "somtp/evaluation.hpp"
#include "somtp/simulator.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace somtp;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "somtp_test_simulator";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Planner constant_planner(Control c, int horizon) {
  return [c, horizon](const ProblemInstance&) {
    ControlSequence u(horizon);
    for (int k = 0; k < horizon; ++k) u.set(k, c);
    return u;
  };
}

bool close(const State& a, const State& b, double tol) {
  return std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol && std::abs(wrap_angle(a.phi - b.phi)) <= tol;
}

}  // namespace

TEST_CASE("angle wrapping") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("local frame") {
  const ProblemInstance same = to_local_frame({0, 0, 0}, {1, 2, 0.3}, {{1, -1, 0.2}});
  CHECK(same.goal == State{1, 2, 0.3});
  CHECK(same.obstacles[0] == Obstacle{1, -1, 0.2});

  CHECK(to_local_frame({1, 0, 0}, {2, 0, 0}, {}).goal == State{1, 0, 0});

  const ProblemInstance turned = to_local_frame({0, 0, std::numbers::pi / 2}, {0, 0, 0}, {{0, 1, 0.4}});
  CHECK(turned.obstacles[0].x == doctest::Approx(1.0));
  CHECK(turned.obstacles[0].y == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(turned.obstacles[0].r == 0.4);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(-5, 5);
  std::uniform_real_distribution<double> ang(-3.1, 3.1);
  for (int trial = 0; trial < 200; ++trial) {
    const State pose{pos(rng), pos(rng), ang(rng)};
    const State goal{pos(rng), pos(rng), ang(rng)};
    const Obstacle o{pos(rng), pos(rng), 0.3};
    const ProblemInstance local = to_local_frame(pose, goal, {o});
    CHECK(close(to_world_frame(pose, local.goal), goal, 1e-12));
    const Obstacle back = to_world_frame(pose, local.obstacles[0]);
    CHECK(std::abs(back.x - o.x) <= 1e-12);
    CHECK(std::abs(back.y - o.y) <= 1e-12);
    CHECK(back.r == o.r);
  }
}

TEST_CASE("collision and distance") {
  const PlannerConfig cfg;
  CHECK(in_collision({0, 0, 0}, {{0.5, 0, 0.2}}, cfg));
  CHECK(in_collision({0, 0, 0}, {{0.5, 0, 0.2 - 1e-12}}, cfg) == false);
  // The planning margin is not a physical extent.
  CHECK_FALSE(in_collision({0, 0, 0}, {{0.55, 0, 0.2}}, cfg));
  CHECK(weighted_distance({1, 2, 0.3}, {1, 2, 0.3}, cfg) == 0.0);
  CHECK(weighted_distance({0, 0, 0}, {1, 0, 0}, cfg) == doctest::Approx(std::sqrt(2.0)));
  CHECK(weighted_distance({0, 0, 3.1}, {0, 0, -3.1}, cfg) == doctest::Approx(2 * std::numbers::pi - 6.2));
}

TEST_CASE("episode outcomes") {
  PlannerConfig cfg = somtp::testing::small_config(5);
  Task at_goal{{1, 1, 0}, {1.1, 1, 0}, {}, 0.3, 50};
  const EpisodeResult done = run_task(at_goal, constant_planner({1, 0}, 5), cfg);
  CHECK(done.outcome == Outcome::Success);
  CHECK(done.steps == 0);
  CHECK(done.states.size() == 1);

  Task touching{{0, 0, 0}, {2, 0, 0}, {{0.3, 0, 0.1}}, 0.3, 50};
  const EpisodeResult hit = run_task(touching, constant_planner({1, 0}, 5), cfg);
  CHECK(hit.outcome == Outcome::Collision);
  CHECK(hit.steps == 0);

  Task ahead{{0, 0, 0}, {1.05, 0, 0}, {}, 0.3, 50};
  const EpisodeResult drive = run_task(ahead, constant_planner({1, 0}, 5), cfg);
  CHECK(drive.outcome == Outcome::Success);
  CHECK(drive.steps == 8);
  CHECK(drive.controls.size() == 8);
  CHECK(drive.states.back().x == doctest::Approx(0.8));
  CHECK(drive.final_distance == doctest::Approx(std::sqrt(2.0) * 0.25));

  const EpisodeResult idle = run_task(ahead, constant_planner({0, 0}, 5), cfg);
  CHECK(idle.outcome == Outcome::Timeout);
  CHECK(idle.steps == 50);

  const EpisodeResult broken = run_task(ahead, [](const ProblemInstance&) -> ControlSequence {
    throw std::runtime_error("boom");
  }, cfg);
  CHECK(broken.outcome == Outcome::Timeout);
  CHECK(broken.note.find("boom") != std::string::npos);

  const EpisodeResult nan = run_task(ahead, constant_planner({std::nan(""), 0}, 5), cfg);
  CHECK(nan.outcome == Outcome::Timeout);
  CHECK_FALSE(nan.note.empty());

  Task bad = ahead;
  bad.max_steps = 0;
  CHECK_THROWS_AS(run_task(bad, constant_planner({1, 0}, 5), cfg), std::invalid_argument);
}

TEST_CASE("the solver planner reaches obstacle-free goals") {
  const PlannerConfig cfg = somtp::testing::small_config(10);
  SolverConfig scfg;
  scfg.restarts = 1;
  const Planner planner = solver_planner(cfg, scfg);
  // Goals ahead with the heading along the bearing; sideways goals can stall
  // a receding-horizon planner of a car-like robot.
  for (const State goal : {State{1.5, 0, 0}, State{1.2, 0.8, std::atan2(0.8, 1.2)}, State{1.0, -1.0, -0.7853981633974483}}) {
    const EpisodeResult r = run_task({{0, 0, 0}, goal, {}, 0.3, 200}, planner, cfg);
    CHECK(r.outcome == Outcome::Success);
  }
}

TEST_CASE("shrinking obstacles never creates a collision") {
  const PlannerConfig cfg = somtp::testing::small_config(5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-2, 2);
  std::uniform_real_distribution<double> speed(-1, 1);
  std::uniform_real_distribution<double> steer(-0.6, 0.6);
  std::uniform_real_distribution<double> shrink(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Task t{{0, 0, 0}, {pos(rng), pos(rng), 0}, {}, 0.3, 40};
    for (int j = 0; j < 3; ++j) t.obstacles.push_back({pos(rng), pos(rng), 0.4 * shrink(rng)});
    const Planner p = constant_planner({speed(rng), steer(rng)}, 5);
    const EpisodeResult base = run_task(t, p, cfg);
    if (base.outcome == Outcome::Collision) continue;
    ++checked;
    Task smaller = t;
    for (Obstacle& o : smaller.obstacles) o.r *= shrink(rng);
    const EpisodeResult r = run_task(smaller, p, cfg);
    CHECK(r.outcome != Outcome::Collision);
    CHECK(r.states == base.states);
  }
  CHECK(checked > 50);
}

TEST_CASE("scoring") {
  CHECK_THROWS_AS(score({}), std::invalid_argument);
  EpisodeResult win{Outcome::Success, 5, 0.0, {}, {}, ""};
  EpisodeResult loss{Outcome::Collision, 3, 2.0, {}, {}, ""};
  const Score perfect = score({win, win, win});
  CHECK(perfect.success_rate == 100.0);
  CHECK(perfect.mean_distance == 0.0);

  std::vector<EpisodeResult> mix(8, win);
  mix[0].final_distance = 0.2;
  mix[1].final_distance = 0.6;
  mix.push_back(loss);
  mix.push_back(EpisodeResult{Outcome::Timeout, 200, 1.0, {}, {}, ""});
  const Score s = score(mix);
  CHECK(s.success_rate == doctest::Approx(80.0));
  CHECK(s.successes == 8);
  CHECK(s.total == 10);
  CHECK(s.mean_distance == doctest::Approx(0.1));

  const Score none = score({loss});
  CHECK(none.success_rate == 0.0);
  CHECK(none.mean_distance == 0.0);
}

TEST_CASE("task suites") {
  const PlannerConfig cfg;
  TaskSuiteConfig tc;
  tc.seed = 4;
  const auto tasks = generate_tasks(tc, cfg);
  REQUIRE(tasks.size() == 20);
  CHECK(generate_tasks(tc, cfg) == tasks);
  for (const Task& t : tasks) {
    CHECK(t.start == State{0, 0, 0});
    const double dist = std::hypot(t.goal.x, t.goal.y);
    CHECK(dist >= tc.goal_min);
    CHECK(dist <= tc.goal_max);
    CHECK(t.obstacles.size() == 3);
    for (const Obstacle& o : t.obstacles) {
      CHECK(std::abs(o.x) <= tc.map_half_extent);
      CHECK(std::abs(o.y) <= tc.map_half_extent);
    }
    CHECK_FALSE(in_collision(t.start, t.obstacles, cfg));
    CHECK_FALSE(in_collision(t.goal, t.obstacles, cfg));
  }

  TaskSuiteConfig beside = tc;
  beside.placement = ObstaclePlacement::Beside;
  for (const Task& t : generate_tasks(beside, cfg)) {
    // Every centre sits within a radius plus robot and widest gap of the segment.
    const double len = std::hypot(t.goal.x, t.goal.y);
    for (const Obstacle& o : t.obstacles) {
      const double side = std::abs(t.goal.x * o.y - t.goal.y * o.x) / len;
      CHECK(side <= o.r + cfg.robot_radius + beside.gap_max + 1e-12);
      CHECK(side >= o.r + cfg.robot_radius - 1e-12);
    }
    CHECK_FALSE(in_collision(t.goal, t.obstacles, cfg));
  }
  CHECK(parse_placement(to_string(ObstaclePlacement::Beside)) == ObstaclePlacement::Beside);
  CHECK_THROWS_AS(parse_placement("ring"), std::invalid_argument);
  tc.map_half_extent = 0.0;
  CHECK_THROWS_AS(generate_tasks(tc, cfg), std::invalid_argument);
  tc.map_half_extent = 3.0;

  tc.n_obs = 0;
  for (const Task& t : generate_tasks(tc, cfg)) CHECK(t.obstacles.empty());

  const auto path = scratch("tasks.jsonl");
  save_tasks(tasks, path);
  CHECK(load_tasks(path) == tasks);
  const auto cut = scratch("cut.jsonl");
  std::filesystem::copy_file(path, cut, std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(cut, std::filesystem::file_size(path) - 25);
  CHECK_THROWS_AS(load_tasks(cut), FormatError);
}

TEST_CASE("trace export") {
  PlannerConfig cfg = somtp::testing::small_config(3);
  const EpisodeResult r = run_task({{0, 0, 0}, {0.5, 0, 0}, {}, 0.3, 10}, constant_planner({1, 0}, 3), cfg);
  const auto path = scratch("trace.csv");
  write_trace(r, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# outcome=success", 0) == 0);
  std::getline(in, line);
  CHECK(line == "step,X,Y,phi,v,q");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == static_cast<int>(r.states.size()));
}
