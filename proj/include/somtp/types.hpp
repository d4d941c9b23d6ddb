#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace somtp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Robot pose in the planning frame. Heading is never wrapped.
struct State {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;

  friend bool operator==(const State&, const State&) = default;
};

/// Longitudinal speed (m/s) and steering angle (rad).
struct Control {
  double v = 0.0;
  double q = 0.0;

  friend bool operator==(const Control&, const Control&) = default;
};

/// Circular obstacle; `r` is the radius of the smallest circumscribed circle.
struct Obstacle {
  double x = 0.0;
  double y = 0.0;
  double r = 0.0;

  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

/// Goal pose and obstacles in the local frame; the start is implicitly (0,0,0).
struct ProblemInstance {
  State goal;
  std::vector<Obstacle> obstacles;

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

struct PlannerConfig {
  int horizon = 20;
  double dt = 0.1;
  double wheelbase = 0.5;
  std::array<double, 3> q_weights{2.0, 2.0, 1.0};
  std::array<double, 2> r_weights{1.0, 1.5};
  double gamma_cbf = 0.5;
  double robot_radius = 0.3;
  double expansion = 0.1;
  Control u_min{-1.0, -0.6};
  Control u_max{1.0, 0.6};

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  /// Number of decision variables (2 per step).
  int dim() const { return 2 * horizon; }

  /// Stable FNV-1a digest of every field, used to tag checkpoints.
  std::uint64_t hash() const;

  /// Lower / upper bound vectors over the flattened control sequence.
  Vec lower_bounds() const;
  Vec upper_bounds() const;

  /// Diagonal of the control weight repeated over the horizon.
  Vec control_weight_diagonal() const;
};

/// Control sequence u_0..u_{N-1}, stored flat as [v_0, q_0, v_1, q_1, ...].
class ControlSequence {
 public:
  ControlSequence() = default;
  explicit ControlSequence(int horizon) : flat_(Vec::Zero(2 * horizon)) {}
  explicit ControlSequence(Vec flat);

  int horizon() const { return static_cast<int>(flat_.size() / 2); }

  Control operator[](int k) const { return {flat_[2 * k], flat_[2 * k + 1]}; }
  void set(int k, Control c) {
    flat_[2 * k] = c.v;
    flat_[2 * k + 1] = c.q;
  }

  const Vec& flat() const { return flat_; }
  Vec& flat() { return flat_; }

  bool within(const PlannerConfig& cfg) const;

  friend bool operator==(const ControlSequence& a, const ControlSequence& b) {
    return a.flat_.size() == b.flat_.size() && a.flat_ == b.flat_;
  }

 private:
  Vec flat_;
};

/// States x_0..x_N of a single-shooting rollout.
struct Trajectory {
  std::vector<State> states;
};

}  // namespace somtp
