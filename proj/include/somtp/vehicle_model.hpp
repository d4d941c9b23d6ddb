#pragma once

#include "somtp/types.hpp"

#include <Eigen/Dense>

#include <vector>

namespace somtp {

/// One step of the discrete bicycle model.
State step(const State& x, const Control& u, const PlannerConfig& cfg);

struct StepJacobians {
  Eigen::Matrix3d A;               // d f / d x
  Eigen::Matrix<double, 3, 2> B;   // d f / d u
};

/// Analytic partials of `step`. Throws std::domain_error for |q| >= pi/2.
StepJacobians step_jacobians(const State& x, const Control& u, const PlannerConfig& cfg);

/// Rollout from the zero local-frame pose; returns N+1 states.
Trajectory rollout(const ControlSequence& u, const PlannerConfig& cfg);

/// Sensitivities dx_k/du_i of a rollout.
///
/// Stored as one dense 3 x 2N block row per state. `block(k, i)` is the 3 x 2
/// sensitivity of x_k to u_i and vanishes for i >= k.
class RolloutJacobian {
 public:
  RolloutJacobian() = default;
  explicit RolloutJacobian(std::vector<Mat> rows) : rows_(std::move(rows)) {}

  int horizon() const { return static_cast<int>(rows_.size()) - 1; }
  Eigen::Matrix<double, 3, 2> block(int k, int i) const {
    return rows_[k].block<3, 2>(0, 2 * i);
  }
  const Mat& row(int k) const { return rows_[k]; }

 private:
  std::vector<Mat> rows_;
};

RolloutJacobian rollout_jacobian(const ControlSequence& u, const PlannerConfig& cfg);

}  // namespace somtp
