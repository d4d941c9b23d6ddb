#include "somtp/cbf_constraints.hpp"

#include "somtp/detail/transcription.hpp"
#include "somtp/vehicle_model.hpp"

#include <algorithm>

namespace somtp {

double h_value(const State& x, const Obstacle& o, const PlannerConfig& cfg) {
  const double dx = x.x - o.x;
  const double dy = x.y - o.y;
  const double rad = detail::inflated_radius(o, cfg);
  return dx * dx + dy * dy - rad * rad;
}

double cbf_residual(const State& x_k, const State& x_next, const Obstacle& o,
                    const PlannerConfig& cfg) {
  const double h_now = h_value(x_k, o, cfg);
  return -(h_value(x_next, o, cfg) - h_now) - cfg.gamma_cbf * h_now;
}

ResidualMatrix all_residuals(const ControlSequence& u, std::span<const Obstacle> obstacles,
                             const PlannerConfig& cfg) {
  const Trajectory traj = rollout(u, cfg);
  const int n = u.horizon();
  const int m = static_cast<int>(obstacles.size());
  ResidualMatrix rm(n, m);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < m; ++j)
      rm(k, j) = cbf_residual(traj.states[k], traj.states[k + 1], obstacles[j], cfg);
  return rm;
}

Mat residual_gradients(const ControlSequence& u, std::span<const Obstacle> obstacles,
                       const PlannerConfig& cfg) {
  // rollout_jacobian validates length and steering range.
  const RolloutJacobian J = rollout_jacobian(u, cfg);
  const auto xs = detail::rollout<double>(u.flat(), cfg);
  std::vector<Mat> rows;
  rows.reserve(xs.size());
  for (int k = 0; k <= u.horizon(); ++k) rows.push_back(J.row(k));
  return detail::residual_gradients<double>(xs, rows, obstacles, cfg);
}

ViolationStats violation_stats(const ResidualMatrix& rm) {
  ViolationStats s;
  for (Eigen::Index j = 0; j < rm.cols(); ++j) {
    for (Eigen::Index i = 0; i < rm.rows(); ++i) {
      const double v = rm(i, j);
      if (v > 0.0) {
        s.sum += v;
        s.max = std::max(s.max, v);
      }
    }
  }
  return s;
}

Vec flatten(const ResidualMatrix& rm) {
  Vec flat(rm.size());
  for (Eigen::Index k = 0; k < rm.rows(); ++k)
    for (Eigen::Index j = 0; j < rm.cols(); ++j) flat[k * rm.cols() + j] = rm(k, j);
  return flat;
}

}  // namespace somtp
