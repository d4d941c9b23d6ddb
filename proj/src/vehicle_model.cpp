#include "somtp/vehicle_model.hpp"

#include "somtp/detail/transcription.hpp"

#include <cmath>
#include <stdexcept>

namespace somtp {

namespace {

Eigen::Vector3d as_vec(const State& x) { return {x.x, x.y, x.phi}; }

void check_steering(double q) {
  if (!(std::abs(q) < M_PI / 2)) {
    throw std::domain_error("steering angle outside (-pi/2, pi/2); tan is unbounded");
  }
}

void check_horizon(const ControlSequence& u, const PlannerConfig& cfg) {
  if (u.horizon() != cfg.horizon) {
    throw std::invalid_argument("control sequence length does not match the horizon");
  }
}

}  // namespace

State step(const State& x, const Control& u, const PlannerConfig& cfg) {
  const Eigen::Vector3d next = detail::step<double>(as_vec(x), u.v, u.q, cfg);
  return {next(0), next(1), next(2)};
}

StepJacobians step_jacobians(const State& x, const Control& u, const PlannerConfig& cfg) {
  check_steering(u.q);
  StepJacobians out;
  detail::step_jacobians<double>(as_vec(x), u.v, u.q, cfg, out.A, out.B);
  return out;
}

Trajectory rollout(const ControlSequence& u, const PlannerConfig& cfg) {
  check_horizon(u, cfg);
  const auto xs = detail::rollout<double>(u.flat(), cfg);
  Trajectory traj;
  traj.states.reserve(xs.size());
  for (const auto& x : xs) traj.states.push_back({x(0), x(1), x(2)});
  return traj;
}

RolloutJacobian rollout_jacobian(const ControlSequence& u, const PlannerConfig& cfg) {
  check_horizon(u, cfg);
  for (int k = 0; k < u.horizon(); ++k) check_steering(u[k].q);
  const auto xs = detail::rollout<double>(u.flat(), cfg);
  return RolloutJacobian(detail::rollout_jacobian<double>(u.flat(), xs, cfg));
}

}  // namespace somtp
