#include "somtp/objective.hpp"

#include "somtp/detail/transcription.hpp"
#include "somtp/vehicle_model.hpp"

#include <stdexcept>

namespace somtp {

double objective_value(const ControlSequence& u, const ProblemInstance& inst,
                       const PlannerConfig& cfg) {
  if (u.horizon() != cfg.horizon) {
    throw std::invalid_argument("control sequence length does not match the horizon");
  }
  const auto xs = detail::rollout<double>(u.flat(), cfg);
  return detail::objective<double>(u.flat(), xs, inst.goal, cfg);
}

Vec objective_gradient(const ControlSequence& u, const ProblemInstance& inst,
                       const PlannerConfig& cfg) {
  const RolloutJacobian J = rollout_jacobian(u, cfg);
  const auto xs = detail::rollout<double>(u.flat(), cfg);
  std::vector<Mat> rows;
  rows.reserve(xs.size());
  for (int k = 0; k <= u.horizon(); ++k) rows.push_back(J.row(k));
  return detail::objective_gradient<double>(u.flat(), xs, rows, inst.goal, cfg);
}

}  // namespace somtp
