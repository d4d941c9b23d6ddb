#pragma once

#include "somtp/types.hpp"

namespace somtp {

/// Transcribed cost: Q-weighted goal error over x_1..x_N plus R-weighted effort.
double objective_value(const ControlSequence& u, const ProblemInstance& inst,
                       const PlannerConfig& cfg);

Vec objective_gradient(const ControlSequence& u, const ProblemInstance& inst,
                       const PlannerConfig& cfg);

}  // namespace somtp
