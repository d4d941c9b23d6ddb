#pragma once

#include "somtp/types.hpp"

#include <span>

namespace somtp {

/// CBF residuals, shape N x n_obs. Entry (k, j) <= 0 means the discrete-time
/// barrier condition between x_k and x_{k+1} holds for obstacle j.
using ResidualMatrix = Mat;

/// Barrier value: squared distance minus squared inflated radius.
double h_value(const State& x, const Obstacle& o, const PlannerConfig& cfg);

/// -(H(x_next) - H(x_k)) - gamma * H(x_k).
double cbf_residual(const State& x_k, const State& x_next, const Obstacle& o,
                    const PlannerConfig& cfg);

ResidualMatrix all_residuals(const ControlSequence& u, std::span<const Obstacle> obstacles,
                             const PlannerConfig& cfg);

/// Gradient of every residual w.r.t. the flat control vector.
/// Row k * n_obs + j belongs to residual (k, j); shape (N * n_obs) x 2N.
Mat residual_gradients(const ControlSequence& u, std::span<const Obstacle> obstacles,
                       const PlannerConfig& cfg);

struct ViolationStats {
  double sum = 0.0;  // sum of positive parts
  double max = 0.0;  // largest positive part, 0 when feasible
};

ViolationStats violation_stats(const ResidualMatrix& rm);

/// Row-major flattening used by the gradient rows (k * n_obs + j).
Vec flatten(const ResidualMatrix& rm);

}  // namespace somtp
