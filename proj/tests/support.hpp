#pragma once

#include "somtp/types.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace somtp::testing {

inline PlannerConfig small_config(int horizon) {
  PlannerConfig cfg;
  cfg.horizon = horizon;
  return cfg;
}

inline ControlSequence random_controls(const PlannerConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec u(cfg.dim());
  const Vec lo = cfg.lower_bounds();
  const Vec hi = cfg.upper_bounds();
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = lo[i] + (hi[i] - lo[i]) * unit(rng);
  return ControlSequence(u);
}

inline ProblemInstance random_instance(std::mt19937_64& rng, int n_obs, double extent = 2.0) {
  std::uniform_real_distribution<double> pos(-extent, extent);
  std::uniform_real_distribution<double> rad(0.0, 0.5);
  std::uniform_real_distribution<double> head(-3.0, 3.0);
  ProblemInstance inst;
  inst.goal = {pos(rng), pos(rng), head(rng)};
  for (int j = 0; j < n_obs; ++j) inst.obstacles.push_back({pos(rng), pos(rng), rad(rng)});
  return inst;
}

/// Central differences of a vector-valued map, one column per input.
inline Mat central_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  const Vec f0 = f(x);
  Mat J(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x;
    Vec xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

/// |a - b| <= tol * max(1, |b|) entrywise; returns the worst ratio.
inline double worst_relative_error(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(1.0, std::abs(b(i, j))));
  return worst;
}

}  // namespace somtp::testing
