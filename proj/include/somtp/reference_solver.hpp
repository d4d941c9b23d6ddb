#pragma once

#include "somtp/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace somtp {

struct SolverConfig {
  int max_outer = 30;
  int max_inner = 200;
  double inner_tol = 1e-8;   // infinity norm of the projected gradient
  double feas_tol = 1e-6;    // max CBF violation accepted as feasible
  double mu_init = 1.0;
  double mu_growth = 4.0;
  double mu_max = 1e8;
  int restarts = 3;          // zero start plus (restarts - 1) random starts
  std::uint64_t seed = 0;

  void validate() const;
};

struct SolveResult {
  ControlSequence u;
  double objective = 0.0;
  double max_violation = 0.0;
  bool converged = false;
  int iterations = 0;        // inner iterations summed over outer loops and restarts
  double seconds = 0.0;
};

/// Augmented Lagrangian on the CBF residuals with spectral projected-gradient
/// inner solves over the control box. The best restart wins, feasible first.
SolveResult solve(const ProblemInstance& inst, const PlannerConfig& cfg, const SolverConfig& scfg);

std::vector<SolveResult> batch_solve(const std::vector<ProblemInstance>& instances,
                                     const PlannerConfig& cfg, const SolverConfig& scfg);

/// Infinity norm of P(u - grad J) - u, the first-order measure used as the
/// inner stopping test (objective only, no constraints).
double projected_gradient_norm(const ControlSequence& u, const ProblemInstance& inst,
                               const PlannerConfig& cfg);

/// "id,u0,...,u{2N-1}" rows after a '#' header line.
void save_targets(const std::vector<ControlSequence>& targets, const std::filesystem::path& path);
std::vector<ControlSequence> load_targets(const std::filesystem::path& path);

}  // namespace somtp
