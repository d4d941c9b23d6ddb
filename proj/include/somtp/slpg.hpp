#pragma once

#include "somtp/types.hpp"

namespace somtp {

/// Budgets and line-search constants of the sequential-linearization correction.
struct SlpgConfig {
  int outer_steps = 10;        // re-linearizations (n_m)
  int inner_steps = 2;         // projected gradient steps per linearization (i_m)
  double lambda_c = 10.0;      // quadratic penalty on linearized violations
  double armijo_c1 = 1e-4;
  double armijo_shrink = 0.5;
  int armijo_max_iters = 10;
  double initial_step = 1.0;
  double break_tol = 1e-6;     // stop once the max violation drops to this

  void validate() const;
};

/// First-order model of the CBF residuals around `base_u`.
struct Linearization {
  ControlSequence base_u;
  Vec residuals;       // flat, entry k * n_obs + j
  Mat residual_grads;  // (N * n_obs) x 2N
};

Linearization linearize(const ControlSequence& u, const ProblemInstance& inst,
                        const PlannerConfig& cfg);

/// Penalized correction cost: sum ||du_k||_R^2 + lambda_c * sum ReLU(r + G du)^2.
double j_corr(const Vec& du, const Linearization& lin, const PlannerConfig& cfg,
              const SlpgConfig& scfg);

Vec j_corr_gradient(const Vec& du, const Linearization& lin, const PlannerConfig& cfg,
                    const SlpgConfig& scfg);

struct LineSearchResult {
  double step = 0.0;
  bool accepted = false;  // false when the iteration cap ended the search
  int iterations = 0;
};

/// Backtracking until sufficient decrease holds and u_base + du - step * direction
/// stays in the control box. On hitting the cap the last tried step is returned.
LineSearchResult armijo_box_search(const Vec& du, const Vec& direction, const Linearization& lin,
                                   const Vec& u_base, const PlannerConfig& cfg,
                                   const SlpgConfig& scfg);

struct Correction {
  ControlSequence u_hat;
  Vec du;                    // u_hat - u, exactly
  int outer_iterations = 0;  // linearizations performed
};

Correction correct(const ControlSequence& u, const ProblemInstance& inst,
                   const PlannerConfig& cfg, const SlpgConfig& scfg);

/// `correct` plus d(u_hat)/d(u) of the unrolled iterations. Step sizes chosen by
/// the line search are held constant; clamped coordinates contribute zero.
struct CorrectionWithJacobian {
  Correction result;
  Mat jacobian;  // 2N x 2N
};

CorrectionWithJacobian correct_with_jacobian(const ControlSequence& u, const ProblemInstance& inst,
                                             const PlannerConfig& cfg, const SlpgConfig& scfg);

/// Fixed-step gradient descent on sum ReLU(H)^2 of the true residuals. No box
/// projection is applied.
ControlSequence dc3_correct(const ControlSequence& u, const ProblemInstance& inst,
                            const PlannerConfig& cfg, double step, int steps);

struct Dc3WithJacobian {
  ControlSequence u_hat;
  Mat jacobian;  // 2N x 2N
};

Dc3WithJacobian dc3_correct_with_jacobian(const ControlSequence& u, const ProblemInstance& inst,
                                          const PlannerConfig& cfg, double step, int steps);

}  // namespace somtp
