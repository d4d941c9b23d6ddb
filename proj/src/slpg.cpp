#include "somtp/slpg.hpp"

#include "somtp/detail/autodiff.hpp"
#include "somtp/detail/transcription.hpp"

#include <cmath>
#include <stdexcept>

namespace somtp {

namespace {

using detail::MatT;
using detail::VecT;

void check_inputs(const ControlSequence& u, const PlannerConfig& cfg) {
  if (u.horizon() != cfg.horizon) {
    throw std::invalid_argument("control sequence length does not match the horizon");
  }
}

// Plain-double J_corr shared by the public entry points and the line search.
double j_corr_value(const Vec& du, const Vec& r, const Mat& G, const Vec& w, double lambda_c) {
  double cost = (w.array() * du.array().square()).sum();
  if (r.size() > 0) {
    const Vec z = r + G * du;
    cost += lambda_c * z.cwiseMax(0.0).squaredNorm();
  }
  return cost;
}

template <typename T>
VecT<T> j_corr_grad(const VecT<T>& du, const VecT<T>& r, const MatT<T>& G, const Vec& w,
                    double lambda_c) {
  const Eigen::Index n = du.size();
  VecT<T> grad(n);
  for (Eigen::Index c = 0; c < n; ++c) grad[c] = (2.0 * w[c]) * du[c];
  for (Eigen::Index row = 0; row < r.size(); ++row) {
    T z = r[row];
    for (Eigen::Index c = 0; c < n; ++c) z += G(row, c) * du[c];
    if (detail::value_of(z) <= 0.0) continue;
    const T scale = (2.0 * lambda_c) * z;
    for (Eigen::Index c = 0; c < n; ++c) grad[c] += scale * G(row, c);
  }
  return grad;
}

double max_violation(const Vec& r) { return r.size() == 0 ? 0.0 : std::max(0.0, r.maxCoeff()); }

LineSearchResult line_search(const Vec& du, const Vec& d, const Vec& r, const Mat& G,
                             const Vec& u_base, const Vec& lo, const Vec& hi, const Vec& w,
                             const SlpgConfig& scfg) {
  const double f0 = j_corr_value(du, r, G, w, scfg.lambda_c);
  const double slope = d.squaredNorm();
  LineSearchResult res;
  double step = scfg.initial_step;
  for (int it = 0;; ++it) {
    res.step = step;
    res.iterations = it + 1;
    const Vec trial = du - step * d;
    const bool armijo = j_corr_value(trial, r, G, w, scfg.lambda_c) <= f0 - scfg.armijo_c1 * step * slope;
    bool in_box = true;
    for (Eigen::Index c = 0; c < trial.size() && in_box; ++c) {
      const double x = u_base[c] + trial[c];
      in_box = x >= lo[c] && x <= hi[c];
    }
    if (armijo && in_box) {
      res.accepted = true;
      return res;
    }
    if (it + 1 >= scfg.armijo_max_iters) return res;
    step *= scfg.armijo_shrink;
  }
}

template <typename T>
VecT<T> correct_impl(const VecT<T>& u, const ProblemInstance& inst, const PlannerConfig& cfg,
                     const SlpgConfig& scfg, int& outer_used) {
  const Vec lo = cfg.lower_bounds();
  const Vec hi = cfg.upper_bounds();
  const Vec w = cfg.control_weight_diagonal();
  const Eigen::Index n = u.size();

  VecT<T> un = u;
  outer_used = 0;
  if (inst.obstacles.empty()) return un;

  for (int outer = 0; outer < scfg.outer_steps; ++outer) {
    const auto xs = detail::rollout<T>(un, cfg);
    const VecT<T> r = detail::residuals<T>(xs, inst.obstacles, cfg);
    const Vec r_val = detail::values<T>(r);
    // Checking before linearizing is equivalent to the post-update break test.
    if (max_violation(r_val) <= scfg.break_tol) break;

    const auto J = detail::rollout_jacobian<T>(un, xs, cfg);
    const MatT<T> G = detail::residual_gradients<T>(xs, J, inst.obstacles, cfg);
    const Mat G_val = detail::values<T>(G);
    const Vec un_val = detail::values<T>(un);
    ++outer_used;

    VecT<T> du = VecT<T>::Constant(n, detail::constant_like(0.0, u[0]));
    VecT<T> next = un;
    for (int inner = 0; inner < scfg.inner_steps; ++inner) {
      const VecT<T> d = j_corr_grad<T>(du, r, G, w, scfg.lambda_c);
      const LineSearchResult ls =
          line_search(detail::values<T>(du), detail::values<T>(d), r_val, G_val, un_val, lo, hi, w, scfg);
      for (Eigen::Index c = 0; c < n; ++c) {
        next[c] = detail::clamp<T>(T(un[c] + (du[c] - ls.step * d[c])), lo[c], hi[c]);
        du[c] = next[c] - un[c];
      }
    }
    // Take the clamped point itself so the iterate sits in the box exactly.
    un = next;
  }
  return un;
}

template <typename T>
VecT<T> dc3_impl(const VecT<T>& u, const ProblemInstance& inst, const PlannerConfig& cfg,
                 double step, int steps) {
  VecT<T> cur = u;
  for (int s = 0; s < steps; ++s) {
    const auto xs = detail::rollout<T>(cur, cfg);
    const VecT<T> r = detail::residuals<T>(xs, inst.obstacles, cfg);
    if (max_violation(detail::values<T>(r)) <= 0.0) break;  // gradient is exactly zero
    const auto J = detail::rollout_jacobian<T>(cur, xs, cfg);
    const MatT<T> G = detail::residual_gradients<T>(xs, J, inst.obstacles, cfg);
    VecT<T> grad = VecT<T>::Constant(cur.size(), detail::constant_like(0.0, cur[0]));
    for (Eigen::Index row = 0; row < r.size(); ++row) {
      if (detail::value_of(r[row]) <= 0.0) continue;
      const T scale = 2.0 * r[row];
      for (Eigen::Index c = 0; c < cur.size(); ++c) grad[c] += scale * G(row, c);
    }
    cur = cur - step * grad;
  }
  return cur;
}

}  // namespace

void SlpgConfig::validate() const {
  if (outer_steps < 1 || inner_steps < 1) throw std::invalid_argument("SLPG budgets must be >= 1");
  if (!(lambda_c > 0.0)) throw std::invalid_argument("lambda_c must be positive");
  if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0))
    throw std::invalid_argument("armijo_shrink must lie in (0, 1)");
  if (armijo_max_iters < 1) throw std::invalid_argument("armijo_max_iters must be >= 1");
  if (!(initial_step > 0.0)) throw std::invalid_argument("initial_step must be positive");
  if (!(break_tol >= 0.0)) throw std::invalid_argument("break_tol must be nonnegative");
}

Linearization linearize(const ControlSequence& u, const ProblemInstance& inst,
                        const PlannerConfig& cfg) {
  check_inputs(u, cfg);
  const auto xs = detail::rollout<double>(u.flat(), cfg);
  const auto J = detail::rollout_jacobian<double>(u.flat(), xs, cfg);
  return Linearization{u, detail::residuals<double>(xs, inst.obstacles, cfg),
                       detail::residual_gradients<double>(xs, J, inst.obstacles, cfg)};
}

double j_corr(const Vec& du, const Linearization& lin, const PlannerConfig& cfg,
              const SlpgConfig& scfg) {
  return j_corr_value(du, lin.residuals, lin.residual_grads, cfg.control_weight_diagonal(),
                      scfg.lambda_c);
}

Vec j_corr_gradient(const Vec& du, const Linearization& lin, const PlannerConfig& cfg,
                    const SlpgConfig& scfg) {
  return j_corr_grad<double>(du, lin.residuals, lin.residual_grads, cfg.control_weight_diagonal(),
                             scfg.lambda_c);
}

LineSearchResult armijo_box_search(const Vec& du, const Vec& direction, const Linearization& lin,
                                   const Vec& u_base, const PlannerConfig& cfg,
                                   const SlpgConfig& scfg) {
  return line_search(du, direction, lin.residuals, lin.residual_grads, u_base, cfg.lower_bounds(),
                     cfg.upper_bounds(), cfg.control_weight_diagonal(), scfg);
}

Correction correct(const ControlSequence& u, const ProblemInstance& inst,
                   const PlannerConfig& cfg, const SlpgConfig& scfg) {
  check_inputs(u, cfg);
  Correction out;
  out.u_hat = ControlSequence(correct_impl<double>(u.flat(), inst, cfg, scfg, out.outer_iterations));
  out.du = out.u_hat.flat() - u.flat();
  return out;
}

CorrectionWithJacobian correct_with_jacobian(const ControlSequence& u, const ProblemInstance& inst,
                                             const PlannerConfig& cfg, const SlpgConfig& scfg) {
  check_inputs(u, cfg);
  if (u.flat().size() > detail::kMaxDerivatives) {
    throw std::invalid_argument("differentiable correction supports at most 32 horizon steps");
  }
  CorrectionWithJacobian out;
  const auto seeded = detail::seed(u.flat());
  const VecT<detail::Dual> u_hat =
      correct_impl<detail::Dual>(seeded, inst, cfg, scfg, out.result.outer_iterations);
  out.result.u_hat = ControlSequence(detail::values<detail::Dual>(u_hat));
  out.result.du = out.result.u_hat.flat() - u.flat();
  out.jacobian = detail::jacobian(u_hat, u.flat().size());
  return out;
}

ControlSequence dc3_correct(const ControlSequence& u, const ProblemInstance& inst,
                            const PlannerConfig& cfg, double step, int steps) {
  check_inputs(u, cfg);
  return ControlSequence(dc3_impl<double>(u.flat(), inst, cfg, step, steps));
}

Dc3WithJacobian dc3_correct_with_jacobian(const ControlSequence& u, const ProblemInstance& inst,
                                          const PlannerConfig& cfg, double step, int steps) {
  check_inputs(u, cfg);
  if (u.flat().size() > detail::kMaxDerivatives) {
    throw std::invalid_argument("differentiable correction supports at most 32 horizon steps");
  }
  const auto seeded = detail::seed(u.flat());
  const VecT<detail::Dual> out = dc3_impl<detail::Dual>(seeded, inst, cfg, step, steps);
  return {ControlSequence(detail::values<detail::Dual>(out)), detail::jacobian(out, u.flat().size())};
}

}  // namespace somtp
