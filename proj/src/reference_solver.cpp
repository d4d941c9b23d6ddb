#include "somtp/reference_solver.hpp"

#include "somtp/detail/transcription.hpp"
#include "somtp/error.hpp"
#include "somtp/io.hpp"
#include "somtp/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace somtp {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;
constexpr double kStepMin = 1e-12;
constexpr double kStepMax = 1e12;

// Augmented Lagrangian for c(u) <= 0:
//   J(u) + 1/(2 mu) * sum(max(0, lambda + mu c)^2 - lambda^2)
class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const ProblemInstance& inst, const PlannerConfig& cfg)
      : inst_(inst), cfg_(cfg), lo_(cfg.lower_bounds()), hi_(cfg.upper_bounds()) {}

  double value(const Vec& u, const Vec& lambda, double mu) const {
    const auto xs = detail::rollout<double>(u, cfg_);
    double f = detail::objective<double>(u, xs, inst_.goal, cfg_);
    if (!inst_.obstacles.empty()) {
      const Vec c = detail::residuals<double>(xs, inst_.obstacles, cfg_);
      f += penalty(c, lambda, mu);
    }
    return f;
  }

  double value_and_gradient(const Vec& u, const Vec& lambda, double mu, Vec& grad) const {
    const auto xs = detail::rollout<double>(u, cfg_);
    const auto J = detail::rollout_jacobian<double>(u, xs, cfg_);
    double f = detail::objective<double>(u, xs, inst_.goal, cfg_);
    grad = detail::objective_gradient<double>(u, xs, J, inst_.goal, cfg_);
    if (!inst_.obstacles.empty()) {
      const Vec c = detail::residuals<double>(xs, inst_.obstacles, cfg_);
      const Mat G = detail::residual_gradients<double>(xs, J, inst_.obstacles, cfg_);
      f += penalty(c, lambda, mu);
      const Vec shifted = (lambda + mu * c).cwiseMax(0.0);
      grad.noalias() += G.transpose() * shifted;
    }
    return f;
  }

  Vec residuals(const Vec& u) const {
    const auto xs = detail::rollout<double>(u, cfg_);
    return detail::residuals<double>(xs, inst_.obstacles, cfg_);
  }

  double objective(const Vec& u) const {
    const auto xs = detail::rollout<double>(u, cfg_);
    return detail::objective<double>(u, xs, inst_.goal, cfg_);
  }

  Vec project(const Vec& u) const { return u.cwiseMax(lo_).cwiseMin(hi_); }

  std::size_t n_constraints() const {
    return static_cast<std::size_t>(cfg_.horizon) * inst_.obstacles.size();
  }

 private:
  static double penalty(const Vec& c, const Vec& lambda, double mu) {
    const Vec shifted = (lambda + mu * c).cwiseMax(0.0);
    return (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * mu);
  }

  const ProblemInstance& inst_;
  const PlannerConfig& cfg_;
  Vec lo_;
  Vec hi_;
};

struct InnerResult {
  bool converged = false;
  bool finite = true;
  int iterations = 0;
};

// Spectral projected gradient with Armijo backtracking along the projected arc.
InnerResult minimize_box(const AugmentedLagrangian& al, Vec& u, const Vec& lambda, double mu,
                         const SolverConfig& scfg) {
  InnerResult res;
  Vec g;
  double f = al.value_and_gradient(u, lambda, mu, g);
  if (!std::isfinite(f)) {
    res.finite = false;
    return res;
  }
  double alpha = 1.0;
  for (int it = 0; it < scfg.max_inner; ++it) {
    const Vec pg = al.project(u - g) - u;
    if (pg.lpNorm<Eigen::Infinity>() <= scfg.inner_tol) {
      res.converged = true;
      return res;
    }
    const Vec d = al.project(u - alpha * g) - u;
    const double slope = g.dot(d);
    double t = 1.0;
    Vec trial;
    double f_trial = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < kMaxBacktracks; ++ls) {
      trial = al.project(u + t * d);
      f_trial = al.value(trial, lambda, mu);
      if (std::isfinite(f_trial) && f_trial <= f + kArmijo * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    ++res.iterations;
    if (!accepted) return res;  // no further progress possible at this precision

    Vec g_trial;
    f_trial = al.value_and_gradient(trial, lambda, mu, g_trial);
    const Vec s = trial - u;
    const Vec y = g_trial - g;
    const double sy = s.dot(y);
    alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, kStepMin, kStepMax) : kStepMax;
    u = trial;
    f = f_trial;
    g = g_trial;
  }
  const Vec pg = al.project(u - g) - u;
  res.converged = pg.lpNorm<Eigen::Infinity>() <= scfg.inner_tol;
  return res;
}

struct Candidate {
  Vec u;
  double objective = std::numeric_limits<double>::infinity();
  double max_violation = std::numeric_limits<double>::infinity();
  bool finite = false;
  int iterations = 0;
};

Candidate run_alm(const AugmentedLagrangian& al, Vec u, const SolverConfig& scfg) {
  Candidate cand;
  Vec lambda = Vec::Zero(static_cast<Eigen::Index>(al.n_constraints()));
  double mu = scfg.mu_init;
  double prev_violation = std::numeric_limits<double>::infinity();
  double prev_objective = std::numeric_limits<double>::infinity();

  for (int outer = 0; outer < scfg.max_outer; ++outer) {
    const InnerResult inner = minimize_box(al, u, lambda, mu, scfg);
    cand.iterations += inner.iterations;
    if (!inner.finite) return cand;

    const Vec c = al.residuals(u);
    const double violation = c.size() == 0 ? 0.0 : std::max(0.0, c.maxCoeff());
    const double objective = al.objective(u);
    if (!std::isfinite(objective)) return cand;
    if (c.size() > 0) lambda = (lambda + mu * c).cwiseMax(0.0);

    const bool feasible = violation <= scfg.feas_tol;
    const bool stalled = std::abs(objective - prev_objective) <= 1e-12 * (1.0 + std::abs(objective));
    if (feasible && (inner.converged || stalled)) break;
    if (violation > 0.25 * prev_violation) mu = std::min(mu * scfg.mu_growth, scfg.mu_max);
    prev_violation = violation;
    prev_objective = objective;
  }
  const Vec c = al.residuals(u);
  cand.max_violation = c.size() == 0 ? 0.0 : std::max(0.0, c.maxCoeff());
  cand.objective = al.objective(u);
  cand.finite = std::isfinite(cand.objective) && std::isfinite(cand.max_violation);
  cand.u = std::move(u);
  return cand;
}

bool better(const Candidate& a, const Candidate& b, double feas_tol) {
  if (a.finite != b.finite) return a.finite;
  const bool fa = a.max_violation <= feas_tol;
  const bool fb = b.max_violation <= feas_tol;
  if (fa != fb) return fa;
  if (fa) return a.objective < b.objective;
  return a.max_violation < b.max_violation;
}

}  // namespace

void SolverConfig::validate() const {
  if (max_outer < 1 || max_inner < 1) throw std::invalid_argument("solver iteration caps must be >= 1");
  if (!(inner_tol > 0.0) || !(feas_tol > 0.0)) throw std::invalid_argument("solver tolerances must be positive");
  if (!(mu_init > 0.0) || !(mu_growth > 1.0) || !(mu_max >= mu_init))
    throw std::invalid_argument("invalid penalty schedule");
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
}

SolveResult solve(const ProblemInstance& inst, const PlannerConfig& cfg, const SolverConfig& scfg) {
  cfg.validate();
  scfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const AugmentedLagrangian al(inst, cfg);

  std::mt19937_64 rng(scfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec lo = cfg.lower_bounds();
  const Vec hi = cfg.upper_bounds();

  Candidate best;
  int iterations = 0;
  for (int r = 0; r < scfg.restarts; ++r) {
    Vec u0 = Vec::Zero(cfg.dim());
    if (r > 0) {
      for (Eigen::Index i = 0; i < u0.size(); ++i) u0[i] = lo[i] + (hi[i] - lo[i]) * unit(rng);
    }
    Candidate cand = run_alm(al, std::move(u0), scfg);
    iterations += cand.iterations;
    if (r == 0 || better(cand, best, scfg.feas_tol)) best = std::move(cand);
  }

  SolveResult out;
  if (best.u.size() == 0) best.u = Vec::Zero(cfg.dim());
  out.u = ControlSequence(best.u);
  out.objective = best.objective;
  out.max_violation = best.max_violation;
  out.converged = best.finite && best.max_violation <= scfg.feas_tol;
  out.iterations = iterations;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<SolveResult> batch_solve(const std::vector<ProblemInstance>& instances,
                                     const PlannerConfig& cfg, const SolverConfig& scfg) {
  std::vector<SolveResult> out(instances.size());
  parallel_for(instances.size(), [&](std::size_t i) { out[i] = solve(instances[i], cfg, scfg); });
  return out;
}

double projected_gradient_norm(const ControlSequence& u, const ProblemInstance& inst,
                               const PlannerConfig& cfg) {
  const ProblemInstance free{inst.goal, {}};
  const AugmentedLagrangian al(free, cfg);
  Vec g;
  al.value_and_gradient(u.flat(), Vec(), 1.0, g);
  return (al.project(u.flat() - g) - u.flat()).lpNorm<Eigen::Infinity>();
}

void save_targets(const std::vector<ControlSequence>& targets, const std::filesystem::path& path) {
  const std::size_t dim = targets.empty() ? 0 : static_cast<std::size_t>(targets.front().flat().size());
  std::ostringstream out;
  out << "# somtp-targets version=1 count=" << targets.size() << " dim=" << dim << '\n';
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (static_cast<std::size_t>(targets[i].flat().size()) != dim) {
      throw std::invalid_argument("targets must share one horizon");
    }
    out << i;
    for (Eigen::Index c = 0; c < targets[i].flat().size(); ++c) out << ',' << io::format_double(targets[i].flat()[c]);
    out << '\n';
  }
  io::write_atomic(path, out.str());
}

std::vector<ControlSequence> load_targets(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty targets file: " + path.string());
  std::size_t count = 0;
  std::size_t dim = 0;
  if (std::sscanf(line.c_str(), "# somtp-targets version=1 count=%zu dim=%zu", &count, &dim) != 2) {
    throw FormatError("not a version-1 targets file: " + path.string());
  }
  std::vector<ControlSequence> out;
  out.reserve(count);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = io::split(line, ',');
    if (fields.size() != dim + 1) throw FormatError("targets row has the wrong width");
    if (fields[0] != std::to_string(out.size())) throw FormatError("targets rows out of order");
    Vec u(static_cast<Eigen::Index>(dim));
    for (std::size_t c = 0; c < dim; ++c) u[static_cast<Eigen::Index>(c)] = io::parse_double(fields[c + 1]);
    out.emplace_back(std::move(u));
  }
  if (out.size() != count) throw FormatError("targets file is truncated: " + path.string());
  return out;
}

}  // namespace somtp
