#pragma once

#include "somtp/policy_net.hpp"
#include "somtp/reference_solver.hpp"
#include "somtp/simulator.hpp"
#include "somtp/slpg.hpp"
#include "somtp/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace somtp {

enum class CorrectionKind { None, Slpg, Dc3 };

std::string to_string(CorrectionKind c);
CorrectionKind parse_correction(std::string_view name);

/// Correction matching a checkpoint tag: SLPG for the somtp family, DC3 for
/// dc3, none otherwise.
CorrectionKind default_correction(std::string_view tag);

struct EvalConfig {
  double infeas_tol = 1e-3;
  // Test-time penalty is stiffer than the training one; at 10 the linearized
  // penalty leaves too many small violations above the tolerance.
  SlpgConfig slpg{.outer_steps = 10, .inner_steps = 2, .lambda_c = 1000.0};
  double dc3_step = 1e-3;
  int dc3_steps = 5;
  int timing_repeats = 3;

  void validate() const;
};

/// Network inference followed by the requested correction. The obstacle count
/// is taken from the network's input width.
Planner network_planner(const PolicyNetwork& net, CorrectionKind correction, const PlannerConfig& cfg,
                        const EvalConfig& ecfg);

Planner solver_planner(const PlannerConfig& cfg, const SolverConfig& scfg);

struct InstanceOutcome {
  std::size_t id = 0;
  double objective = 0.0;
  double sum_violation = 0.0;  // sum of ReLU residuals
  double max_violation = 0.0;
  double time_ms = 0.0;        // median over repeats, planner call only
  ControlSequence u;
};

/// Metrics of a fixed control sequence, without timing.
InstanceOutcome score_controls(std::size_t id, const ControlSequence& u, const ProblemInstance& inst,
                               const PlannerConfig& cfg);

/// Runs the planner `timing_repeats` times per instance. The first call's
/// output is scored; every call must return the same controls.
std::vector<InstanceOutcome> evaluate(const std::vector<ProblemInstance>& instances, const Planner& planner,
                                      const PlannerConfig& cfg, const EvalConfig& ecfg);

struct EvalRow {
  std::string method;
  std::string correction;
  std::size_t count = 0;
  double tolerance = 0.0;
  double objective = 0.0;       // mean
  double mean_cbf = 0.0;        // mean of per-instance violation sums
  double max_cbf = 0.0;
  double infeasible_pct = 0.0;  // instances with max violation above tolerance
  double time_ms = 0.0;         // mean of per-instance medians

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

EvalRow summarize(const std::vector<InstanceOutcome>& outcomes, std::string method, std::string correction,
                  double tolerance);

/// Summary rows; the time column only when `with_time`.
void write_eval_report(const std::vector<EvalRow>& rows, const std::filesystem::path& path, bool with_time);

/// Per-instance "id,objective,sum_viol,max_viol,u0..." rows (no timing).
void write_instances(const std::vector<InstanceOutcome>& outcomes, const std::filesystem::path& path);
std::vector<InstanceOutcome> load_instances(const std::filesystem::path& path);

}  // namespace somtp
