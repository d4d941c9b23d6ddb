#include "somtp/evaluation.hpp"

#include "somtp/cbf_constraints.hpp"
#include "somtp/error.hpp"
#include "somtp/io.hpp"
#include "somtp/objective.hpp"
#include "somtp/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace somtp {

namespace {

constexpr const char* kInstancesHeader = "# somtp-eval-instances version=1";

}  // namespace

std::string to_string(CorrectionKind c) {
  switch (c) {
    case CorrectionKind::None: return "none";
    case CorrectionKind::Slpg: return "slpg";
    case CorrectionKind::Dc3: return "dc3";
  }
  return "unknown";
}

CorrectionKind parse_correction(std::string_view name) {
  if (name == "none") return CorrectionKind::None;
  if (name == "slpg") return CorrectionKind::Slpg;
  if (name == "dc3") return CorrectionKind::Dc3;
  throw std::invalid_argument("unknown correction '" + std::string(name) + "'");
}

CorrectionKind default_correction(std::string_view tag) {
  if (tag == "somtp" || tag == "somtp_no_du" || tag == "alm") return CorrectionKind::Slpg;
  if (tag == "dc3") return CorrectionKind::Dc3;
  return CorrectionKind::None;
}

void EvalConfig::validate() const {
  if (!(infeas_tol >= 0.0)) throw std::invalid_argument("infeasibility tolerance must be nonnegative");
  slpg.validate();
  if (!(dc3_step > 0.0) || dc3_steps < 0) throw std::invalid_argument("invalid DC3 settings");
  if (timing_repeats < 1) throw std::invalid_argument("timing_repeats must be >= 1");
}

Planner network_planner(const PolicyNetwork& net, CorrectionKind correction, const PlannerConfig& cfg,
                        const EvalConfig& ecfg) {
  net.check_compatible(cfg);
  ecfg.validate();
  const int n_obs = (net.config().input_dim - 3) / 3;
  auto model = std::make_shared<const PolicyNetwork>(net);
  return [model, correction, cfg, ecfg, n_obs](const ProblemInstance& inst) {
    const ControlSequence raw = model->forward(encode_instance(inst, n_obs));
    switch (correction) {
      case CorrectionKind::None: return raw;
      case CorrectionKind::Slpg: return correct(raw, inst, cfg, ecfg.slpg).u_hat;
      case CorrectionKind::Dc3: return dc3_correct(raw, inst, cfg, ecfg.dc3_step, ecfg.dc3_steps);
    }
    return raw;
  };
}

Planner solver_planner(const PlannerConfig& cfg, const SolverConfig& scfg) {
  scfg.validate();
  return [cfg, scfg](const ProblemInstance& inst) { return solve(inst, cfg, scfg).u; };
}

InstanceOutcome score_controls(std::size_t id, const ControlSequence& u, const ProblemInstance& inst,
                               const PlannerConfig& cfg) {
  InstanceOutcome out;
  out.id = id;
  out.u = u;
  out.objective = objective_value(u, inst, cfg);
  const ViolationStats v = violation_stats(all_residuals(u, inst.obstacles, cfg));
  out.sum_violation = v.sum;
  out.max_violation = v.max;
  return out;
}

std::vector<InstanceOutcome> evaluate(const std::vector<ProblemInstance>& instances, const Planner& planner,
                                      const PlannerConfig& cfg, const EvalConfig& ecfg) {
  ecfg.validate();
  std::vector<InstanceOutcome> out(instances.size());
  parallel_for(instances.size(), [&](std::size_t i) {
    std::vector<double> times;
    ControlSequence first;
    for (int r = 0; r < ecfg.timing_repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      ControlSequence u = planner(instances[i]);
      times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      if (r == 0) {
        first = std::move(u);
      } else if (!(u == first)) {
        throw std::logic_error("planner is not deterministic on instance " + std::to_string(i));
      }
    }
    out[i] = score_controls(i, first, instances[i], cfg);
    std::sort(times.begin(), times.end());
    out[i].time_ms = times[times.size() / 2];
  });
  return out;
}

EvalRow summarize(const std::vector<InstanceOutcome>& outcomes, std::string method, std::string correction,
                  double tolerance) {
  if (outcomes.empty()) throw std::invalid_argument("cannot summarize an empty evaluation");
  EvalRow row;
  row.method = std::move(method);
  row.correction = std::move(correction);
  row.count = outcomes.size();
  row.tolerance = tolerance;
  std::size_t infeasible = 0;
  for (const InstanceOutcome& o : outcomes) {
    row.objective += o.objective;
    row.mean_cbf += o.sum_violation;
    row.max_cbf = std::max(row.max_cbf, o.max_violation);
    row.time_ms += o.time_ms;
    if (o.max_violation > tolerance) ++infeasible;
  }
  const double n = static_cast<double>(outcomes.size());
  row.objective /= n;
  row.mean_cbf /= n;
  row.time_ms /= n;
  row.infeasible_pct = 100.0 * static_cast<double>(infeasible) / n;
  return row;
}

void write_eval_report(const std::vector<EvalRow>& rows, const std::filesystem::path& path, bool with_time) {
  std::ostringstream out;
  out << "method,correction,count,tolerance,obj,mean_cbf,max_cbf,infe_pct";
  if (with_time) out << ",time_ms";
  out << '\n';
  for (const EvalRow& r : rows) {
    out << r.method << ',' << r.correction << ',' << r.count << ',' << io::format_double(r.tolerance) << ','
        << io::format_double(r.objective) << ',' << io::format_double(r.mean_cbf) << ','
        << io::format_double(r.max_cbf) << ',' << io::format_double(r.infeasible_pct);
    if (with_time) out << ',' << io::format_double(r.time_ms);
    out << '\n';
  }
  io::write_atomic(path, out.str());
}

void write_instances(const std::vector<InstanceOutcome>& outcomes, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kInstancesHeader << " count=" << outcomes.size() << '\n';
  out << "id,objective,sum_viol,max_viol,u...\n";
  for (const InstanceOutcome& o : outcomes) {
    out << o.id << ',' << io::format_double(o.objective) << ',' << io::format_double(o.sum_violation) << ','
        << io::format_double(o.max_violation);
    for (Eigen::Index c = 0; c < o.u.flat().size(); ++c) out << ',' << io::format_double(o.u.flat()[c]);
    out << '\n';
  }
  io::write_atomic(path, out.str());
}

std::vector<InstanceOutcome> load_instances(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind(kInstancesHeader, 0) != 0) {
    throw FormatError("not a version-1 evaluation file: " + path.string());
  }
  const auto count_pos = line.find("count=");
  if (count_pos == std::string::npos) throw FormatError("evaluation header lacks a count");
  const std::size_t count = std::stoul(line.substr(count_pos + 6));
  if (!std::getline(in, line)) throw FormatError("evaluation file lacks a column header");
  std::vector<InstanceOutcome> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() < 4 || (f.size() - 4) % 2 != 0) throw FormatError("malformed evaluation row");
    InstanceOutcome o;
    o.id = std::stoul(f[0]);
    o.objective = io::parse_double(f[1]);
    o.sum_violation = io::parse_double(f[2]);
    o.max_violation = io::parse_double(f[3]);
    Vec u(static_cast<Eigen::Index>(f.size() - 4));
    for (std::size_t c = 4; c < f.size(); ++c) u[static_cast<Eigen::Index>(c - 4)] = io::parse_double(f[c]);
    o.u = ControlSequence(std::move(u));
    out.push_back(std::move(o));
  }
  if (out.size() != count) throw FormatError("evaluation file is truncated: " + path.string());
  return out;
}

}  // namespace somtp
