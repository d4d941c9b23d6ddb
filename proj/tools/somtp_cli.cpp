// somtp: dataset generation, target solving, training, evaluation, single-instance
// planning and closed-loop simulation.

#include "somtp/alm_training.hpp"
#include "somtp/cbf_constraints.hpp"
#include "somtp/dataset.hpp"
#include "somtp/error.hpp"
#include "somtp/evaluation.hpp"
#include "somtp/io.hpp"
#include "somtp/objective.hpp"
#include "somtp/parallel.hpp"
#include "somtp/policy_net.hpp"
#include "somtp/reference_solver.hpp"
#include "somtp/simulator.hpp"
#include "somtp/vehicle_model.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace somtp;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlannerFlags {
  int horizon = 20;
  double dt = 0.1;

  PlannerConfig build() const {
    PlannerConfig cfg;
    cfg.horizon = horizon;
    cfg.dt = dt;
    cfg.validate();
    return cfg;
  }
};

struct SolverFlags {
  int restarts = 3;
  int max_outer = 30;
  int max_inner = 200;
  std::uint64_t seed = 0;

  SolverConfig build() const {
    SolverConfig s;
    s.restarts = restarts;
    s.max_outer = max_outer;
    s.max_inner = max_inner;
    s.seed = seed;
    s.validate();
    return s;
  }
};

void add_planner_flags(CLI::App* cmd, PlannerFlags& f) {
  cmd->add_option("--horizon", f.horizon, "Planning horizon N")->capture_default_str();
  cmd->add_option("--dt", f.dt, "Time step in seconds")->capture_default_str();
}

void add_solver_flags(CLI::App* cmd, SolverFlags& f) {
  cmd->add_option("--restarts", f.restarts, "Reference solver multistarts")->capture_default_str();
  cmd->add_option("--max-outer", f.max_outer, "Reference solver outer iterations")->capture_default_str();
  cmd->add_option("--max-inner", f.max_inner, "Reference solver inner iterations")->capture_default_str();
  cmd->add_option("--solver-seed", f.seed, "Seed for random restarts")->capture_default_str();
}

int obstacle_count(const std::vector<ProblemInstance>& data) {
  if (data.empty()) throw std::invalid_argument("dataset is empty");
  const std::size_t n = data.front().obstacles.size();
  for (const ProblemInstance& inst : data)
    if (inst.obstacles.size() != n) throw MismatchError("instances disagree on the obstacle count");
  return static_cast<int>(n);
}

Planner make_planner(const std::string& checkpoint, const std::string& correction, const PlannerConfig& cfg,
                     const SolverConfig& scfg, const EvalConfig& ecfg, std::string& label, std::string& corr_label) {
  if (checkpoint.empty()) {
    label = "solver";
    corr_label = "none";
    return solver_planner(cfg, scfg);
  }
  PolicyNetwork net = PolicyNetwork::load(checkpoint);
  net.set_training(false);
  const CorrectionKind kind = correction == "auto" ? default_correction(net.tag()) : parse_correction(correction);
  label = net.tag().empty() ? "network" : net.tag();
  corr_label = to_string(kind);
  return network_planner(net, kind, cfg, ecfg);
}

std::string with_suffix(const fs::path& path, const std::string& suffix) {
  return (path.parent_path() / (path.stem().string() + suffix + path.extension().string())).string();
}

// generate ------------------------------------------------------------------

struct GenerateFlags {
  DatasetConfig data;
  std::string out;
  std::string split = "18,1,1";
  TaskSuiteConfig tasks{.n_tasks = 0};
  std::string placement = "map";
  PlannerFlags planner;
};

void run_generate(GenerateFlags& f) {
  const auto parts = io::split(f.split, ',');
  if (parts.size() != 3) throw UsageError("--split expects three comma-separated weights");
  for (int i = 0; i < 3; ++i) f.data.split_ratio[i] = io::parse_double(parts[i]);
  f.data.validate();
  const fs::path dir(f.out);
  if (f.data.n_instances > 0) {
    const auto all = generate(f.data);
    const DatasetSplit s = split(all, f.data.split_ratio, f.data.seed);
    save_dataset(s.train, dir / "train.jsonl", f.data, "train");
    save_dataset(s.test, dir / "test.jsonl", f.data, "test");
    save_dataset(s.val, dir / "val.jsonl", f.data, "val");
    std::cout << "wrote " << s.train.size() << "/" << s.test.size() << "/" << s.val.size()
              << " instances to " << dir.string() << '\n';
  }
  if (f.tasks.n_tasks > 0) {
    f.tasks.seed = f.data.seed;
    f.tasks.placement = parse_placement(f.placement);
    const auto tasks = generate_tasks(f.tasks, f.planner.build());
    save_tasks(tasks, dir / "tasks.jsonl");
    std::cout << "wrote " << tasks.size() << " tasks to " << (dir / "tasks.jsonl").string() << '\n';
  }
}

// targets -------------------------------------------------------------------

struct TargetsFlags {
  std::string data;
  std::string out;
  PlannerFlags planner;
  SolverFlags solver;
};

void run_targets(const TargetsFlags& f) {
  const auto data = load_dataset(f.data);
  const auto results = batch_solve(data, f.planner.build(), f.solver.build());
  std::vector<ControlSequence> targets;
  std::size_t converged = 0;
  for (const SolveResult& r : results) {
    targets.push_back(r.u);
    converged += r.converged ? 1 : 0;
  }
  save_targets(targets, f.out);
  std::cout << "solved " << results.size() << " instances, " << converged << " converged\n";
}

// train ---------------------------------------------------------------------

struct TrainFlags {
  std::string method = "somtp";
  std::string data;
  std::string targets;
  std::string out;
  std::string report;
  std::string optimizer = "sgd";
  TrainConfig train;
  NetworkConfig net;
  PlannerFlags planner;
  std::uint64_t init_seed = 0;
};

void run_train(TrainFlags& f) {
  f.train.method = parse_method(f.method);
  if (f.optimizer == "sgd") {
    f.train.optimizer.kind = OptimizerKind::Sgd;
  } else if (f.optimizer == "adam") {
    f.train.optimizer.kind = OptimizerKind::Adam;
  } else {
    throw UsageError("--optimizer must be sgd or adam");
  }
  const bool supervised = f.train.method == TrainMethod::Mse || f.train.method == TrainMethod::Mae;
  if (supervised && f.targets.empty()) {
    throw UsageError("method " + f.method + " needs solver targets; pass --targets FILE");
  }
  const PlannerConfig cfg = f.planner.build();
  const auto data = load_dataset(f.data);
  const int n_obs = obstacle_count(data);
  f.net.input_dim = encoding_dim(n_obs);
  f.net.output_dim = cfg.dim();

  std::vector<ControlSequence> targets;
  if (supervised) {
    targets = load_targets(f.targets);
    if (targets.size() != data.size()) throw MismatchError("targets file does not match the dataset size");
  }
  PolicyNetwork net(f.net, cfg, f.init_seed);
  net.set_tag(to_string(f.train.method));
  TrainResult result = train(data, std::move(net), AlmState::initial(cfg, n_obs), cfg, f.train,
                             supervised ? &targets : nullptr, [](const EpochRecord& r) {
                               std::cerr << "epoch " << r.epoch << " loss " << r.loss << " mean_viol "
                                         << r.mean_violation << " mu_c " << r.mu_c << '\n';
                             });
  result.net.save(f.out);
  const fs::path report = f.report.empty() ? fs::path(f.out + ".report.csv") : fs::path(f.report);
  write_report(result.report, report, false);
  write_report(result.report, with_suffix(report, "_timing"), true);
  if (result.report.diverged) throw std::runtime_error("training diverged: " + result.report.note);
  std::cout << "trained " << result.report.epochs.size() << " epochs, checkpoint " << f.out << '\n';
}

// eval ----------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  bool solver = false;
  std::string data;
  std::string correction = "auto";
  std::string out;
  EvalConfig eval;
  PlannerFlags planner;
  SolverFlags solver_flags;
};

void run_eval(const EvalFlags& f) {
  if (f.solver == !f.checkpoint.empty()) throw UsageError("pass exactly one of --checkpoint or --solver");
  const PlannerConfig cfg = f.planner.build();
  const auto data = load_dataset(f.data);
  std::string label;
  std::string corr;
  const Planner planner = make_planner(f.checkpoint, f.correction, cfg, f.solver_flags.build(), f.eval, label, corr);
  const auto outcomes = evaluate(data, planner, cfg, f.eval);
  const EvalRow row = summarize(outcomes, label, corr, f.eval.infeas_tol);
  const fs::path dir(f.out);
  write_eval_report({row}, dir / "eval.csv", false);
  write_eval_report({row}, dir / "eval_timing.csv", true);
  write_instances(outcomes, dir / "instances.csv");

  // The summary must be reproducible from the per-instance file.
  auto reloaded = load_instances(dir / "instances.csv");
  for (std::size_t i = 0; i < reloaded.size(); ++i) reloaded[i].time_ms = outcomes[i].time_ms;
  if (!(summarize(reloaded, label, corr, f.eval.infeas_tol) == row)) {
    throw std::runtime_error("per-instance file does not reproduce the summary row");
  }
  std::cout << "method " << row.method << " correction " << row.correction << " n " << row.count << " tol "
            << row.tolerance << "\n  obj " << row.objective << "  mean_cbf " << row.mean_cbf << "  max_cbf "
            << row.max_cbf << "  infe% " << row.infeasible_pct << "  time_ms " << row.time_ms << '\n';
}

// plan ----------------------------------------------------------------------

struct PlanFlags {
  std::string instance;
  std::string goal;
  std::vector<std::string> obstacles;
  std::string checkpoint;
  std::string correction = "auto";
  std::string out;
  PlannerFlags planner;
  SolverFlags solver;
  EvalConfig eval;
};

std::vector<double> parse_triple(const std::string& s, const std::string& what) {
  const auto parts = io::split(s, ',');
  if (parts.size() != 3) throw UsageError(what + " expects three comma-separated numbers");
  return {io::parse_double(parts[0]), io::parse_double(parts[1]), io::parse_double(parts[2])};
}

void run_plan(const PlanFlags& f) {
  ProblemInstance inst;
  if (!f.instance.empty()) {
    const auto loaded = load_dataset(f.instance);
    if (loaded.size() != 1) throw std::invalid_argument("instance file must hold exactly one instance");
    inst = loaded.front();
  } else if (!f.goal.empty()) {
    const auto g = parse_triple(f.goal, "--goal");
    inst.goal = {g[0], g[1], g[2]};
    for (const std::string& o : f.obstacles) {
      const auto v = parse_triple(o, "--obstacle");
      if (v[2] < 0.0) throw std::invalid_argument("obstacle radius must be nonnegative");
      inst.obstacles.push_back({v[0], v[1], v[2]});
    }
  } else {
    throw UsageError("pass --instance FILE or --goal x,y,phi");
  }
  const PlannerConfig cfg = f.planner.build();
  std::string label;
  std::string corr;
  const Planner planner = make_planner(f.checkpoint, f.correction, cfg, f.solver.build(), f.eval, label, corr);
  const ControlSequence u = planner(inst);
  const Trajectory traj = rollout(u, cfg);
  const ResidualMatrix rm = all_residuals(u, inst.obstacles, cfg);

  std::ostringstream out;
  out << "# somtp-plan version=1 planner=" << label << " correction=" << corr << " horizon=" << cfg.horizon
      << " goal=" << io::format_double(inst.goal.x) << ',' << io::format_double(inst.goal.y) << ','
      << io::format_double(inst.goal.phi) << '\n';
  for (const Obstacle& o : inst.obstacles) {
    out << "# obstacle=" << io::format_double(o.x) << ',' << io::format_double(o.y) << ',' << io::format_double(o.r)
        << '\n';
  }
  out << "k,X,Y,phi,v,q";
  for (std::size_t j = 0; j < inst.obstacles.size(); ++j) out << ",res" << j;
  out << '\n';
  for (int k = 0; k <= cfg.horizon; ++k) {
    const State& s = traj.states[static_cast<std::size_t>(k)];
    out << k << ',' << io::format_double(s.x) << ',' << io::format_double(s.y) << ',' << io::format_double(s.phi);
    if (k < cfg.horizon) {
      out << ',' << io::format_double(u[k].v) << ',' << io::format_double(u[k].q);
      for (Eigen::Index j = 0; j < rm.cols(); ++j) out << ',' << io::format_double(rm(k, j));
    } else {
      out << ",,";
      for (Eigen::Index j = 0; j < rm.cols(); ++j) out << ',';
    }
    out << '\n';
  }
  io::write_atomic(f.out, out.str());
  const ViolationStats v = violation_stats(rm);
  std::cout << "planned with " << label << ": objective " << objective_value(u, inst, cfg) << " max violation "
            << v.max << '\n';
}

// simulate ------------------------------------------------------------------

struct SimulateFlags {
  std::string tasks;
  std::string checkpoint;
  std::string correction = "auto";
  std::string out;
  bool traces = true;
  PlannerFlags planner;
  SolverFlags solver;
  EvalConfig eval;
};

void run_simulate(const SimulateFlags& f) {
  const auto tasks = load_tasks(f.tasks);
  if (tasks.empty()) throw std::invalid_argument("task suite is empty");
  const PlannerConfig cfg = f.planner.build();
  std::string label;
  std::string corr;
  const Planner planner = make_planner(f.checkpoint, f.correction, cfg, f.solver.build(), f.eval, label, corr);

  std::vector<EpisodeResult> results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) { results[i] = run_task(tasks[i], planner, cfg); });

  const fs::path dir(f.out);
  std::ostringstream episodes;
  episodes << "task,outcome,steps,final_distance,note\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const EpisodeResult& r = results[i];
    episodes << i << ',' << to_string(r.outcome) << ',' << r.steps << ',' << io::format_double(r.final_distance)
             << ',' << r.note << '\n';
    if (f.traces) {
      char name[32];
      std::snprintf(name, sizeof name, "trace_%03zu.csv", i);
      write_trace(r, dir / "traces" / name);
    }
  }
  io::write_atomic(dir / "episodes.csv", episodes.str());
  const Score s = score(results);
  std::ostringstream summary;
  summary << "planner,correction,tasks,success_pct,mean_distance\n"
          << label << ',' << corr << ',' << s.total << ',' << io::format_double(s.success_rate) << ','
          << io::format_double(s.mean_distance) << '\n';
  io::write_atomic(dir / "summary.csv", summary.str());
  std::cout << "planner " << label << ": success " << s.success_rate << "% (" << s.successes << "/" << s.total
            << "), mean distance " << s.mean_distance << '\n';
}

int fail(const std::string& kind, const std::string& msg) {
  std::string line = msg;
  for (char& c : line)
    if (c == '\n') c = ' ';
  std::cerr << "somtp-error: " << kind << ": " << line << '\n';
  return kind == "usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-corrected neural trajectory planning toolkit"};
  app.require_subcommand(1);

  GenerateFlags gen;
  auto* g = app.add_subcommand("generate", "Generate dataset splits and/or a task suite");
  g->add_option("--n", gen.data.n_instances, "Number of instances")->capture_default_str();
  g->add_option("--seed", gen.data.seed, "Random seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--n-obs", gen.data.n_obs, "Obstacles per instance")->capture_default_str();
  g->add_option("--map", gen.data.map_half_extent, "Obstacle half-extent of the map")->capture_default_str();
  g->add_option("--goal-extent", gen.data.goal_half_extent, "Goal half-extent")->capture_default_str();
  g->add_option("--r-lo", gen.data.r_lo, "Minimum obstacle radius")->capture_default_str();
  g->add_option("--r-hi", gen.data.r_hi, "Maximum obstacle radius")->capture_default_str();
  g->add_option("--split", gen.split, "train,test,val weights")->capture_default_str();
  g->add_option("--tasks", gen.tasks.n_tasks, "Also write a closed-loop task suite of this size");
  g->add_option("--task-obs", gen.tasks.n_obs, "Obstacles per task")->capture_default_str();
  g->add_option("--task-placement", gen.placement, "map|beside")->capture_default_str();
  add_planner_flags(g, gen.planner);

  TargetsFlags tgt;
  auto* t = app.add_subcommand("targets", "Solve every instance with the reference solver");
  t->add_option("--data", tgt.data, "Dataset file")->required();
  t->add_option("--out", tgt.out, "Targets file")->required();
  add_planner_flags(t, tgt.planner);
  add_solver_flags(t, tgt.solver);

  TrainFlags tr;
  auto* tc = app.add_subcommand("train", "Train a planner network");
  tc->add_option("--method", tr.method, "somtp|somtp_no_du|alm|penalty|dc3|mse|mae")->capture_default_str();
  tc->add_option("--data", tr.data, "Training dataset file")->required();
  tc->add_option("--targets", tr.targets, "Solver targets (mse/mae)");
  tc->add_option("--out", tr.out, "Checkpoint path")->required();
  tc->add_option("--report", tr.report, "Report CSV path");
  tc->add_option("--epochs", tr.train.epochs, "Epochs")->capture_default_str();
  tc->add_option("--batch", tr.train.batch_size, "Batch size")->capture_default_str();
  tc->add_option("--seed", tr.train.seed, "Shuffle and dropout seed")->capture_default_str();
  tc->add_option("--init-seed", tr.init_seed, "Weight initialization seed")->capture_default_str();
  tc->add_option("--optimizer", tr.optimizer, "sgd|adam")->capture_default_str();
  tc->add_option("--lr", tr.train.optimizer.learning_rate, "Learning rate")->capture_default_str();
  tc->add_option("--hidden", tr.net.hidden_dim, "Hidden width")->capture_default_str();
  tc->add_option("--layers", tr.net.n_layers, "Hidden layers")->capture_default_str();
  tc->add_option("--dropout", tr.net.dropout_rate, "Dropout rate")->capture_default_str();
  tc->add_option("--nm", tr.train.slpg.outer_steps, "SLPG outer steps during training")->capture_default_str();
  tc->add_option("--im", tr.train.slpg.inner_steps, "SLPG inner steps during training")->capture_default_str();
  tc->add_option("--lambda-c", tr.train.slpg.lambda_c, "SLPG penalty weight during training")->capture_default_str();
  tc->add_option("--lambda-g", tr.train.lambda_g, "Penalty/DC3 soft-loss weight")->capture_default_str();
  tc->add_option("--dc3-step", tr.train.dc3_step, "DC3 correction step")->capture_default_str();
  tc->add_option("--dc3-steps", tr.train.dc3_steps, "DC3 correction steps")->capture_default_str();
  add_planner_flags(tc, tr.planner);

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or the reference solver");
  e->add_option("--checkpoint", ev.checkpoint, "Network checkpoint");
  e->add_flag("--solver", ev.solver, "Evaluate the reference solver");
  e->add_option("--data", ev.data, "Dataset file")->required();
  e->add_option("--correction", ev.correction, "auto|none|slpg|dc3")->capture_default_str();
  e->add_option("--lambda-c", ev.eval.slpg.lambda_c, "SLPG penalty weight")->capture_default_str();
  e->add_option("--tol", ev.eval.infeas_tol, "Infeasibility tolerance")->capture_default_str();
  e->add_option("--nm", ev.eval.slpg.outer_steps, "SLPG outer steps")->capture_default_str();
  e->add_option("--im", ev.eval.slpg.inner_steps, "SLPG inner steps")->capture_default_str();
  e->add_option("--repeats", ev.eval.timing_repeats, "Timed planner calls per instance")->capture_default_str();
  e->add_option("--out", ev.out, "Output directory")->required();
  add_planner_flags(e, ev.planner);
  add_solver_flags(e, ev.solver_flags);

  PlanFlags pl;
  auto* p = app.add_subcommand("plan", "Plan a single instance");
  p->add_option("--instance", pl.instance, "Dataset file holding one instance");
  p->add_option("--goal", pl.goal, "Goal x,y,phi");
  p->add_option("--obstacle", pl.obstacles, "Obstacle x,y,r (repeatable)");
  p->add_option("--checkpoint", pl.checkpoint, "Network checkpoint (default: reference solver)");
  p->add_option("--correction", pl.correction, "auto|none|slpg|dc3")->capture_default_str();
  p->add_option("--out", pl.out, "Trajectory CSV")->required();
  add_planner_flags(p, pl.planner);
  add_solver_flags(p, pl.solver);

  SimulateFlags sm;
  auto* s = app.add_subcommand("simulate", "Run closed-loop episodes over a task suite");
  s->add_option("--tasks", sm.tasks, "Task suite file")->required();
  s->add_option("--checkpoint", sm.checkpoint, "Network checkpoint (default: reference solver)");
  s->add_option("--correction", sm.correction, "auto|none|slpg|dc3")->capture_default_str();
  s->add_option("--nm", sm.eval.slpg.outer_steps, "SLPG outer steps")->capture_default_str();
  s->add_option("--im", sm.eval.slpg.inner_steps, "SLPG inner steps")->capture_default_str();
  s->add_option("--lambda-c", sm.eval.slpg.lambda_c, "SLPG penalty weight")->capture_default_str();
  s->add_option("--out", sm.out, "Output directory")->required();
  s->add_flag("!--no-traces", sm.traces, "Skip per-episode trace files");
  add_planner_flags(s, sm.planner);
  add_solver_flags(s, sm.solver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return fail("usage", ex.what());
  }

  try {
    if (*g) run_generate(gen);
    if (*t) run_targets(tgt);
    if (*tc) run_train(tr);
    if (*e) run_eval(ev);
    if (*p) run_plan(pl);
    if (*s) run_simulate(sm);
  } catch (const UsageError& ex) {
    return fail("usage", ex.what());
  } catch (const FormatError& ex) {
    return fail("format", ex.what());
  } catch (const MismatchError& ex) {
    return fail("mismatch", ex.what());
  } catch (const std::invalid_argument& ex) {
    return fail("invalid", ex.what());
  } catch (const std::exception& ex) {
    return fail("runtime", ex.what());
  }
  return 0;
}
