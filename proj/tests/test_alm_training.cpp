#include "doctest.h"

#include "somtp/alm_training.hpp"
#include "somtp/cbf_constraints.hpp"
#include "somtp/error.hpp"
#include "somtp/objective.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace somtp;

namespace {

NetworkConfig small_net(int n_obs, int horizon) {
  NetworkConfig c;
  c.n_layers = 2;
  c.hidden_dim = 16;
  c.dropout_rate = 0.0;
  c.input_dim = encoding_dim(n_obs);
  c.output_dim = 2 * horizon;
  return c;
}

// One step at v = 1 from the origin with an obstacle centred at (1, 0). The
// residual is 0.5 R^2 - 0.81 + 0.5 for inflated radius R, so R^2 = 2 (target + 0.31)
// gives exactly `target`.
struct Violating {
  PlannerConfig cfg;
  ProblemInstance inst;
  ControlSequence u;
};

Violating single_violation(double target) {
  Violating v;
  v.cfg = somtp::testing::small_config(1);
  v.u = ControlSequence(Vec{{1.0, 0.0}});
  const double inflated = std::sqrt(2.0 * (target + 0.31));
  v.inst = {{1, 0, 0}, {{1.0, 0.0, inflated - v.cfg.robot_radius - v.cfg.expansion}}};
  REQUIRE(all_residuals(v.u, v.inst.obstacles, v.cfg)(0, 0) == doctest::Approx(target).epsilon(1e-12));
  return v;
}

std::vector<ProblemInstance> random_dataset(int n, int n_obs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ProblemInstance> out;
  for (int i = 0; i < n; ++i) out.push_back(somtp::testing::random_instance(rng, n_obs, 1.5));
  return out;
}

}  // namespace

TEST_CASE("method names") {
  for (TrainMethod m : {TrainMethod::Somtp, TrainMethod::SomtpNoDu, TrainMethod::AlmOnly, TrainMethod::Penalty,
                        TrainMethod::Dc3, TrainMethod::Mse, TrainMethod::Mae})
    CHECK(parse_method(to_string(m)) == m);
  CHECK(to_string(TrainMethod::SomtpNoDu) == "somtp_no_du");
  CHECK_THROWS_AS(parse_method("adam"), std::invalid_argument);
}

TEST_CASE("alm loss examples") {
  PlannerConfig cfg = somtp::testing::small_config(3);
  AlmState alm = AlmState::initial(cfg, 1);
  const ProblemInstance clear{{1, 0, 0}, {{0, 5, 0.2}}};
  std::mt19937_64 rng(7);
  const ControlSequence u = somtp::testing::random_controls(cfg, rng);
  REQUIRE(violation_stats(all_residuals(u, clear.obstacles, cfg)).max == 0.0);
  CHECK(alm_loss(u, Vec::Zero(6), clear, alm, cfg) == doctest::Approx(objective_value(u, clear, cfg)));

  const Violating v = single_violation(0.2);
  AlmState a = AlmState::initial(v.cfg, 1);
  a.lambda_c(0, 0) = 1.0;
  a.mu_c = 2.0;
  const double base = objective_value(v.u, v.inst, v.cfg);
  CHECK(alm_loss(v.u, Vec::Zero(2), v.inst, a, v.cfg) == doctest::Approx(base + 0.24));

  const double delta = 0.15;
  Vec du = Vec::Zero(6);
  du[0] = delta;
  a = AlmState::initial(cfg, 1);
  a.lambda_du[0] = 1.0;
  a.mu_du = 2.0;
  CHECK(alm_loss(u, du, clear, a, cfg) == doctest::Approx(objective_value(u, clear, cfg) + delta + delta * delta));

  CHECK_THROWS_AS(alm_loss(u, Vec::Zero(4), clear, a, cfg), MismatchError);
  CHECK_THROWS_AS(alm_loss(u, Vec::Zero(6), clear, AlmState::initial(cfg, 2), cfg), MismatchError);
}

TEST_CASE("penalty loss examples") {
  const Violating v = single_violation(0.3);
  const double base = objective_value(v.u, v.inst, v.cfg);
  CHECK(penalty_loss(v.u, v.inst, 10.0, v.cfg) == doctest::Approx(base + 0.9));
  const ProblemInstance clear{{1, 0, 0}, {{0, 5, 0.2}}};
  CHECK(penalty_loss(v.u, clear, 10.0, v.cfg) == doctest::Approx(objective_value(v.u, clear, v.cfg)));
}

TEST_CASE("penalty loss equals the alm loss with zero multipliers and mu_c = 2 lambda_g") {
  PlannerConfig cfg = somtp::testing::small_config(4);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> weight(0.1, 50.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const ProblemInstance inst = somtp::testing::random_instance(rng, 3, 1.0);
    const ControlSequence u = somtp::testing::random_controls(cfg, rng);
    const double lambda_g = weight(rng);
    AlmState alm = AlmState::initial(cfg, 3);
    alm.mu_c = 2.0 * lambda_g;
    alm.mu_du = 0.0;
    CHECK(penalty_loss(u, inst, lambda_g, cfg) ==
          doctest::Approx(alm_loss(u, Vec::Zero(cfg.dim()), inst, alm, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("supervised loss") {
  const ControlSequence t(Vec{{0.2, -0.1, 0.5, 0.0}});
  CHECK(supervised_loss(t, t, SupervisedMode::Mse) == 0.0);
  const ControlSequence shifted(Vec(t.flat().array() + 0.1));
  CHECK(supervised_loss(shifted, t, SupervisedMode::Mse) == doctest::Approx(0.01));
  CHECK(supervised_loss(shifted, t, SupervisedMode::Mae) == doctest::Approx(0.1));
  CHECK_THROWS_AS(supervised_loss(t, ControlSequence(3), SupervisedMode::Mae), std::invalid_argument);
}

TEST_CASE("multiplier updates") {
  const PlannerConfig cfg = somtp::testing::small_config(2);
  AlmState alm = AlmState::initial(cfg, 2);
  alm.lambda_c.setConstant(0.3);
  alm.lambda_du.setConstant(0.5);
  const AlmState same = update_multipliers(alm, Mat::Zero(2, 2), Vec::Zero(4));
  CHECK(same.lambda_c == alm.lambda_c);
  CHECK(same.lambda_du == alm.lambda_du);

  AlmState a = AlmState::initial(cfg, 2);
  Mat viol = Mat::Zero(2, 2);
  viol(1, 0) = 0.2;
  Vec abs_du = Vec::Zero(4);
  abs_du[2] = 0.1;
  a.lambda_du[2] = 0.5;
  a.mu_du = 2.0;
  const AlmState b = update_multipliers(a, viol, abs_du);
  CHECK(b.lambda_c(1, 0) == doctest::Approx(0.2));
  CHECK(b.lambda_c(0, 0) == 0.0);
  CHECK(b.lambda_du[2] == doctest::Approx(0.7));
  CHECK(b.lambda_du[0] == 0.0);
}

TEST_CASE("penalty schedule") {
  const PlannerConfig cfg = somtp::testing::small_config(2);
  AlmState alm = AlmState::initial(cfg, 1);
  const AlmState first = update_penalties(alm, 0.4, 0.3);
  CHECK(first.beta_initialized);
  CHECK(first.beta_c == 0.4);
  CHECK(first.beta_du == 0.3);
  CHECK(first.mu_c == alm.mu_c);

  AlmState s = first;
  s.beta_c = 0.1;
  s.beta_du = 0.05;
  s.mu_c = 1.0;
  s.mu_c_max = 100.0;
  const AlmState stay = update_penalties(s, 0.1, 1.0);
  CHECK(stay.mu_c == 1.0);
  CHECK(stay.beta_c == 0.1);
  CHECK(stay.mu_du == s.mu_du);

  s.beta_c = 0.05;
  const AlmState grow = update_penalties(s, 0.01, 1.0);
  CHECK(grow.beta_c == 0.01);
  CHECK(grow.mu_c == 2.0);
  CHECK(grow.mu_du == s.mu_du);

  s.mu_c = 100.0;
  const AlmState capped = update_penalties(s, 0.01, 1.0);
  CHECK(capped.mu_c == 100.0);
  CHECK(capped.beta_c == 0.01);

  // The du channel moves on its own.
  s = first;
  s.beta_du = 0.5;
  const AlmState du_only = update_penalties(s, 10.0, 0.1);
  CHECK(du_only.mu_du == 2.0 * s.mu_du);
  CHECK(du_only.mu_c == s.mu_c);
}

TEST_CASE("multipliers stay nonnegative and penalties capped under random updates") {
  const PlannerConfig cfg = somtp::testing::small_config(3);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AlmState alm = AlmState::initial(cfg, 2);
  alm.mu_c_max = 64.0;
  alm.mu_du_max = 16.0;
  for (int it = 0; it < 500; ++it) {
    Mat viol(3, 2);
    for (Eigen::Index i = 0; i < viol.size(); ++i) viol.data()[i] = unit(rng) < 0.5 ? 0.0 : unit(rng);
    Vec abs_du(6);
    for (Eigen::Index i = 0; i < abs_du.size(); ++i) abs_du[i] = unit(rng);
    alm = update_multipliers(alm, viol, abs_du);
    if (it % 10 == 9) alm = update_penalties(alm, std::pow(unit(rng), 3), std::pow(unit(rng), 3));
    CHECK((alm.lambda_c.array() >= 0.0).all());
    CHECK((alm.lambda_du.array() >= 0.0).all());
    CHECK(alm.mu_c > 0.0);
    CHECK(alm.mu_c <= 64.0);
    CHECK(alm.mu_du <= 16.0);
    alm.validate();
  }
}

TEST_CASE("state validation") {
  const PlannerConfig cfg = somtp::testing::small_config(2);
  AlmState alm = AlmState::initial(cfg, 1);
  CHECK(alm.lambda_c.rows() == 2);
  CHECK(alm.lambda_c.cols() == 1);
  CHECK(alm.lambda_du.size() == 4);
  alm.eps_c = 1.0;
  CHECK_THROWS_AS(alm.validate(), std::invalid_argument);
  alm = AlmState::initial(cfg, 1);
  alm.lambda_c(0, 0) = -1.0;
  CHECK_THROWS_AS(alm.validate(), std::invalid_argument);
}

TEST_CASE("zero epochs leave the network alone") {
  const PlannerConfig cfg = somtp::testing::small_config(3);
  const PolicyNetwork net(small_net(1, 3), cfg, 1);
  TrainConfig tcfg;
  tcfg.epochs = 0;
  const TrainResult r = train(random_dataset(10, 1, 1), net, AlmState::initial(cfg, 1), cfg, tcfg);
  CHECK(r.net == net);
  CHECK(r.report.epochs.empty());
  CHECK_FALSE(r.report.diverged);
}

TEST_CASE("penalty training on the trivial instance drives the objective down") {
  const PlannerConfig cfg = somtp::testing::small_config(4);
  const PolicyNetwork net(small_net(0, 4), cfg, 3);
  TrainConfig tcfg;
  tcfg.method = TrainMethod::Penalty;
  tcfg.epochs = 50;
  tcfg.batch_size = 1;
  tcfg.optimizer = {.kind = OptimizerKind::Sgd, .learning_rate = 1e-2};
  const std::vector<ProblemInstance> data{ProblemInstance{}};
  const ControlSequence before = net.forward(encode_instance(data[0], 0));
  const TrainResult r = train(data, net, AlmState::initial(cfg, 0), cfg, tcfg);
  REQUIRE(r.report.epochs.size() == 50);
  int rises = 0;
  for (std::size_t e = 1; e < r.report.epochs.size(); ++e)
    if (r.report.epochs[e].loss > r.report.epochs[e - 1].loss) ++rises;
  CHECK(rises == 0);
  CHECK(r.report.epochs.back().loss < 0.5 * r.report.epochs.front().loss);
  const ControlSequence after = r.net.forward(encode_instance(data[0], 0));
  CHECK(objective_value(after, data[0], cfg) < objective_value(before, data[0], cfg));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const PlannerConfig cfg = somtp::testing::small_config(4);
  NetworkConfig nc = small_net(2, 4);
  nc.dropout_rate = 0.2;
  const PolicyNetwork net(nc, cfg, 5);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 8;
  tcfg.seed = 9;
  tcfg.optimizer.learning_rate = 1e-3;
  const auto data = random_dataset(40, 2, 7);
  const TrainResult a = train(data, net, AlmState::initial(cfg, 2), cfg, tcfg);
  const TrainResult b = train(data, net, AlmState::initial(cfg, 2), cfg, tcfg);
  REQUIRE(a.report.epochs.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.report.epochs[e].loss == b.report.epochs[e].loss);
    CHECK(a.report.epochs[e].mean_violation == b.report.epochs[e].mean_violation);
    CHECK(a.report.epochs[e].mu_c == b.report.epochs[e].mu_c);
  }
  CHECK(a.net == b.net);
  CHECK(a.alm.lambda_c == b.alm.lambda_c);

  tcfg.seed = 10;
  const TrainResult c = train(data, net, AlmState::initial(cfg, 2), cfg, tcfg);
  CHECK_FALSE(c.net == a.net);
}

TEST_CASE("method dispatch") {
  const PlannerConfig cfg = somtp::testing::small_config(4);
  const PolicyNetwork net(small_net(2, 4), cfg, 11);
  const auto data = random_dataset(24, 2, 13);
  AlmState start = AlmState::initial(cfg, 2);
  start.lambda_c.setConstant(0.25);
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 8;
  tcfg.optimizer.learning_rate = 1e-3;

  SUBCASE("baselines never touch the multipliers") {
    for (TrainMethod m : {TrainMethod::Penalty, TrainMethod::Dc3}) {
      tcfg.method = m;
      const TrainResult r = train(data, net, start, cfg, tcfg);
      CHECK(r.alm.lambda_c == start.lambda_c);
      CHECK(r.alm.lambda_du == start.lambda_du);
      CHECK(r.alm.mu_c == start.mu_c);
      if (m == TrainMethod::Penalty) CHECK(r.report.epochs.back().mean_du_sq == 0.0);
    }
  }
  SUBCASE("supervised methods need targets") {
    tcfg.method = TrainMethod::Mse;
    CHECK_THROWS_AS(train(data, net, start, cfg, tcfg), std::invalid_argument);
    const std::vector<ControlSequence> targets(data.size(), ControlSequence(4));
    for (TrainMethod m : {TrainMethod::Mse, TrainMethod::Mae}) {
      tcfg.method = m;
      const TrainResult r = train(data, net, start, cfg, tcfg, &targets);
      CHECK(r.alm.lambda_c == start.lambda_c);
      CHECK(r.report.epochs.back().loss < r.report.epochs.front().loss * 1.5);
    }
    const std::vector<ControlSequence> short_targets(3, ControlSequence(4));
    CHECK_THROWS_AS(train(data, net, start, cfg, tcfg, &short_targets), std::invalid_argument);
  }
  SUBCASE("alm without correction reports no du") {
    tcfg.method = TrainMethod::AlmOnly;
    const TrainResult r = train(data, net, start, cfg, tcfg);
    CHECK(r.report.epochs.back().mean_du_sq == 0.0);
    CHECK(r.alm.lambda_du.isZero(0.0));
    CHECK((r.alm.lambda_c.array() >= start.lambda_c.array()).all());
  }
  SUBCASE("somtp without du corrects but leaves the du channel idle") {
    tcfg.method = TrainMethod::SomtpNoDu;
    const TrainResult r = train(data, net, start, cfg, tcfg);
    CHECK(r.alm.lambda_du.isZero(0.0));
    CHECK(r.alm.mu_du == start.mu_du);
    CHECK((r.alm.lambda_c.array() >= start.lambda_c.array()).all());
  }
  SUBCASE("somtp moves both channels") {
    tcfg.method = TrainMethod::Somtp;
    const TrainResult r = train(data, net, start, cfg, tcfg);
    CHECK((r.alm.lambda_c.array() >= start.lambda_c.array()).all());
    if (r.report.epochs.front().mean_du_sq > 0.0) CHECK(r.alm.lambda_du.sum() > 0.0);
  }
}

TEST_CASE("a non-finite loss stops training with a report") {
  const PlannerConfig cfg = somtp::testing::small_config(3);
  const PolicyNetwork net(small_net(1, 3), cfg, 1);
  TrainConfig tcfg;
  tcfg.method = TrainMethod::Penalty;
  tcfg.epochs = 5;
  auto data = random_dataset(8, 1, 3);
  data[4].goal.x = std::numeric_limits<double>::infinity();
  const TrainResult r = train(data, net, AlmState::initial(cfg, 1), cfg, tcfg);
  CHECK(r.report.diverged);
  CHECK_FALSE(r.report.note.empty());
  CHECK(r.report.epochs.empty());
}

TEST_CASE("report file") {
  TrainReport rep;
  rep.epochs.push_back({0, 1.5, 0.1, 0.3, 0.01, 1.0, 1.0, 2.5});
  rep.epochs.push_back({1, 1.25, 0.05, 0.2, 0.02, 2.0, 1.0, 2.4});
  const auto dir = std::filesystem::temp_directory_path() / "somtp_test_alm";
  std::filesystem::create_directories(dir);
  write_report(rep, dir / "a.csv", false);
  write_report(rep, dir / "b.csv", true);
  std::ifstream a(dir / "a.csv");
  std::string header;
  std::getline(a, header);
  CHECK(header == "epoch,loss,mean_viol,max_viol,mean_du_sq,mu_c,mu_du");
  std::string row;
  std::getline(a, row);
  CHECK(row.rfind("0,1.5,", 0) == 0);
  std::ifstream b(dir / "b.csv");
  std::getline(b, header);
  CHECK(header == "epoch,loss,mean_viol,max_viol,mean_du_sq,mu_c,mu_du,seconds");
}
