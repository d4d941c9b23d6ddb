#include "doctest.h"

#include "cli_run.hpp"
#include "somtp/cbf_constraints.hpp"
#include "somtp/dataset.hpp"
#include "somtp/io.hpp"
#include "somtp/policy_net.hpp"
#include "somtp/simulator.hpp"

#include <string>
#include <vector>

using namespace somtp;
using somtp::testing::fresh_dir;
using somtp::testing::run_cli;
using somtp::testing::slurp;

namespace {

bool one_error_line(const std::string& out, const std::string& kind) {
  const std::string prefix = "somtp-error: " + kind + ": ";
  const auto at = out.find(prefix);
  if (at == std::string::npos) return false;
  const auto end = out.find('\n', at);
  return end == out.size() - 1;
}

}  // namespace

TEST_CASE("usage errors exit nonzero with a parseable prefix") {
  const auto missing = run_cli("generate --n 10");
  CHECK(missing.status == 2);
  CHECK(one_error_line(missing.output, "usage"));

  const auto dir = fresh_dir("somtp_cli_usage");
  REQUIRE(run_cli("generate --n 20 --seed 1 --out " + dir.string()).status == 0);
  const auto mse = run_cli("train --method mse --data " + (dir / "train.jsonl").string() + " --out " +
                           (dir / "m.ckpt").string());
  CHECK(mse.status != 0);
  CHECK(mse.output.find("--targets") != std::string::npos);

  const auto absent = run_cli("eval --solver --data " + (dir / "nope.jsonl").string() + " --out " + dir.string());
  CHECK(absent.status == 1);
  CHECK(one_error_line(absent.output, "format"));

  const auto both = run_cli("eval --data " + (dir / "test.jsonl").string() + " --out " + dir.string());
  CHECK(both.status == 2);
}

TEST_CASE("generate is deterministic") {
  const auto a = fresh_dir("somtp_cli_gen_a");
  const auto b = fresh_dir("somtp_cli_gen_b");
  for (const auto& dir : {a, b})
    REQUIRE(run_cli("generate --n 200 --seed 7 --tasks 5 --out " + dir.string()).status == 0);
  for (const char* name : {"train.jsonl", "test.jsonl", "val.jsonl", "tasks.jsonl"})
    CHECK(slurp(a / name) == slurp(b / name));
  CHECK(load_dataset(a / "train.jsonl").size() == 180);
}

TEST_CASE("zero-epoch training leaves the initial weights") {
  const auto dir = fresh_dir("somtp_cli_train0");
  REQUIRE(run_cli("generate --n 20 --seed 2 --out " + dir.string()).status == 0);
  const auto r = run_cli("train --method somtp --epochs 0 --horizon 4 --hidden 8 --layers 2 --init-seed 5 --data " +
                         (dir / "train.jsonl").string() + " --out " + (dir / "z.ckpt").string());
  REQUIRE(r.status == 0);
  PlannerConfig cfg;
  cfg.horizon = 4;
  NetworkConfig net;
  net.hidden_dim = 8;
  net.n_layers = 2;
  net.input_dim = encoding_dim(3);
  net.output_dim = cfg.dim();
  const PolicyNetwork init(net, cfg, 5);
  const PolicyNetwork loaded = PolicyNetwork::load(dir / "z.ckpt");
  for (const ProblemInstance& inst : load_dataset(dir / "train.jsonl"))
    CHECK(loaded.forward(encode_instance(inst, 3)) == init.forward(encode_instance(inst, 3)));
}

TEST_CASE("plan writes residuals that match a recomputation") {
  const auto dir = fresh_dir("somtp_cli_plan");
  const auto out = dir / "plan.csv";
  REQUIRE(run_cli("plan --goal 2,0.5,0 --obstacle 1,0.1,0.2 --obstacle 1.5,-0.6,0.3 --horizon 6 --out " +
                  out.string())
              .status == 0);
  std::vector<std::string> lines;
  std::istringstream in(slurp(out));
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 3 + 1 + 7);
  CHECK(lines[0].rfind("# somtp-plan version=1 planner=solver", 0) == 0);
  CHECK(lines[3] == "k,X,Y,phi,v,q,res0,res1");

  PlannerConfig cfg;
  cfg.horizon = 6;
  ControlSequence u(6);
  Mat printed(6, 2);
  for (int k = 0; k < 6; ++k) {
    const auto cols = io::split(lines[4 + k], ',');
    REQUIRE(cols.size() == 8);
    u.set(k, {io::parse_double(cols[4]), io::parse_double(cols[5])});
    printed(k, 0) = io::parse_double(cols[6]);
    printed(k, 1) = io::parse_double(cols[7]);
  }
  const std::vector<Obstacle> obstacles{{1, 0.1, 0.2}, {1.5, -0.6, 0.3}};
  const ResidualMatrix rm = all_residuals(u, obstacles, cfg);
  CHECK(rm == printed);

  REQUIRE(run_cli("plan --goal 0,0,0 --horizon 5 --out " + out.string()).status == 0);
  std::istringstream zero(slurp(out));
  std::string line;
  std::getline(zero, line);
  std::getline(zero, line);
  for (int k = 0; k < 5; ++k) {
    std::getline(zero, line);
    const auto cols = io::split(line, ',');
    CHECK(std::abs(io::parse_double(cols[4])) <= 1e-3);
    CHECK(std::abs(io::parse_double(cols[5])) <= 1e-3);
  }

  // An instance file passes through unchanged.
  const std::vector<ProblemInstance> one{{{1.25, -0.5, 0.1}, {{0.6, 0.2, 0.15}}}};
  save_dataset(one, dir / "one.jsonl");
  const std::string before = slurp(dir / "one.jsonl");
  REQUIRE(run_cli("plan --instance " + (dir / "one.jsonl").string() + " --horizon 4 --out " + out.string()).status ==
          0);
  CHECK(slurp(dir / "one.jsonl") == before);
  CHECK(slurp(out).find("goal=1.25,-0.5,0.1") != std::string::npos);
}

TEST_CASE("simulate scores a trivially satisfied suite") {
  const auto dir = fresh_dir("somtp_cli_sim");
  std::vector<Task> tasks;
  for (int i = 0; i < 4; ++i) tasks.push_back({{0.5 * i, 0, 0}, {0.5 * i + 0.1, 0, 0}, {}, 0.3, 10});
  save_tasks(tasks, dir / "tasks.jsonl");
  for (const char* sub : {"a", "b"})
    REQUIRE(run_cli("simulate --horizon 5 --tasks " + (dir / "tasks.jsonl").string() + " --out " +
                    (dir / sub).string())
                .status == 0);
  const std::string summary = slurp(dir / "a" / "summary.csv");
  // 0.1 m short in x, which carries weight 2 in Q.
  CHECK(summary.rfind("planner,correction,tasks,success_pct,mean_distance\nsolver,none,4,100,0.14142135", 0) == 0);
  CHECK(slurp(dir / "b" / "summary.csv") == summary);
  CHECK(slurp(dir / "b" / "episodes.csv") == slurp(dir / "a" / "episodes.csv"));
  CHECK(std::filesystem::exists(dir / "a" / "traces" / "trace_003.csv"));

  const auto missing = run_cli("simulate --tasks " + (dir / "none.jsonl").string() + " --out " + dir.string());
  CHECK(missing.status != 0);
  CHECK(missing.output.rfind("somtp-error: ", 0) == 0);
}
