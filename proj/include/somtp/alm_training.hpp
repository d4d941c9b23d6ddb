#pragma once

#include "somtp/policy_net.hpp"
#include "somtp/slpg.hpp"
#include "somtp/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace somtp {

enum class TrainMethod { Somtp, SomtpNoDu, AlmOnly, Penalty, Dc3, Mse, Mae };

std::string to_string(TrainMethod m);
/// Accepts somtp, somtp_no_du, alm, penalty, dc3, mse, mae.
TrainMethod parse_method(std::string_view name);

/// Multipliers and penalty schedule. lambda_c is one table shared by every
/// instance, indexed by (timestep, obstacle slot).
struct AlmState {
  Mat lambda_c;   // N x n_obs
  Vec lambda_du;  // 2N
  double mu_c = 1.0;
  double mu_du = 1.0;
  double beta_c = 0.0;
  double beta_du = 0.0;
  bool beta_initialized = false;  // set from the first epoch's means
  double eps_c = 2.0;
  double eps_du = 2.0;
  double mu_c_max = 1e4;
  double mu_du_max = 1e4;

  static AlmState initial(const PlannerConfig& cfg, int n_obs);
  void validate() const;
};

/// J(u_hat) + sum lambda_c H + mu_c/2 sum H^2 + lambda_du . |du| + mu_du/2 ||du||^2
/// with H = ReLU(residuals at u_hat).
double alm_loss(const ControlSequence& u_hat, const Vec& du, const ProblemInstance& inst,
                const AlmState& alm, const PlannerConfig& cfg);

/// J(u_hat) + lambda_g * sum ReLU(residual)^2.
double penalty_loss(const ControlSequence& u_hat, const ProblemInstance& inst, double lambda_g,
                    const PlannerConfig& cfg);

enum class SupervisedMode { Mse, Mae };

/// Mean squared or absolute componentwise error. Throws std::invalid_argument
/// on a length mismatch.
double supervised_loss(const ControlSequence& u, const ControlSequence& target, SupervisedMode mode);

/// lambda_c += mu_c * mean_violation, lambda_du += mu_du * mean_abs_du.
AlmState update_multipliers(AlmState alm, const Mat& mean_violation, const Vec& mean_abs_du);

/// End-of-epoch schedule, applied to each channel independently: when the
/// epoch mean drops below beta / eps, beta takes the mean and mu grows by eps
/// up to its cap. The first call only records beta.
AlmState update_penalties(AlmState alm, double epoch_mean_h_sq, double epoch_mean_du_sq);

struct TrainConfig {
  TrainMethod method = TrainMethod::Somtp;
  int epochs = 50;
  int batch_size = 64;
  std::uint64_t seed = 0;
  SlpgConfig slpg{.outer_steps = 2, .inner_steps = 2};
  double lambda_g = 10.0;   // Penalty and DC3 soft-loss weight
  double dc3_step = 1e-3;
  int dc3_steps = 5;
  OptimizerConfig optimizer;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double mean_violation = 0.0;  // mean over instances of sum ReLU(residual)
  double max_violation = 0.0;
  double mean_du_sq = 0.0;
  double mu_c = 0.0;
  double mu_du = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  std::string note;
};

/// "epoch,loss,mean_viol,max_viol,mean_du_sq,mu_c,mu_du[,seconds]" rows.
void write_report(const TrainReport& report, const std::filesystem::path& path, bool with_seconds);

struct TrainResult {
  PolicyNetwork net;
  AlmState alm;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training. Every epoch reshuffles; each step runs forward, the
/// method's correction, the loss gradient and an optimizer step, then the
/// multiplier update for the ALM family. Penalties move at epoch end. A
/// non-finite loss stops training with `report.diverged` set.
TrainResult train(const std::vector<ProblemInstance>& dataset, PolicyNetwork net, AlmState alm,
                  const PlannerConfig& cfg, const TrainConfig& tcfg,
                  const std::vector<ControlSequence>* targets = nullptr,
                  const EpochCallback& on_epoch = {});

}  // namespace somtp
