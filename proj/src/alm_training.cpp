#include "somtp/alm_training.hpp"

#include "somtp/cbf_constraints.hpp"
#include "somtp/detail/transcription.hpp"
#include "somtp/error.hpp"
#include "somtp/io.hpp"
#include "somtp/objective.hpp"
#include "somtp/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace somtp {

namespace {

bool uses_alm(TrainMethod m) {
  return m == TrainMethod::Somtp || m == TrainMethod::SomtpNoDu || m == TrainMethod::AlmOnly;
}

// Everything the loss needs at one control vector.
struct PointEval {
  double objective = 0.0;
  Vec objective_grad;
  Vec residuals;  // flat k * n_obs + j
  Mat residual_grads;
};

PointEval evaluate_point(const Vec& u, const ProblemInstance& inst, const PlannerConfig& cfg) {
  PointEval p;
  const auto xs = detail::rollout<double>(u, cfg);
  const auto J = detail::rollout_jacobian<double>(u, xs, cfg);
  p.objective = detail::objective<double>(u, xs, inst.goal, cfg);
  p.objective_grad = detail::objective_gradient<double>(u, xs, J, inst.goal, cfg);
  p.residuals = detail::residuals<double>(xs, inst.obstacles, cfg);
  p.residual_grads = detail::residual_gradients<double>(xs, J, inst.obstacles, cfg);
  return p;
}

// Per-instance outcome of one training step.
struct SampleResult {
  double loss = 0.0;
  Vec grad_u;         // dLoss / d(network output)
  Vec violation;      // ReLU(residuals) at the corrected point, flat
  Vec abs_du;
  double du_sq = 0.0;
};

SampleResult run_sample(const Vec& u_raw, const ProblemInstance& inst, const PlannerConfig& cfg,
                        const TrainConfig& tcfg, const AlmState& alm, const ControlSequence* target) {
  SampleResult s;
  const Eigen::Index dim = u_raw.size();
  const TrainMethod method = tcfg.method;

  if (method == TrainMethod::Mse || method == TrainMethod::Mae) {
    const Vec diff = u_raw - target->flat();
    if (method == TrainMethod::Mse) {
      s.loss = diff.squaredNorm() / static_cast<double>(dim);
      s.grad_u = 2.0 * diff / static_cast<double>(dim);
    } else {
      s.loss = diff.cwiseAbs().sum() / static_cast<double>(dim);
      s.grad_u = diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }) /
                 static_cast<double>(dim);
    }
    const PointEval p = evaluate_point(u_raw, inst, cfg);
    s.violation = p.residuals.cwiseMax(0.0);
    s.abs_du = Vec::Zero(dim);
    return s;
  }

  // Correction and its Jacobian w.r.t. the raw output.
  Vec u_hat = u_raw;
  Mat jac;
  bool has_jac = false;
  if (method == TrainMethod::Somtp || method == TrainMethod::SomtpNoDu) {
    auto corr = correct_with_jacobian(ControlSequence(u_raw), inst, cfg, tcfg.slpg);
    u_hat = corr.result.u_hat.flat();
    jac = std::move(corr.jacobian);
    has_jac = corr.result.outer_iterations > 0;
  } else if (method == TrainMethod::Dc3) {
    auto corr = dc3_correct_with_jacobian(ControlSequence(u_raw), inst, cfg, tcfg.dc3_step, tcfg.dc3_steps);
    has_jac = corr.u_hat.flat() != u_raw;
    u_hat = corr.u_hat.flat();
    jac = std::move(corr.jacobian);
  }
  const Vec du = u_hat - u_raw;
  const PointEval p = evaluate_point(u_hat, inst, cfg);
  s.violation = p.residuals.cwiseMax(0.0);
  s.abs_du = du.cwiseAbs();
  s.du_sq = du.squaredNorm();

  Vec grad_hat = p.objective_grad;
  s.loss = p.objective;
  Vec grad_du = Vec::Zero(dim);

  if (uses_alm(method)) {
    const Eigen::Index m = static_cast<Eigen::Index>(inst.obstacles.size());
    for (Eigen::Index row = 0; row < p.residuals.size(); ++row) {
      const double h = s.violation[row];
      if (h <= 0.0) continue;
      const double lam = alm.lambda_c(row / m, row % m);
      s.loss += lam * h + 0.5 * alm.mu_c * h * h;
      grad_hat.noalias() += (lam + alm.mu_c * h) * p.residual_grads.row(row).transpose();
    }
    if (method == TrainMethod::Somtp) {
      s.loss += alm.lambda_du.dot(s.abs_du) + 0.5 * alm.mu_du * s.du_sq;
      for (Eigen::Index c = 0; c < dim; ++c) {
        const double sign = du[c] > 0.0 ? 1.0 : (du[c] < 0.0 ? -1.0 : 0.0);
        grad_du[c] = alm.lambda_du[c] * sign + alm.mu_du * du[c];
      }
    }
  } else {
    // Penalty and DC3 share the soft loss.
    for (Eigen::Index row = 0; row < p.residuals.size(); ++row) {
      const double h = s.violation[row];
      if (h <= 0.0) continue;
      s.loss += tcfg.lambda_g * h * h;
      grad_hat.noalias() += 2.0 * tcfg.lambda_g * h * p.residual_grads.row(row).transpose();
    }
  }

  // du = u_hat - u_raw, so dL/du_raw = jac^T (dL/du_hat + dL/d du) - dL/d du.
  const Vec total_hat = grad_hat + grad_du;
  s.grad_u = (has_jac ? Vec(jac.transpose() * total_hat) : total_hat) - grad_du;
  return s;
}

}  // namespace

std::string to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::Somtp: return "somtp";
    case TrainMethod::SomtpNoDu: return "somtp_no_du";
    case TrainMethod::AlmOnly: return "alm";
    case TrainMethod::Penalty: return "penalty";
    case TrainMethod::Dc3: return "dc3";
    case TrainMethod::Mse: return "mse";
    case TrainMethod::Mae: return "mae";
  }
  return "unknown";
}

TrainMethod parse_method(std::string_view name) {
  for (TrainMethod m : {TrainMethod::Somtp, TrainMethod::SomtpNoDu, TrainMethod::AlmOnly,
                        TrainMethod::Penalty, TrainMethod::Dc3, TrainMethod::Mse, TrainMethod::Mae}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown training method '" + std::string(name) + "'");
}

AlmState AlmState::initial(const PlannerConfig& cfg, int n_obs) {
  AlmState s;
  s.lambda_c = Mat::Zero(cfg.horizon, n_obs);
  s.lambda_du = Vec::Zero(cfg.dim());
  return s;
}

void AlmState::validate() const {
  if ((lambda_c.array() < 0.0).any() || (lambda_du.array() < 0.0).any())
    throw std::invalid_argument("multipliers must be nonnegative");
  if (!(mu_c > 0.0 && mu_c <= mu_c_max) || !(mu_du > 0.0 && mu_du <= mu_du_max))
    throw std::invalid_argument("penalties must lie in (0, mu_max]");
  if (!(eps_c > 1.0) || !(eps_du > 1.0)) throw std::invalid_argument("penalty growth factors must exceed 1");
}

double alm_loss(const ControlSequence& u_hat, const Vec& du, const ProblemInstance& inst,
                const AlmState& alm, const PlannerConfig& cfg) {
  const ResidualMatrix rm = all_residuals(u_hat, inst.obstacles, cfg);
  if (rm.rows() != alm.lambda_c.rows() || rm.cols() != alm.lambda_c.cols() ||
      du.size() != alm.lambda_du.size()) {
    throw MismatchError("multiplier shapes do not match the instance");
  }
  const Mat h = rm.cwiseMax(0.0);
  return objective_value(u_hat, inst, cfg) + alm.lambda_c.cwiseProduct(h).sum() +
         0.5 * alm.mu_c * h.squaredNorm() + alm.lambda_du.dot(du.cwiseAbs()) +
         0.5 * alm.mu_du * du.squaredNorm();
}

double penalty_loss(const ControlSequence& u_hat, const ProblemInstance& inst, double lambda_g,
                    const PlannerConfig& cfg) {
  if (!(lambda_g > 0.0)) throw std::invalid_argument("lambda_g must be positive");
  const ResidualMatrix rm = all_residuals(u_hat, inst.obstacles, cfg);
  return objective_value(u_hat, inst, cfg) + lambda_g * rm.cwiseMax(0.0).squaredNorm();
}

double supervised_loss(const ControlSequence& u, const ControlSequence& target, SupervisedMode mode) {
  if (u.flat().size() != target.flat().size()) {
    throw std::invalid_argument("supervised loss needs sequences of equal length");
  }
  const Vec diff = u.flat() - target.flat();
  const double n = static_cast<double>(diff.size());
  if (n == 0.0) return 0.0;
  return mode == SupervisedMode::Mse ? diff.squaredNorm() / n : diff.cwiseAbs().sum() / n;
}

AlmState update_multipliers(AlmState alm, const Mat& mean_violation, const Vec& mean_abs_du) {
  if (mean_violation.size() > 0) alm.lambda_c += alm.mu_c * mean_violation;
  if (mean_abs_du.size() > 0) alm.lambda_du += alm.mu_du * mean_abs_du;
  return alm;
}

AlmState update_penalties(AlmState alm, double epoch_mean_h_sq, double epoch_mean_du_sq) {
  if (!alm.beta_initialized) {
    alm.beta_c = epoch_mean_h_sq;
    alm.beta_du = epoch_mean_du_sq;
    alm.beta_initialized = true;
    return alm;
  }
  if (epoch_mean_h_sq < alm.beta_c / alm.eps_c) {
    alm.beta_c = epoch_mean_h_sq;
    alm.mu_c = std::min(alm.eps_c * alm.mu_c, alm.mu_c_max);
  }
  if (epoch_mean_du_sq < alm.beta_du / alm.eps_du) {
    alm.beta_du = epoch_mean_du_sq;
    alm.mu_du = std::min(alm.eps_du * alm.mu_du, alm.mu_du_max);
  }
  return alm;
}

void write_report(const TrainReport& report, const std::filesystem::path& path, bool with_seconds) {
  std::ostringstream out;
  out << "epoch,loss,mean_viol,max_viol,mean_du_sq,mu_c,mu_du";
  if (with_seconds) out << ",seconds";
  out << '\n';
  for (const EpochRecord& r : report.epochs) {
    out << r.epoch << ',' << io::format_double(r.loss) << ',' << io::format_double(r.mean_violation) << ','
        << io::format_double(r.max_violation) << ',' << io::format_double(r.mean_du_sq) << ','
        << io::format_double(r.mu_c) << ',' << io::format_double(r.mu_du);
    if (with_seconds) out << ',' << io::format_double(r.seconds);
    out << '\n';
  }
  if (report.diverged) out << "# diverged: " << report.note << '\n';
  io::write_atomic(path, out.str());
}

TrainResult train(const std::vector<ProblemInstance>& dataset, PolicyNetwork net, AlmState alm,
                  const PlannerConfig& cfg, const TrainConfig& tcfg,
                  const std::vector<ControlSequence>* targets, const EpochCallback& on_epoch) {
  TrainResult result{std::move(net), std::move(alm), {}};
  if (tcfg.epochs <= 0) return result;
  if (dataset.empty()) throw std::invalid_argument("training needs a nonempty dataset");
  if (tcfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const bool supervised = tcfg.method == TrainMethod::Mse || tcfg.method == TrainMethod::Mae;
  if (supervised && (targets == nullptr || targets->size() != dataset.size())) {
    throw std::invalid_argument("supervised training needs one target per instance");
  }
  cfg.validate();
  tcfg.slpg.validate();
  PolicyNetwork& model = result.net;
  model.check_compatible(cfg);

  const int n_obs = model.config().input_dim == 3 ? 0 : (model.config().input_dim - 3) / 3;
  Mat encodings(model.config().input_dim, static_cast<Eigen::Index>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    encodings.col(static_cast<Eigen::Index>(i)) = encode_instance(dataset[i], n_obs);
  }
  AlmState& state = result.alm;
  if (uses_alm(tcfg.method) && (state.lambda_c.rows() != cfg.horizon || state.lambda_c.cols() != n_obs)) {
    throw MismatchError("ALM multiplier table does not match horizon x obstacles");
  }

  Optimizer optimizer(tcfg.optimizer);
  std::mt19937_64 shuffle_rng(tcfg.seed);
  std::mt19937_64 dropout_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  model.set_training(true);

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    double viol_sum = 0.0;
    double viol_max = 0.0;
    double du_sq_sum = 0.0;
    double h_sq_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(tcfg.batch_size), order.size() - start);
      Mat inputs(encodings.rows(), static_cast<Eigen::Index>(count));
      for (std::size_t b = 0; b < count; ++b) inputs.col(static_cast<Eigen::Index>(b)) = encodings.col(static_cast<Eigen::Index>(order[start + b]));

      ForwardTape tape;
      const Mat outputs = model.forward_batch(inputs, &tape, &dropout_rng);

      std::vector<SampleResult> samples(count);
      parallel_for(count, [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        samples[b] = run_sample(outputs.col(static_cast<Eigen::Index>(b)), dataset[idx], cfg, tcfg, state,
                                supervised ? &(*targets)[idx] : nullptr);
      });

      // Fixed-order reduction keeps runs bit-identical.
      Mat d_out(outputs.rows(), outputs.cols());
      double batch_loss = 0.0;
      Vec mean_h = Vec::Zero(static_cast<Eigen::Index>(cfg.horizon) * n_obs);
      Vec mean_abs_du = Vec::Zero(cfg.dim());
      for (std::size_t b = 0; b < count; ++b) {
        const SampleResult& s = samples[b];
        d_out.col(static_cast<Eigen::Index>(b)) = s.grad_u / static_cast<double>(count);
        batch_loss += s.loss;
        if (s.violation.size() > 0) {
          viol_sum += s.violation.sum();
          viol_max = std::max(viol_max, s.violation.maxCoeff());
          h_sq_sum += s.violation.squaredNorm();
          mean_h += s.violation;
        }
        mean_abs_du += s.abs_du;
        du_sq_sum += s.du_sq;
      }
      if (!std::isfinite(batch_loss) || !d_out.allFinite()) {
        result.report.diverged = true;
        result.report.note = "non-finite loss in epoch " + std::to_string(epoch);
        model.set_training(false);
        return result;
      }
      loss_sum += batch_loss;

      optimizer.step(model, model.backward(tape, d_out));

      if (uses_alm(tcfg.method)) {
        mean_h /= static_cast<double>(count);
        mean_abs_du /= static_cast<double>(count);
        Mat mean_h_table(cfg.horizon, n_obs);
        for (int k = 0; k < cfg.horizon; ++k)
          for (int j = 0; j < n_obs; ++j) mean_h_table(k, j) = mean_h[k * n_obs + j];
        if (tcfg.method != TrainMethod::Somtp) mean_abs_du.setZero();
        state = update_multipliers(std::move(state), mean_h_table, mean_abs_du);
      }
    }

    const double n = static_cast<double>(dataset.size());
    if (uses_alm(tcfg.method)) {
      const double du_mean = tcfg.method == TrainMethod::Somtp ? du_sq_sum / n : 0.0;
      const double mu_du_before = state.mu_du;
      state = update_penalties(std::move(state), h_sq_sum / n, du_mean);
      if (tcfg.method != TrainMethod::Somtp) state.mu_du = mu_du_before;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / n;
    rec.mean_violation = viol_sum / n;
    rec.max_violation = viol_max;
    rec.mean_du_sq = du_sq_sum / n;
    rec.mu_c = state.mu_c;
    rec.mu_du = state.mu_du;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  model.set_training(false);
  return result;
}

}  // namespace somtp
