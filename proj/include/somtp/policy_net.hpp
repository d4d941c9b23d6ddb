#pragma once

#include "somtp/types.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace somtp {

struct NetworkConfig {
  int n_layers = 5;        // hidden fully-connected blocks
  int hidden_dim = 256;
  double dropout_rate = 0.3;
  int input_dim = 12;      // 3 + 3 * n_obs
  int output_dim = 40;     // 2N

  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

inline int encoding_dim(int n_obs) { return 3 + 3 * n_obs; }

/// [goal x, goal y, goal phi, (x, y, r) per obstacle]. Throws MismatchError
/// when the obstacle count differs from `expected_obstacles`.
Vec encode_instance(const ProblemInstance& inst, int expected_obstacles);

/// Activations recorded by a forward pass, consumed by `backward`.
struct ForwardTape {
  Mat input;
  std::vector<Mat> hidden_pre;   // pre-activation of every hidden block
  std::vector<Mat> hidden_out;   // after ReLU and dropout
  std::vector<Mat> dropout_mask; // inverted-scaling masks, empty when inactive
  Mat head;                      // tanh output in [-1, 1]

  bool recorded() const { return input.size() > 0; }
};

struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  void add(const Gradients& other);
  void scale(double s);
  double squared_norm() const;
};

class PolicyNetwork {
 public:
  struct Layer {
    Mat weight;  // out x in
    Vec bias;
  };

  PolicyNetwork() = default;
  /// Uniform(+-1/sqrt(fan_in)) initialization from `seed`.
  PolicyNetwork(const NetworkConfig& cfg, const PlannerConfig& planner, std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Control u_min() const { return u_min_; }
  Control u_max() const { return u_max_; }
  std::uint64_t planner_hash() const { return planner_hash_; }

  /// Free-form tag written into checkpoints (the training method).
  const std::string& tag() const { return tag_; }
  void set_tag(std::string tag) { tag_ = std::move(tag); }

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }

  /// Inference on one encoding; dropout is never applied.
  ControlSequence forward(const Vec& encoding) const;

  /// Column-batched pass returning one control vector per column. In training
  /// mode dropout masks are drawn from `rng`, which must then be non-null.
  Mat forward_batch(const Mat& inputs, ForwardTape* tape = nullptr,
                    std::mt19937_64* rng = nullptr) const;

  /// Reverse pass for a scalar loss whose gradient w.r.t. the output controls
  /// is `d_output` (same shape as the forward output). Throws std::logic_error
  /// without a recorded tape.
  Gradients backward(const ForwardTape& tape, const Mat& d_output) const;

  Gradients zero_gradients() const;

  /// Raises MismatchError unless the network was built for `planner`.
  void check_compatible(const PlannerConfig& planner) const;

  void save(const std::filesystem::path& path) const;
  static PolicyNetwork load(const std::filesystem::path& path);

  friend bool operator==(const PolicyNetwork& a, const PolicyNetwork& b);

 private:
  Mat run(const Mat& inputs, ForwardTape* tape, std::mt19937_64* rng, bool dropout) const;

  NetworkConfig cfg_;
  std::vector<Layer> layers_;
  Control u_min_;
  Control u_max_;
  std::uint64_t planner_hash_ = 0;
  std::string tag_;
  bool training_ = false;
};

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// theta <- theta - lr * grad, or its Adam variant.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}
  void step(PolicyNetwork& net, const Gradients& grads);

 private:
  OptimizerConfig cfg_;
  Gradients m_;
  Gradients v_;
  long steps_ = 0;
};

}  // namespace somtp
