#include "somtp/policy_net.hpp"

#include "somtp/error.hpp"
#include "somtp/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace somtp {

namespace {

constexpr char kMagic[8] = {'S', 'O', 'M', 'T', 'P', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(int v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  int i32() { return static_cast<int>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("checkpoint is truncated or corrupt");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

Mat relu_mask(const Mat& z) { return (z.array() > 0.0).cast<double>().matrix(); }

}  // namespace

void NetworkConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("network needs at least one hidden layer");
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (output_dim < 2 || output_dim % 2 != 0)
    throw std::invalid_argument("output_dim must be a positive even number");
}

Vec encode_instance(const ProblemInstance& inst, int expected_obstacles) {
  const int m = static_cast<int>(inst.obstacles.size());
  if (m != expected_obstacles) {
    throw MismatchError("instance has " + std::to_string(m) + " obstacles, expected " +
                        std::to_string(expected_obstacles));
  }
  Vec e(encoding_dim(m));
  e[0] = inst.goal.x;
  e[1] = inst.goal.y;
  e[2] = inst.goal.phi;
  for (int j = 0; j < m; ++j) {
    e[3 + 3 * j] = inst.obstacles[j].x;
    e[4 + 3 * j] = inst.obstacles[j].y;
    e[5 + 3 * j] = inst.obstacles[j].r;
  }
  return e;
}

void Gradients::add(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
}

void Gradients::scale(double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    total += weights[l].squaredNorm() + biases[l].squaredNorm();
  return total;
}

PolicyNetwork::PolicyNetwork(const NetworkConfig& cfg, const PlannerConfig& planner,
                             std::uint64_t seed)
    : cfg_(cfg), u_min_(planner.u_min), u_max_(planner.u_max), planner_hash_(planner.hash()) {
  cfg_.validate();
  planner.validate();
  if (cfg_.output_dim != planner.dim()) {
    throw MismatchError("network output_dim must equal 2 * horizon");
  }
  std::mt19937_64 rng(seed);
  int fan_in = cfg_.input_dim;
  for (int l = 0; l <= cfg_.n_layers; ++l) {
    const int fan_out = l == cfg_.n_layers ? cfg_.output_dim : cfg_.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Mat(fan_out, fan_in), Vec(fan_out)};
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) layer.weight(i, j) = dist(rng);
    for (int i = 0; i < fan_out; ++i) layer.bias[i] = dist(rng);
    layers_.push_back(std::move(layer));
    fan_in = fan_out;
  }
}

ControlSequence PolicyNetwork::forward(const Vec& encoding) const {
  return ControlSequence(Vec(run(encoding, nullptr, nullptr, false).col(0)));
}

Mat PolicyNetwork::forward_batch(const Mat& inputs, ForwardTape* tape,
                                 std::mt19937_64* rng) const {
  const bool dropout = training_ && cfg_.dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw std::logic_error("training-mode forward needs a dropout rng");
  return run(inputs, tape, rng, dropout);
}

Mat PolicyNetwork::run(const Mat& inputs, ForwardTape* tape, std::mt19937_64* rng,
                       bool dropout) const {
  if (layers_.empty()) throw std::logic_error("network has no layers");
  if (inputs.rows() != cfg_.input_dim) {
    throw MismatchError("encoding has " + std::to_string(inputs.rows()) + " entries, network expects " +
                        std::to_string(cfg_.input_dim));
  }
  if (tape) {
    *tape = ForwardTape{};
    tape->input = inputs;
  }
  Mat act = inputs;
  const double keep = 1.0 - cfg_.dropout_rate;
  std::bernoulli_distribution coin(keep);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    Mat z = layers_[l].weight * act;
    z.colwise() += layers_[l].bias;
    act = z.cwiseMax(0.0);
    Mat mask;
    if (dropout) {
      mask.resize(act.rows(), act.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = coin(*rng) ? 1.0 / keep : 0.0;
      act = act.cwiseProduct(mask);
    }
    if (tape) {
      tape->hidden_pre.push_back(std::move(z));
      tape->hidden_out.push_back(act);
      tape->dropout_mask.push_back(std::move(mask));
    }
  }
  const Layer& head = layers_.back();
  Mat z = head.weight * act;
  z.colwise() += head.bias;
  Mat t = z.array().tanh().matrix();

  Mat u(t.rows(), t.cols());
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    const double lo = i % 2 == 0 ? u_min_.v : u_min_.q;
    const double hi = i % 2 == 0 ? u_max_.v : u_max_.q;
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      u(i, j) = std::clamp(lo + (t(i, j) + 1.0) / 2.0 * (hi - lo), lo, hi);
    }
  }
  if (tape) tape->head = std::move(t);
  return u;
}

Gradients PolicyNetwork::backward(const ForwardTape& tape, const Mat& d_output) const {
  if (!tape.recorded()) throw std::logic_error("backward called without a recorded forward pass");
  if (d_output.rows() != cfg_.output_dim || d_output.cols() != tape.head.cols()) {
    throw MismatchError("downstream gradient shape does not match the recorded forward pass");
  }
  Gradients g = zero_gradients();

  // Box rescale and tanh.
  Mat dz(d_output.rows(), d_output.cols());
  for (Eigen::Index i = 0; i < dz.rows(); ++i) {
    const double half = i % 2 == 0 ? (u_max_.v - u_min_.v) / 2.0 : (u_max_.q - u_min_.q) / 2.0;
    for (Eigen::Index j = 0; j < dz.cols(); ++j) {
      const double t = tape.head(i, j);
      dz(i, j) = d_output(i, j) * half * (1.0 - t * t);
    }
  }

  const int L = cfg_.n_layers;
  for (int l = L; l >= 0; --l) {
    const Mat& in = l == 0 ? tape.input : tape.hidden_out[l - 1];
    g.weights[l].noalias() = dz * in.transpose();
    g.biases[l] = dz.rowwise().sum();
    if (l == 0) break;
    Mat da = layers_[l].weight.transpose() * dz;
    if (tape.dropout_mask[l - 1].size() > 0) da = da.cwiseProduct(tape.dropout_mask[l - 1]);
    dz = da.cwiseProduct(relu_mask(tape.hidden_pre[l - 1]));
  }
  return g;
}

Gradients PolicyNetwork::zero_gradients() const {
  Gradients g;
  for (const Layer& layer : layers_) {
    g.weights.push_back(Mat::Zero(layer.weight.rows(), layer.weight.cols()));
    g.biases.push_back(Vec::Zero(layer.bias.size()));
  }
  return g;
}

void PolicyNetwork::check_compatible(const PlannerConfig& planner) const {
  if (cfg_.output_dim != planner.dim()) {
    throw MismatchError("checkpoint outputs " + std::to_string(cfg_.output_dim / 2) +
                        " steps but the planner horizon is " + std::to_string(planner.horizon));
  }
  if (planner_hash_ != planner.hash()) {
    throw MismatchError("checkpoint was trained with a different planner configuration");
  }
}

void PolicyNetwork::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.i32(cfg_.n_layers);
  w.i32(cfg_.hidden_dim);
  w.f64(cfg_.dropout_rate);
  w.i32(cfg_.input_dim);
  w.i32(cfg_.output_dim);
  w.u64(planner_hash_);
  w.f64(u_min_.v);
  w.f64(u_min_.q);
  w.f64(u_max_.v);
  w.f64(u_max_.q);
  w.u32(static_cast<std::uint32_t>(tag_.size()));
  w.bytes(tag_.data(), tag_.size());
  for (const Layer& layer : layers_) {
    w.i32(static_cast<int>(layer.weight.rows()));
    w.i32(static_cast<int>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) w.f64(layer.weight(i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) w.f64(layer.bias[i]);
  }
  io::write_atomic(path, w.str());
}

PolicyNetwork PolicyNetwork::load(const std::filesystem::path& path) {
  ByteReader r(io::read_file(path));
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("not a policy checkpoint: " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  PolicyNetwork net;
  net.cfg_.n_layers = r.i32();
  net.cfg_.hidden_dim = r.i32();
  net.cfg_.dropout_rate = r.f64();
  net.cfg_.input_dim = r.i32();
  net.cfg_.output_dim = r.i32();
  try {
    net.cfg_.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  net.planner_hash_ = r.u64();
  net.u_min_.v = r.f64();
  net.u_min_.q = r.f64();
  net.u_max_.v = r.f64();
  net.u_max_.q = r.f64();
  const std::uint32_t tag_len = r.u32();
  if (tag_len > 256) throw FormatError("corrupt checkpoint tag");
  net.tag_ = r.bytes(tag_len);

  int fan_in = net.cfg_.input_dim;
  for (int l = 0; l <= net.cfg_.n_layers; ++l) {
    const int fan_out = l == net.cfg_.n_layers ? net.cfg_.output_dim : net.cfg_.hidden_dim;
    const int rows = r.i32();
    const int cols = r.i32();
    if (rows != fan_out || cols != fan_in) throw FormatError("checkpoint layer shape mismatch");
    Layer layer{Mat(rows, cols), Vec(rows)};
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) layer.weight(i, j) = r.f64();
    for (int i = 0; i < rows; ++i) layer.bias[i] = r.f64();
    net.layers_.push_back(std::move(layer));
    fan_in = fan_out;
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return net;
}

bool operator==(const PolicyNetwork& a, const PolicyNetwork& b) {
  if (!(a.cfg_ == b.cfg_) || a.planner_hash_ != b.planner_hash_ || a.tag_ != b.tag_) return false;
  if (!(a.u_min_ == b.u_min_) || !(a.u_max_ == b.u_max_)) return false;
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
  }
  return true;
}

void Optimizer::step(PolicyNetwork& net, const Gradients& grads) {
  auto& layers = net.layers();
  if (cfg_.kind == OptimizerKind::Sgd) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= cfg_.learning_rate * grads.weights[l];
      layers[l].bias -= cfg_.learning_rate * grads.biases[l];
    }
    return;
  }
  if (m_.weights.empty()) {
    m_ = net.zero_gradients();
    v_ = net.zero_gradients();
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    param.array() -= cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weights[l], m_.weights[l], v_.weights[l]);
    update(layers[l].bias, grads.biases[l], m_.biases[l], v_.biases[l]);
  }
}

}  // namespace somtp
