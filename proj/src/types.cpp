#include "somtp/types.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace somtp {

namespace {

class Fnv1a {
 public:
  void add(std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (word >> (8 * i)) & 0xffu;
      state_ *= 0x100000001b3ull;
    }
  }
  void add(double d) { add(std::bit_cast<std::uint64_t>(d)); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

}  // namespace

void PlannerConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("invalid planner config: " + what);
  };
  if (horizon < 1) fail("horizon must be >= 1");
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(wheelbase > 0.0)) fail("wheelbase must be positive");
  for (double w : q_weights)
    if (!(w > 0.0)) fail("Q weights must be positive");
  for (double w : r_weights)
    if (!(w > 0.0)) fail("R weights must be positive");
  if (!(gamma_cbf > 0.0 && gamma_cbf <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(robot_radius >= 0.0) || !(expansion >= 0.0)) fail("radii must be nonnegative");
  if (!(u_min.v < u_max.v) || !(u_min.q < u_max.q)) fail("u_min must be below u_max");
  if (std::abs(u_min.q) >= M_PI / 2 || std::abs(u_max.q) >= M_PI / 2)
    fail("steering bounds must stay inside (-pi/2, pi/2)");
}

std::uint64_t PlannerConfig::hash() const {
  Fnv1a h;
  h.add(static_cast<std::uint64_t>(horizon));
  h.add(dt);
  h.add(wheelbase);
  for (double w : q_weights) h.add(w);
  for (double w : r_weights) h.add(w);
  h.add(gamma_cbf);
  h.add(robot_radius);
  h.add(expansion);
  h.add(u_min.v);
  h.add(u_min.q);
  h.add(u_max.v);
  h.add(u_max.q);
  return h.digest();
}

Vec PlannerConfig::lower_bounds() const {
  Vec lo(dim());
  for (int k = 0; k < horizon; ++k) {
    lo[2 * k] = u_min.v;
    lo[2 * k + 1] = u_min.q;
  }
  return lo;
}

Vec PlannerConfig::upper_bounds() const {
  Vec hi(dim());
  for (int k = 0; k < horizon; ++k) {
    hi[2 * k] = u_max.v;
    hi[2 * k + 1] = u_max.q;
  }
  return hi;
}

Vec PlannerConfig::control_weight_diagonal() const {
  Vec w(dim());
  for (int k = 0; k < horizon; ++k) {
    w[2 * k] = r_weights[0];
    w[2 * k + 1] = r_weights[1];
  }
  return w;
}

ControlSequence::ControlSequence(Vec flat) : flat_(std::move(flat)) {
  if (flat_.size() % 2 != 0) {
    throw std::invalid_argument("control vector length must be even");
  }
}

bool ControlSequence::within(const PlannerConfig& cfg) const {
  if (horizon() != cfg.horizon) return false;
  for (int k = 0; k < horizon(); ++k) {
    const Control c = (*this)[k];
    if (!(c.v >= cfg.u_min.v && c.v <= cfg.u_max.v)) return false;
    if (!(c.q >= cfg.u_min.q && c.q <= cfg.u_max.q)) return false;
  }
  return true;
}

}  // namespace somtp
