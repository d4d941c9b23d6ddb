#pragma once

// Scalar-generic kernels behind vehicle_model, cbf_constraints and objective.
// Instantiated with double for the public API and with a forward-mode dual
// number when the correction step has to be differentiated.

#include "somtp/detail/autodiff.hpp"
#include "somtp/types.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace somtp::detail {

using std::cos;
using std::sin;
using std::tan;

template <typename T>
Vec3T<T> step(const Vec3T<T>& x, const T& v, const T& q, const PlannerConfig& cfg) {
  Vec3T<T> next;
  next(0) = x(0) + v * cos(x(2)) * cfg.dt;
  next(1) = x(1) + v * sin(x(2)) * cfg.dt;
  next(2) = x(2) + v * tan(q) / cfg.wheelbase * cfg.dt;
  return next;
}

template <typename T>
void step_jacobians(const Vec3T<T>& x, const T& v, const T& q, const PlannerConfig& cfg,
                    Eigen::Matrix<T, 3, 3>& A, Eigen::Matrix<T, 3, 2>& B) {
  const T c = cos(x(2));
  const T s = sin(x(2));
  const T cq = cos(q);
  const T zero = constant_like(0.0, v);
  const T one = constant_like(1.0, v);
  A << one, zero, zero, zero, one, zero, zero, zero, one;
  A(0, 2) = -v * s * cfg.dt;
  A(1, 2) = v * c * cfg.dt;
  B(0, 0) = c * cfg.dt;
  B(1, 0) = s * cfg.dt;
  B(2, 0) = tan(q) / cfg.wheelbase * cfg.dt;
  B(0, 1) = zero;
  B(1, 1) = zero;
  B(2, 1) = v * cfg.dt / (cfg.wheelbase * cq * cq);
}

/// States x_0..x_N from the zero initial pose.
template <typename T>
std::vector<Vec3T<T>> rollout(const VecT<T>& u, const PlannerConfig& cfg) {
  const int n = static_cast<int>(u.size() / 2);
  std::vector<Vec3T<T>> xs(n + 1);
  xs[0].setConstant(constant_like(0.0, u[0]));
  for (int k = 0; k < n; ++k) xs[k + 1] = step<T>(xs[k], u[2 * k], u[2 * k + 1], cfg);
  return xs;
}

/// J[k] = dx_k/du as a dense 3 x 2N block row; columns >= 2k are zero.
template <typename T>
std::vector<MatT<T>> rollout_jacobian(const VecT<T>& u, const std::vector<Vec3T<T>>& xs,
                                      const PlannerConfig& cfg) {
  const int n = static_cast<int>(u.size() / 2);
  std::vector<MatT<T>> J(n + 1, MatT<T>::Constant(3, 2 * n, constant_like(0.0, u[0])));
  Eigen::Matrix<T, 3, 3> A;
  Eigen::Matrix<T, 3, 2> B;
  for (int k = 0; k < n; ++k) {
    step_jacobians<T>(xs[k], u[2 * k], u[2 * k + 1], cfg, A, B);
    // Written out so dual scalars never go through Eigen's product kernels.
    for (int c = 0; c < 2 * k; ++c)
      for (int r = 0; r < 3; ++r)
        J[k + 1](r, c) = A(r, 0) * J[k](0, c) + A(r, 1) * J[k](1, c) + A(r, 2) * J[k](2, c);
    J[k + 1].template block<3, 2>(0, 2 * k) = B;
  }
  return J;
}

inline double inflated_radius(const Obstacle& o, const PlannerConfig& cfg) {
  return o.r + cfg.robot_radius + cfg.expansion;
}

template <typename T>
T barrier(const Vec3T<T>& x, const Obstacle& o, double radius) {
  const T dx = x(0) - o.x;
  const T dy = x(1) - o.y;
  return dx * dx + dy * dy - radius * radius;
}

/// Flat residual vector, entry k * n_obs + j couples x_k, x_{k+1} and obstacle j.
template <typename T>
VecT<T> residuals(const std::vector<Vec3T<T>>& xs, std::span<const Obstacle> obstacles,
                  const PlannerConfig& cfg) {
  const int n = static_cast<int>(xs.size()) - 1;
  const int m = static_cast<int>(obstacles.size());
  VecT<T> r(n * m);
  for (int j = 0; j < m; ++j) {
    const double rad = inflated_radius(obstacles[j], cfg);
    T h_now = barrier<T>(xs[0], obstacles[j], rad);
    for (int k = 0; k < n; ++k) {
      const T h_next = barrier<T>(xs[k + 1], obstacles[j], rad);
      r[k * m + j] = -(h_next - h_now) - cfg.gamma_cbf * h_now;
      h_now = h_next;
    }
  }
  return r;
}

/// Rows match `residuals`; columns are the flattened controls.
template <typename T>
MatT<T> residual_gradients(const std::vector<Vec3T<T>>& xs, const std::vector<MatT<T>>& J,
                           std::span<const Obstacle> obstacles, const PlannerConfig& cfg) {
  const int n = static_cast<int>(xs.size()) - 1;
  const int m = static_cast<int>(obstacles.size());
  MatT<T> G = MatT<T>::Constant(n * m, 2 * n, constant_like(0.0, xs[0](0)));
  const double keep = 1.0 - cfg.gamma_cbf;
  for (int j = 0; j < m; ++j) {
    const Obstacle& o = obstacles[j];
    for (int k = 0; k < n; ++k) {
      const int row = k * m + j;
      // -dH(x_{k+1}) J_{k+1}; only the first 2(k+1) columns can be nonzero.
      const int cols_next = 2 * (k + 1);
      const T gx1 = -2.0 * (xs[k + 1](0) - o.x);
      const T gy1 = -2.0 * (xs[k + 1](1) - o.y);
      for (int c = 0; c < cols_next; ++c) {
        G(row, c) = gx1 * J[k + 1](0, c) + gy1 * J[k + 1](1, c);
      }
      if (k > 0) {
        const T gx0 = (2.0 * keep) * (xs[k](0) - o.x);
        const T gy0 = (2.0 * keep) * (xs[k](1) - o.y);
        for (int c = 0; c < 2 * k; ++c) {
          G(row, c) += gx0 * J[k](0, c) + gy0 * J[k](1, c);
        }
      }
    }
  }
  return G;
}

template <typename T>
T objective(const VecT<T>& u, const std::vector<Vec3T<T>>& xs, const State& goal,
            const PlannerConfig& cfg) {
  const int n = static_cast<int>(u.size() / 2);
  T total = constant_like(0.0, u[0]);
  const double g[3] = {goal.x, goal.y, goal.phi};
  for (int k = 1; k <= n; ++k) {
    for (int i = 0; i < 3; ++i) {
      const T e = xs[k](i) - g[i];
      total += cfg.q_weights[i] * e * e;
    }
  }
  for (int k = 0; k < n; ++k) {
    total += cfg.r_weights[0] * u[2 * k] * u[2 * k] + cfg.r_weights[1] * u[2 * k + 1] * u[2 * k + 1];
  }
  return total;
}

template <typename T>
VecT<T> objective_gradient(const VecT<T>& u, const std::vector<Vec3T<T>>& xs,
                           const std::vector<MatT<T>>& J, const State& goal,
                           const PlannerConfig& cfg) {
  const int n = static_cast<int>(u.size() / 2);
  VecT<T> grad(2 * n);
  for (int k = 0; k < n; ++k) {
    grad[2 * k] = (2.0 * cfg.r_weights[0]) * u[2 * k];
    grad[2 * k + 1] = (2.0 * cfg.r_weights[1]) * u[2 * k + 1];
  }
  const double g[3] = {goal.x, goal.y, goal.phi};
  for (int k = 1; k <= n; ++k) {
    for (int i = 0; i < 3; ++i) {
      const T w = (2.0 * cfg.q_weights[i]) * (xs[k](i) - g[i]);
      for (int c = 0; c < 2 * k; ++c) grad[c] += w * J[k](i, c);
    }
  }
  return grad;
}

}  // namespace somtp::detail
