#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

namespace somtp::detail {

// Upper bound on forward-mode derivative directions. Storage is inline so the
// dual numbers never touch the heap; it caps differentiable correction at
// horizon 32.
inline constexpr int kMaxDerivatives = 64;

using DerivativeVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDerivatives, 1>;
using Dual = Eigen::AutoDiffScalar<DerivativeVec>;

template <typename T>
using Vec3T = Eigen::Matrix<T, 3, 1>;
template <typename T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

// Constants must carry a zero derivative of the right length: Eigen's AutoDiff
// only reconciles empty derivatives when one operand is a plain vector, so an
// empty one inside a compound expression silently corrupts the result.
inline double constant_like(double v, double) { return v; }
inline Dual constant_like(double v, const Dual& like) {
  return Dual(v, DerivativeVec::Zero(like.derivatives().size()));
}

template <typename T>
Eigen::VectorXd values(const VecT<T>& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = value_of(v[i]);
  return out;
}

template <typename T>
Eigen::MatrixXd values(const MatT<T>& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = value_of(m(i, j));
  return out;
}

/// Seeds each entry of `u` as an independent forward-mode direction.
inline VecT<Dual> seed(const Eigen::VectorXd& u) {
  const auto n = u.size();
  VecT<Dual> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = Dual(u[i], DerivativeVec::Unit(n, i));
  }
  return out;
}

/// Row i of the result is d(out_i)/d(seed).
inline Eigen::MatrixXd jacobian(const VecT<Dual>& out, Eigen::Index n_dirs) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(out.size(), n_dirs);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const auto& d = out[i].derivatives();
    if (d.size() == n_dirs) J.row(i) = d.transpose();
  }
  return J;
}

template <typename T>
T relu(const T& x) {
  return value_of(x) > 0.0 ? x : constant_like(0.0, x);
}

/// Clamp whose derivative is zero on the clamped side.
template <typename T>
T clamp(const T& x, double lo, double hi) {
  if (value_of(x) < lo) return constant_like(lo, x);
  if (value_of(x) > hi) return constant_like(hi, x);
  return x;
}

}  // namespace somtp::detail
