#pragma once

// Induced norms and matrix measures (logarithmic norms) for the 1, 2 and
// infinity vector norms, optionally in a weighted coordinate frame Θ.

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "symcon/error.hpp"

namespace symcon {

enum class Norm { One, Two, Infinity };

std::string to_string(Norm n);
Norm norm_from_string(const std::string& s);  // "1", "2", "inf" (also "one", "two", "infinity")

struct MeasureKind {
  Norm base = Norm::Two;
  std::optional<Eigen::MatrixXd> weight;  // Θ; the measure is μ(Θ A Θ⁻¹)

  MeasureKind() = default;
  MeasureKind(Norm n) : base(n) {}  // NOLINT: implicit by design, a bare norm is the common case
  MeasureKind(Norm n, Eigen::MatrixXd theta) : base(n), weight(std::move(theta)) {}
};

namespace detail {

template <class Derived>
void require_square(const Eigen::MatrixBase<Derived>& a, const char* what) {
  if (a.rows() != a.cols())
    throw DimensionError(std::string(what) + ": matrix is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", expected square");
}

template <class Derived>
typename Derived::Scalar column_measure(const Eigen::MatrixBase<Derived>& a) {
  using S = typename Derived::Scalar;
  S best = -std::numeric_limits<S>::infinity();
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    S v = a(j, j) + a.col(j).cwiseAbs().sum() - std::abs(a(j, j));
    best = std::max(best, v);
  }
  return a.cols() == 0 ? S(0) : best;
}

}  // namespace detail

/// Θ A Θ⁻¹. Θ⁻¹ comes from an LU with partial pivoting; a pivot below 1e-12 in
/// magnitude means Θ is treated as singular.
template <class Derived, class WeightDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> weighted_conjugate(
    const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<WeightDerived>& theta) {
  using S = typename Derived::Scalar;
  using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square(theta, "weight");
  if (theta.rows() != a.rows()) throw DimensionError("weight and matrix sizes differ");
  Eigen::PartialPivLU<M> lu(M(theta.template cast<S>()));
  const M& lum = lu.matrixLU();
  for (Eigen::Index i = 0; i < lum.rows(); ++i)
    if (std::abs(lum(i, i)) < S(1e-12)) throw DimensionError("weight matrix is singular");
  M theta_inv = lu.inverse();
  return theta.template cast<S>() * a * theta_inv;
}

/// Induced operator norm; rectangular matrices are accepted.
template <class Derived>
typename Derived::Scalar induced_norm(const Eigen::MatrixBase<Derived>& a, Norm base) {
  using S = typename Derived::Scalar;
  if (a.size() == 0) return S(0);
  switch (base) {
    case Norm::One: return a.cwiseAbs().colwise().sum().maxCoeff();
    case Norm::Infinity: return a.cwiseAbs().rowwise().sum().maxCoeff();
    case Norm::Two: {
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> m = a;
      Eigen::JacobiSVD<decltype(m)> svd(m);
      return svd.singularValues()(0);
    }
  }
  return S(0);
}

template <class Derived>
typename Derived::Scalar matrix_measure(const Eigen::MatrixBase<Derived>& a, Norm base) {
  using S = typename Derived::Scalar;
  detail::require_square(a, "matrix_measure");
  if (a.rows() == 0) return S(0);
  switch (base) {
    case Norm::One: return detail::column_measure(a);
    case Norm::Infinity: return detail::column_measure(a.transpose());
    case Norm::Two: {
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> sym = (a + a.transpose()) / S(2);
      Eigen::SelfAdjointEigenSolver<decltype(sym)> es(sym, Eigen::EigenvaluesOnly);
      return es.eigenvalues().maxCoeff();
    }
  }
  return S(0);
}

template <class Derived>
typename Derived::Scalar matrix_measure(const Eigen::MatrixBase<Derived>& a, const MeasureKind& kind) {
  if (!kind.weight) return matrix_measure(a, kind.base);
  detail::require_square(a, "matrix_measure");
  return matrix_measure(weighted_conjugate(a, *kind.weight), kind.base);
}

/// (‖I + hA‖ − 1)/h with the induced norm of the same kind. A cross-check only.
template <class Derived>
typename Derived::Scalar measure_limit_estimate(const Eigen::MatrixBase<Derived>& a, const MeasureKind& kind,
                                                double h) {
  using S = typename Derived::Scalar;
  using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square(a, "measure_limit_estimate");
  if (!(h > 0.0 && h <= 1e-3)) throw PreconditionError("measure_limit_estimate needs h in (0, 1e-3]");
  M b = kind.weight ? weighted_conjugate(a, *kind.weight) : M(a);
  M step = M::Identity(b.rows(), b.cols()) + S(h) * b;
  return (induced_norm(step, kind.base) - S(1)) / S(h);
}

}  // namespace symcon
