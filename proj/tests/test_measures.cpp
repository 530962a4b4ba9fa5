#include <cmath>
#include <random>

#include "doctest.h"
#include "symcon/measures.hpp"

using namespace symcon;
using Eigen::MatrixXd;

namespace {

MatrixXd mat2(double a, double b, double c, double d) {
  MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

// Independent oracles. 1 and inf norms by the column/row sum definition.
double oracle_norm(const MatrixXd& a, Norm n) {
  if (n == Norm::Infinity) return oracle_norm(a.transpose(), Norm::One);
  double best = 0;
  for (int j = 0; j < a.cols(); ++j) {
    double s = 0;
    for (int i = 0; i < a.rows(); ++i) s += std::abs(a(i, j));
    best = std::max(best, s);
  }
  if (n == Norm::One) return best;
  // 2-norm: largest eigenvalue of AᵀA from the general eigensolver
  return std::sqrt(Eigen::EigenSolver<MatrixXd>(a.transpose() * a).eigenvalues().real().maxCoeff());
}

// (‖I + hA‖ - 1)/h. For the 2-norm ‖I + hA‖² = 1 + h·λmax(A + Aᵀ + hAᵀA), which
// avoids cancellation in σ - 1.
double oracle_limit(const MatrixXd& a, Norm n, double h) {
  if (n == Norm::Two) {
    MatrixXd s = a + a.transpose() + h * a.transpose() * a;
    double lam = Eigen::EigenSolver<MatrixXd>(s).eigenvalues().real().maxCoeff();
    return lam / (std::sqrt(1 + h * lam) + 1);
  }
  MatrixXd m = MatrixXd::Identity(a.rows(), a.cols()) + h * a;
  return (oracle_norm(m, n) - 1) / h;
}

MatrixXd random_matrix(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return a;
}

}  // namespace

TEST_CASE("table formulas on a triangular example") {
  MatrixXd a = mat2(-2, 1, 0, -3);
  CHECK(matrix_measure(a, Norm::One) == -2.0);
  CHECK(matrix_measure(a, Norm::Infinity) == -1.0);
  // symmetric part [[-2, .5], [.5, -3]]: λ = (-5 ± sqrt(1 + 1))/2
  double tr = -5, det = 6 - 0.25;
  double lam = (tr + std::sqrt(tr * tr - 4 * det)) / 2;
  CHECK(lam == doctest::Approx(-1.7928932).epsilon(1e-7));
  CHECK(matrix_measure(a, Norm::Two) == doctest::Approx(lam).epsilon(1e-12));
}

TEST_CASE("zero matrix has zero measure") {
  for (int n : {1, 3, 6})
    for (Norm k : {Norm::One, Norm::Two, Norm::Infinity}) CHECK(matrix_measure(MatrixXd::Zero(n, n), k) == 0.0);
}

TEST_CASE("limit estimates") {
  MatrixXd a = mat2(-2, 1, 0, -3);
  CHECK(measure_limit_estimate(a, Norm::One, 1e-6) == doctest::Approx(-2).epsilon(1e-4));
  CHECK(std::abs(measure_limit_estimate(MatrixXd::Identity(2, 2), Norm::Two, 1e-6) - 1) <= 1e-6);
  CHECK(std::abs(measure_limit_estimate(mat2(0, 1, -1, 0), Norm::Two, 1e-6)) <= 1e-6);
  CHECK_THROWS_AS(measure_limit_estimate(a, Norm::One, 0.1), PreconditionError);
}

TEST_CASE("induced norms") {
  CHECK(induced_norm(mat2(1, 0, 0, -2), Norm::Infinity) == 2.0);
  CHECK(induced_norm(mat2(0, 1, 0, 0), Norm::One) == 1.0);
  MatrixXd row(1, 2);
  row << 3, 4;
  CHECK(induced_norm(row, Norm::Two) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(induced_norm(row, Norm::One) == 4.0);
  CHECK(induced_norm(row, Norm::Infinity) == 7.0);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(matrix_measure(MatrixXd::Zero(2, 3), Norm::One), DimensionError);
  MatrixXd singular = mat2(1, 2, 2, 4);
  CHECK_THROWS_AS(matrix_measure(mat2(1, 0, 0, 1), MeasureKind(Norm::One, singular)), DimensionError);
  CHECK(norm_from_string("inf") == Norm::Infinity);
  CHECK_THROWS_AS(norm_from_string("3"), Error);
}

TEST_CASE("measure equals limit quotient on random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    int n = 1 + trial % 8;
    MatrixXd a = random_matrix(rng, n);
    for (Norm k : {Norm::One, Norm::Two, Norm::Infinity}) {
      double mu = matrix_measure(a, k);
      double lim = oracle_limit(a, k, 1e-7);
      CHECK(std::abs(mu - lim) <= 1e-4 * (1 + oracle_norm(a, k)));
      CHECK(std::abs(measure_limit_estimate(a, k, 1e-7) - lim) <= 1e-4 * (1 + oracle_norm(a, k)));
    }
  }
}

TEST_CASE("subadditivity and spectral bound") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + trial % 6;
    MatrixXd a = random_matrix(rng, n), b = random_matrix(rng, n);
    double abscissa = Eigen::EigenSolver<MatrixXd>(a).eigenvalues().real().maxCoeff();
    for (Norm k : {Norm::One, Norm::Two, Norm::Infinity}) {
      CHECK(matrix_measure(MatrixXd(a + b), k) <= matrix_measure(a, k) + matrix_measure(b, k) + 1e-12);
      CHECK(matrix_measure(a, k) >= abscissa - 1e-10);
    }
  }
}

TEST_CASE("weighted measure is the unweighted measure of the conjugate") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + trial % 5;
    MatrixXd a = random_matrix(rng, n);
    MatrixXd theta = random_matrix(rng, n) + 3 * MatrixXd::Identity(n, n);
    MatrixXd conj = weighted_conjugate(a, theta);
    for (Norm k : {Norm::One, Norm::Two, Norm::Infinity})
      CHECK(matrix_measure(a, MeasureKind(k, theta)) == matrix_measure(conj, k));
    // conjugation preserves the spectrum
    CHECK(conj.trace() == doctest::Approx(a.trace()).epsilon(1e-10));
  }
  MatrixXd a = mat2(-1, 0, -100, -1);
  MatrixXd theta = mat2(1, 0, 0, 0.001);
  CHECK(matrix_measure(a, Norm::One) > 0);
  CHECK(matrix_measure(a, MeasureKind(Norm::One, theta)) < 0);
}

TEST_CASE("works for float scalars") {
  Eigen::MatrixXf a(2, 2);
  a << -2, 1, 0, -3;
  CHECK(matrix_measure(a, Norm::One) == -2.0f);
  CHECK(matrix_measure(a, Norm::Two) == doctest::Approx(-1.7928932).epsilon(1e-5));
}
