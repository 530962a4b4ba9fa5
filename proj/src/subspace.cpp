#include "symcon/subspace.hpp"

#include <algorithm>
#include <cmath>

#include "symcon/error.hpp"

namespace symcon {

double Subspace::orthogonality_error() const {
  double err = 0.0;
  const int p = dimension(), q = static_cast<int>(complement.rows());
  if (p > 0) err = std::max(err, (basis * basis.transpose() - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff());
  if (q > 0)
    err = std::max(err, (complement * complement.transpose() - Eigen::MatrixXd::Identity(q, q)).cwiseAbs().maxCoeff());
  if (p > 0 && q > 0) err = std::max(err, (basis * complement.transpose()).cwiseAbs().maxCoeff());
  return err;
}

Eigen::MatrixXd canonical_basis(const Eigen::MatrixXd& rows, int ambient) {
  if (rows.rows() == 0) return Eigen::MatrixXd(0, ambient);
  Eigen::MatrixXd a = rows;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  const double tol = 1e-10 * scale;
  int r = 0;
  for (int c = 0; c < a.cols() && r < a.rows(); ++c) {
    Eigen::Index pivot;
    double best = a.col(c).tail(a.rows() - r).cwiseAbs().maxCoeff(&pivot);
    if (best <= tol) continue;
    pivot += r;
    a.row(r).swap(a.row(pivot));
    a.row(r) /= a(r, c);
    for (int i = 0; i < a.rows(); ++i)
      if (i != r && a(i, c) != 0.0) a.row(i) -= a(i, c) * a.row(r);
    ++r;
  }
  Eigen::MatrixXd out = a.topRows(r);
  // Gram-Schmidt, twice for stability.
  for (int i = 0; i < r; ++i) {
    for (int pass = 0; pass < 2; ++pass)
      for (int k = 0; k < i; ++k) out.row(i) -= out.row(i).dot(out.row(k)) * out.row(k);
    out.row(i).normalize();
  }
  return out;
}

Eigen::MatrixXd complement_basis(const Eigen::MatrixXd& B) {
  const int n = static_cast<int>(B.cols()), p = static_cast<int>(B.rows());
  if (p > 0 && (B * B.transpose() - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() > 1e-10)
    throw PreconditionError("complement_basis: rows of B are not orthonormal");
  if (p == 0) return Eigen::MatrixXd::Identity(n, n);
  if (p >= n) return Eigen::MatrixXd(0, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(B.transpose());
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd rest = q.rightCols(n - p).transpose();
  return canonical_basis(rest, n);
}

Subspace subspace_from_span(const Eigen::MatrixXd& rows, int ambient) {
  Subspace s;
  s.basis = canonical_basis(rows, ambient);
  s.complement = complement_basis(s.basis);
  return s;
}

}  // namespace symcon
