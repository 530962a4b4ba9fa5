#pragma once

#include <Eigen/Dense>

namespace symcon {

// Rows of `basis` are an orthonormal basis of M; rows of `complement` of M⊥.
struct Subspace {
  Eigen::MatrixXd basis;       // p x n
  Eigen::MatrixXd complement;  // (n - p) x n

  int dimension() const { return static_cast<int>(basis.rows()); }
  int ambient() const { return static_cast<int>(basis.cols()); }
  bool trivial() const { return basis.rows() == 0; }

  /// Distance of x from M in the 2-norm.
  double distance(const Eigen::VectorXd& x) const { return (complement * x).norm(); }

  /// Orthonormality and complementarity residual (max abs entry).
  double orthogonality_error() const;
};

/// Deterministic orthonormal basis of the row space of `rows` (treated as
/// exact up to 1e-10 relative rank tolerance): reduced row echelon form with
/// pivots taken in column order, then Gram-Schmidt.
Eigen::MatrixXd canonical_basis(const Eigen::MatrixXd& rows, int ambient);

/// Orthonormal rows spanning the orthogonal complement of the row space of B.
/// B must have orthonormal rows (within 1e-10). Householder QR of Bᵀ supplies
/// the completion; the result is then put in canonical form.
Eigen::MatrixXd complement_basis(const Eigen::MatrixXd& B);

/// Subspace from a p x n matrix whose rows span M.
Subspace subspace_from_span(const Eigen::MatrixXd& rows, int ambient);

}  // namespace symcon
