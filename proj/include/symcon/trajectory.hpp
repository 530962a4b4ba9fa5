#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace symcon {

// Solution on the accepted step grid. Between t_k and t_{k+1} (h = t_{k+1} - t_k)
// the state is y_k + h·Q_k·[θ, θ², θ³, θ⁴]ᵀ with θ = (t - t_k)/h; Q_k is n x 4.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::vector<std::string> names, double t0, const Eigen::VectorXd& x0);

  /// Append the step ending at (t, x) with its interpolation coefficients.
  void append(double t, const Eigen::VectorXd& x, Eigen::MatrixXd q);

  std::size_t size() const { return times_.size(); }
  int dimension() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& times() const { return times_; }
  double t0() const { return times_.front(); }
  double t_end() const { return times_.back(); }
  const Eigen::VectorXd& state(std::size_t k) const { return states_[k]; }
  const Eigen::VectorXd& final_state() const { return states_.back(); }

  /// Dense output; t must lie in [t0, t_end].
  Eigen::VectorXd at(double t) const;
  double at(double t, int component) const;

  /// State matrix on the stored grid (rows are times).
  Eigen::MatrixXd matrix() const;

  std::string model_hash;
  std::vector<std::string> warnings;

 private:
  std::size_t interval(double t) const;

  std::vector<std::string> names_;
  std::vector<double> times_;
  std::vector<Eigen::VectorXd> states_;
  std::vector<Eigen::MatrixXd> coeffs_;  // one per interval
};

// A scalar time series.
struct Series {
  std::vector<double> t;
  std::vector<double> v;

  double max() const;
  double max_after(double t0) const;
  /// Earliest grid time after which the series stays at or below `level`; NaN if never.
  double settles_below(double level) const;
};

/// Coefficients of the cubic Hermite interpolant through (x0, f0) and (x1, f1)
/// over a step of length h, in the layout used by Trajectory.
Eigen::MatrixXd hermite_coefficients(const Eigen::VectorXd& x0, const Eigen::VectorXd& f0, const Eigen::VectorXd& x1,
                                     const Eigen::VectorXd& f1, double h);

}  // namespace symcon
