#include "symcon/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "symcon/error.hpp"

namespace symcon {

Trajectory::Trajectory(std::vector<std::string> names, double t0, const Eigen::VectorXd& x0)
    : names_(std::move(names)), times_{t0}, states_{x0} {
  if (static_cast<int>(names_.size()) != x0.size()) throw DimensionError("trajectory: names and state sizes differ");
}

void Trajectory::append(double t, const Eigen::VectorXd& x, Eigen::MatrixXd q) {
  if (!(t > times_.back())) throw PreconditionError("trajectory times must increase strictly");
  times_.push_back(t);
  states_.push_back(x);
  coeffs_.push_back(std::move(q));
}

std::size_t Trajectory::interval(double t) const {
  const double slack = 1e-12 * std::max(1.0, std::abs(times_.back()));
  if (t < times_.front() - slack || t > times_.back() + slack)
    throw PreconditionError("trajectory: t = " + std::to_string(t) + " outside [" + std::to_string(times_.front()) +
                            ", " + std::to_string(times_.back()) + "]");
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
  return std::min(k, coeffs_.size() - 1);
}

Eigen::VectorXd Trajectory::at(double t) const {
  if (coeffs_.empty()) return states_.front();
  std::size_t k = interval(t);
  const double h = times_[k + 1] - times_[k];
  const double th = std::clamp((t - times_[k]) / h, 0.0, 1.0);
  if (th == 1.0) return states_[k + 1];
  Eigen::Vector4d p(th, th * th, th * th * th, th * th * th * th);
  return states_[k] + h * (coeffs_[k] * p);
}

double Trajectory::at(double t, int component) const { return at(t)[component]; }

Eigen::MatrixXd Trajectory::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(times_.size()), dimension());
  for (std::size_t k = 0; k < times_.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = states_[k].transpose();
  return m;
}

double Series::max() const { return max_after(-std::numeric_limits<double>::infinity()); }

double Series::max_after(double t0) const {
  double m = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (t[k] >= t0) m = std::max(m, v[k]);
  return m;
}

double Series::settles_below(double level) const {
  double when = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = t.size(); k-- > 0;) {
    if (v[k] > level) break;
    when = t[k];
  }
  return when;
}

Eigen::MatrixXd hermite_coefficients(const Eigen::VectorXd& x0, const Eigen::VectorXd& f0, const Eigen::VectorXd& x1,
                                     const Eigen::VectorXd& f1, double h) {
  Eigen::VectorXd d = (x1 - x0) / h;
  Eigen::MatrixXd q(x0.size(), 4);
  q.col(0) = f0;
  q.col(1) = 3 * d - 2 * f0 - f1;
  q.col(2) = f0 + f1 - 2 * d;
  q.col(3).setZero();
  return q;
}

}  // namespace symcon
