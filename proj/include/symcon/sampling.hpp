#pragma once

// Boxes and low-discrepancy sample sets over them.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace symcon {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

// Named axis-aligned box. Names refer to state components or inputs.
struct Box {
  std::vector<std::string> names;
  std::vector<Interval> ranges;

  std::size_t size() const { return names.size(); }
  std::optional<Interval> find(std::string_view name) const;
  void set(const std::string& name, Interval r);  // replaces or appends
};

/// `count` points of a Halton sequence in [0,1)^dim, rotated by a random shift
/// drawn from `seed` (Cranley-Patterson), so different seeds give different but
/// equally well spread sets.
Eigen::MatrixXd halton_points(int count, int dim, std::uint64_t seed);

/// Rows are sample points in the box: the box vertices first (when there are at
/// most 2^12 of them), then `count` low-discrepancy points.
Eigen::MatrixXd box_points(const Box& box, int count, std::uint64_t seed, bool include_vertices = true);

/// `count` uniform points in [lo, hi] including both ends (count >= 2), or just lo
/// when the interval is degenerate.
std::vector<double> linspace(Interval r, int count);

}  // namespace symcon
