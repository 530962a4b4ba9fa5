#include "symcon/sampling.hpp"

#include <random>

namespace symcon {

std::optional<Interval> Box::find(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return ranges[i];
  return std::nullopt;
}

void Box::set(const std::string& name, Interval r) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) {
      ranges[i] = r;
      return;
    }
  names.push_back(name);
  ranges.push_back(r);
}

namespace {

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
                           73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163,
                           167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229};

double radical_inverse(std::uint64_t i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

Eigen::MatrixXd halton_points(int count, int dim, std::uint64_t seed) {
  Eigen::MatrixXd out(count, dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> shift(dim);
  for (auto& s : shift) s = u(rng);
  constexpr int kNumPrimes = sizeof kPrimes / sizeof kPrimes[0];
  for (int d = 0; d < dim; ++d) {
    int base = kPrimes[d % kNumPrimes];
    // Dimensions past the prime table reuse bases with a different index stride.
    std::uint64_t stride = 1 + d / kNumPrimes;
    for (int i = 0; i < count; ++i) {
      double v = radical_inverse(static_cast<std::uint64_t>(i + 1) * stride, base) + shift[d];
      out(i, d) = v - std::floor(v);
    }
  }
  return out;
}

Eigen::MatrixXd box_points(const Box& box, int count, std::uint64_t seed, bool include_vertices) {
  const int dim = static_cast<int>(box.size());
  int vertices = 0;
  if (include_vertices && dim <= 12) vertices = 1 << dim;
  Eigen::MatrixXd unit = halton_points(count, dim, seed);
  Eigen::MatrixXd out(vertices + count, dim);
  for (int v = 0; v < vertices; ++v)
    for (int d = 0; d < dim; ++d) out(v, d) = (v >> d) & 1 ? box.ranges[d].hi : box.ranges[d].lo;
  for (int i = 0; i < count; ++i)
    for (int d = 0; d < dim; ++d) out(vertices + i, d) = box.ranges[d].lo + unit(i, d) * box.ranges[d].width();
  return out;
}

std::vector<double> linspace(Interval r, int count) {
  if (r.hi <= r.lo || count < 2) return {r.lo};
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = r.lo + (r.hi - r.lo) * i / (count - 1);
  out.back() = r.hi;
  return out;
}

}  // namespace symcon
