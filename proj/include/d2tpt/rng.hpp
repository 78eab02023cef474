#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "d2tpt/numerics.hpp"

namespace d2tpt {

// Portable seeded normal source. mt19937_64 is fully specified by the
// standard but the std distributions are not, so uniforms and normals are
// derived from the raw 64-bit output here.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform_open();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform in (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform_open() * static_cast<double>(n)) % n;
  }

  // Vector of independent N(0, sd^2) entries.
  Vec normal(Eigen::Index dim, double sd = 1.0) {
    Vec v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = sd * (*this)();
    return v;
  }

  Mat matrix(Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = normal(cols, sd).transpose();
    return m;
  }

  Vec unit(Eigen::Index dim) { return l2_normalize(normal(dim)); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace d2tpt
