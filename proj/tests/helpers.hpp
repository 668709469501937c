#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <type_traits>

#include "serm/objectives.hpp"

namespace th {

using Eigen::VectorXd;

inline VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

inline serm::Scorer scorer(std::initializer_list<double> w, double b) { return serm::Scorer(vec(w), b); }

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

// Fourth-order central difference of t -> f(t) at 0; f may return a scalar
// or an Eigen vector.
template <typename F>
auto fd(F&& f, double h) {
  using R = decltype(f(0.0));
  if constexpr (std::is_arithmetic_v<R>) {
    return (8.0 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12.0 * h);
  } else {
    return Eigen::VectorXd((8.0 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12.0 * h));
  }
}

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
  VectorXd normal_vec(Eigen::Index d, double sd = 1.0) {
    VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = sd * normal();
    return v;
  }
};

// Two well-separated 2D Gaussian blobs, labels balanced.
inline serm::Dataset blobs(Eigen::Index n, double sep, double sd, std::uint64_t seed) {
  Rng r(seed);
  serm::Dataset d;
  d.X.resize(n, 2);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = i % 2 == 0 ? 1.0 : -1.0;
    d.X(i, 0) = y * sep + sd * r.normal();
    d.X(i, 1) = sd * r.normal();
    d.y(i) = y;
  }
  return d;
}

}  // namespace th
