#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "serm/errors.hpp"
#include "serm/scorer.hpp"

namespace serm {

enum class CostKind { Quadratic, WeightedQuadratic, LinearSeparable, Mixture };

// Exact keeps max{0, .} for the linear part; Smoothed swaps in softplus_beta so
// the response layer has curvature to work with.
enum class CostMode { Exact, Smoothed };

inline const char* to_string(CostKind k) {
  switch (k) {
    case CostKind::Quadratic: return "quadratic";
    case CostKind::WeightedQuadratic: return "weighted_quadratic";
    case CostKind::LinearSeparable: return "linear";
    case CostKind::Mixture: return "mixture";
  }
  return "?";
}

inline CostKind cost_kind_from_string(const std::string& s) {
  if (s == "quadratic") return CostKind::Quadratic;
  if (s == "weighted_quadratic") return CostKind::WeightedQuadratic;
  if (s == "linear") return CostKind::LinearSeparable;
  if (s == "mixture") return CostKind::Mixture;
  throw InvalidConfig("unknown cost kind '" + s + "'");
}

template <typename Scalar>
Scalar softplus(Scalar z, Scalar beta) {
  const Scalar bz = beta * z;
  return (std::max(bz, Scalar(0)) + std::log1p(std::exp(-std::abs(bz)))) / beta;
}

template <typename Scalar>
Scalar logistic(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// Modification cost c(x, x'), scaled uniformly by `scale`.
//   Quadratic          t * |x' - x|^2
//   WeightedQuadratic  t * sum_i v_i (x'_i - x_i)^2
//   LinearSeparable    t * max{0, v . (x' - x)}
//   Mixture            t * ((1 - gamma) max{0, v . (x' - x)} + gamma |x' - x|^2)
template <typename Scalar>
struct CostSpec {
  CostKind kind = CostKind::Quadratic;
  VectorX<Scalar> v;
  Scalar gamma = Scalar(1);
  Scalar beta = Scalar(50);
  Scalar scale = Scalar(1);

  static CostSpec quadratic(Scalar t = Scalar(1)) {
    CostSpec c;
    c.kind = CostKind::Quadratic;
    c.scale = t;
    c.validate();
    return c;
  }
  static CostSpec weighted_quadratic(VectorX<Scalar> weights, Scalar t = Scalar(1)) {
    CostSpec c;
    c.kind = CostKind::WeightedQuadratic;
    c.v = std::move(weights);
    c.scale = t;
    c.validate();
    return c;
  }
  static CostSpec linear_separable(VectorX<Scalar> dir, Scalar softness = Scalar(50),
                                   Scalar t = Scalar(1)) {
    CostSpec c;
    c.kind = CostKind::LinearSeparable;
    c.v = std::move(dir);
    c.gamma = Scalar(0);
    c.beta = softness;
    c.scale = t;
    c.validate();
    return c;
  }
  static CostSpec mixture(Scalar mix, VectorX<Scalar> dir, Scalar softness = Scalar(50),
                          Scalar t = Scalar(1)) {
    CostSpec c;
    c.kind = CostKind::Mixture;
    c.v = std::move(dir);
    c.gamma = mix;
    c.beta = softness;
    c.scale = t;
    c.validate();
    return c;
  }

  void validate() const {
    if (!(scale > Scalar(0)) || !std::isfinite(static_cast<double>(scale)))
      throw InvalidConfig("cost scale must be positive and finite");
    switch (kind) {
      case CostKind::Quadratic: break;
      case CostKind::WeightedQuadratic:
        if (v.size() == 0 || (v.array() <= Scalar(0)).any() || !v.allFinite())
          throw InvalidConfig("weighted quadratic cost needs strictly positive weights");
        break;
      case CostKind::Mixture:
        if (!(gamma > Scalar(0) && gamma <= Scalar(1)))
          throw InvalidConfig("mixture gamma must lie in (0, 1]");
        [[fallthrough]];
      case CostKind::LinearSeparable:
        if (v.size() == 0 || !v.allFinite()) throw InvalidConfig("linear cost needs a finite direction v");
        if (!(beta > Scalar(0))) throw InvalidConfig("softplus sharpness beta must be positive");
        break;
    }
  }

  bool has_linear_part() const {
    return kind == CostKind::LinearSeparable || kind == CostKind::Mixture;
  }

  // Number of learnable cost parameters (the vector v); Quadratic has none.
  Eigen::Index num_params() const { return kind == CostKind::Quadratic ? 0 : v.size(); }

  // Smallest eigenvalue of the quadratic component's Hessian / 2. Positive
  // means strictly convex and a bounded argmax.
  Scalar quadratic_coefficient() const {
    switch (kind) {
      case CostKind::Quadratic: return scale;
      case CostKind::WeightedQuadratic: return scale * v.minCoeff();
      case CostKind::LinearSeparable: return Scalar(0);
      case CostKind::Mixture: return scale * gamma;
    }
    return Scalar(0);
  }

  // Per-coordinate weights p with quadratic part = t * sum p_i d_i^2.
  VectorX<Scalar> quadratic_weights(Eigen::Index d) const {
    switch (kind) {
      case CostKind::Quadratic: return VectorX<Scalar>::Ones(d);
      case CostKind::WeightedQuadratic: return v;
      case CostKind::LinearSeparable: return VectorX<Scalar>::Zero(d);
      case CostKind::Mixture: return VectorX<Scalar>::Constant(d, gamma);
    }
    return VectorX<Scalar>::Zero(d);
  }

  // Returns a copy with v replaced (used when v is a learned parameter).
  CostSpec with_params(const VectorX<Scalar>& params) const {
    CostSpec c = *this;
    if (kind != CostKind::Quadratic) c.v = params;
    return c;
  }

  void check_dims(Eigen::Index d) const {
    if (kind != CostKind::Quadratic && v.size() != d)
      throw InvalidInput("cost parameter vector has wrong dimension");
  }
};

namespace detail {
template <typename Scalar>
void check_pair(const CostSpec<Scalar>& spec, const VectorX<Scalar>& x, const VectorX<Scalar>& xp) {
  if (x.size() != xp.size()) throw InvalidInput("cost arguments differ in dimension");
  spec.check_dims(x.size());
}
}  // namespace detail

template <typename Scalar>
Scalar cost(const CostSpec<Scalar>& spec, const VectorX<Scalar>& x, const VectorX<Scalar>& xp,
            CostMode mode = CostMode::Exact) {
  detail::check_pair(spec, x, xp);
  const VectorX<Scalar> d = xp - x;
  auto lin = [&](Scalar u) {
    return mode == CostMode::Exact ? std::max(Scalar(0), u) : softplus(u, spec.beta);
  };
  switch (spec.kind) {
    case CostKind::Quadratic: return spec.scale * d.squaredNorm();
    case CostKind::WeightedQuadratic: return spec.scale * (spec.v.array() * d.array().square()).sum();
    case CostKind::LinearSeparable: return spec.scale * lin(spec.v.dot(d));
    case CostKind::Mixture:
      return spec.scale * ((Scalar(1) - spec.gamma) * lin(spec.v.dot(d)) + spec.gamma * d.squaredNorm());
  }
  return Scalar(0);
}

template <typename Scalar>
struct CostDerivatives {
  VectorX<Scalar> gradient;
  MatrixX<Scalar> hessian;
};

// Gradient and Hessian of x' -> cost(x, x') in smoothed mode.
template <typename Scalar>
CostDerivatives<Scalar> cost_derivatives(const CostSpec<Scalar>& spec, const VectorX<Scalar>& x,
                                         const VectorX<Scalar>& xp) {
  detail::check_pair(spec, x, xp);
  const Eigen::Index n = x.size();
  const VectorX<Scalar> d = xp - x;
  CostDerivatives<Scalar> out;
  const VectorX<Scalar> p = spec.quadratic_weights(n);
  out.gradient = Scalar(2) * spec.scale * p.cwiseProduct(d);
  out.hessian = (Scalar(2) * spec.scale * p).asDiagonal();
  if (spec.has_linear_part()) {
    const Scalar lw = spec.scale * (Scalar(1) - spec.gamma);
    const Scalar s = logistic(spec.beta * spec.v.dot(d));
    out.gradient += lw * s * spec.v;
    out.hessian += lw * spec.beta * s * (Scalar(1) - s) * spec.v * spec.v.transpose();
  }
  return out;
}

// d cost / d v at fixed (x, x'), smoothed mode.
template <typename Scalar>
VectorX<Scalar> cost_param_gradient(const CostSpec<Scalar>& spec, const VectorX<Scalar>& x,
                                    const VectorX<Scalar>& xp) {
  detail::check_pair(spec, x, xp);
  const VectorX<Scalar> d = xp - x;
  switch (spec.kind) {
    case CostKind::Quadratic: return VectorX<Scalar>(0);
    case CostKind::WeightedQuadratic: return spec.scale * d.array().square().matrix();
    case CostKind::LinearSeparable:
    case CostKind::Mixture: {
      const Scalar s = logistic(spec.beta * spec.v.dot(d));
      return spec.scale * (Scalar(1) - spec.gamma) * s * d;
    }
  }
  return VectorX<Scalar>(0);
}

// d (grad_x' cost) / d v, a d x p matrix, smoothed mode.
template <typename Scalar>
MatrixX<Scalar> cost_gradient_param_jacobian(const CostSpec<Scalar>& spec, const VectorX<Scalar>& x,
                                             const VectorX<Scalar>& xp) {
  detail::check_pair(spec, x, xp);
  const VectorX<Scalar> d = xp - x;
  switch (spec.kind) {
    case CostKind::Quadratic: return MatrixX<Scalar>(x.size(), 0);
    case CostKind::WeightedQuadratic: return (Scalar(2) * spec.scale * d).asDiagonal();
    case CostKind::LinearSeparable:
    case CostKind::Mixture: {
      const Scalar lw = spec.scale * (Scalar(1) - spec.gamma);
      const Scalar s = logistic(spec.beta * spec.v.dot(d));
      MatrixX<Scalar> J = lw * spec.beta * s * (Scalar(1) - s) * spec.v * d.transpose();
      J.diagonal().array() += lw * s;
      return J;
    }
  }
  return MatrixX<Scalar>(x.size(), 0);
}

}  // namespace serm
