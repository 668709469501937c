#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "serm/cost.hpp"
#include "serm/errors.hpp"
#include "serm/scorer.hpp"
#include "serm/smooth_sign.hpp"

namespace serm {

template <typename Scalar>
struct ResponseConfig {
  Scalar tau = Scalar(1);
  Scalar tol = Scalar(1e-3);  // CCP stop: |x^t - x^{t-1}|_2 <= tol
  int max_iter = 100;
  Scalar subproblem_tol = Scalar(1e-8);

  static ResponseConfig training() { return ResponseConfig{}; }
  static ResponseConfig evaluation() {
    ResponseConfig c;
    c.tau = Scalar(0.2);
    return c;
  }

  void validate() const {
    if (!(tau > Scalar(0))) throw InvalidConfig("response tau must be positive");
    if (!(tol > Scalar(0))) throw InvalidConfig("response tol must be positive");
    if (max_iter < 1) throw InvalidConfig("response max_iter must be >= 1");
    if (!(subproblem_tol > Scalar(0))) throw InvalidConfig("subproblem tol must be positive");
  }
};

// Affine subspace {base + directions * alpha} a response is restricted to.
template <typename Scalar>
struct TangentSpec {
  VectorX<Scalar> base;
  MatrixX<Scalar> directions;  // d x k

  void validate() const {
    if (directions.cols() < 1) throw InvalidInput("tangent needs at least one direction");
    if (directions.rows() != base.size()) throw InvalidInput("tangent directions have wrong dimension");
    Eigen::FullPivLU<MatrixX<Scalar>> lu(directions);
    if (lu.rank() != directions.cols()) throw InvalidInput("tangent directions are linearly dependent");
  }
};

template <typename Scalar>
struct ResponseOutcome {
  VectorX<Scalar> x_star;
  VectorX<Scalar> g_final;
  int iterations = 0;
  bool converged = false;
  Scalar surrogate_value = Scalar(0);
  // Smoothed payoff at x^0, x^1, ..., x^t (empty on the batched fast path).
  std::vector<Scalar> payoff_trace;
};

template <typename Scalar>
struct ResponseJacobians {
  MatrixX<Scalar> d_w;  // d x k
  VectorX<Scalar> d_b;  // d
  MatrixX<Scalar> d_v;  // d x p (p = cost.num_params())
};

// FixedPoint differentiates the converged CCP fixed point (g tracked through
// x^t). FrozenLinearization holds x^t inside g^t constant and differentiates
// only the final surrogate.
enum class JacobianMode { FixedPoint, FrozenLinearization };

// sigma_tau(f(x')) - cost(x, x') with the layer's smoothed cost.
template <typename Scalar>
Scalar smoothed_payoff(const VectorX<Scalar>& x, const VectorX<Scalar>& xp, const LinearScorer<Scalar>& model,
                       const CostSpec<Scalar>& c, Scalar tau) {
  return SmoothSign<Scalar>(tau)(model.head(xp)) - cost(c, x, xp, CostMode::Smoothed);
}

// sign(f(x')) - cost(x, x') with the exact cost.
template <typename Scalar>
Scalar hard_payoff(const VectorX<Scalar>& x, const VectorX<Scalar>& xp, const LinearScorer<Scalar>& model,
                   const CostSpec<Scalar>& c) {
  return Scalar(hard_sign(model.head(xp))) - cost(c, x, xp, CostMode::Exact);
}

namespace detail {

template <typename Scalar>
MatrixX<Scalar> orthonormal_basis(const MatrixX<Scalar>& cols) {
  const Eigen::Index d = cols.rows();
  if (cols.cols() == 0 || cols.norm() == Scalar(0)) return MatrixX<Scalar>(d, 0);
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(cols);
  qr.setThreshold(Scalar(1e-12));
  const Eigen::Index r = qr.rank();
  MatrixX<Scalar> Q = qr.householderQ();
  return Q.leftCols(r);
}

// psi(x') = g . x' + sigma_cap(w . x' + b) - cost(x, x')   (concave in x')
template <typename Scalar>
struct Surrogate {
  const VectorX<Scalar>& x;
  const VectorX<Scalar>& g;
  const LinearScorer<Scalar>& model;
  const CostSpec<Scalar>& c;
  SmoothSign<Scalar> ss;

  Scalar value(const VectorX<Scalar>& xp) const {
    return g.dot(xp) + ss.concave_part(model.head(xp)) - cost(c, x, xp, CostMode::Smoothed);
  }
  VectorX<Scalar> gradient(const VectorX<Scalar>& xp) const {
    const auto cd = cost_derivatives(c, x, xp);
    return g + ss.concave_d1(model.head(xp)) * model.w - cd.gradient;
  }
  void derivatives(const VectorX<Scalar>& xp, VectorX<Scalar>& grad, MatrixX<Scalar>& hess) const {
    const auto cd = cost_derivatives(c, x, xp);
    const Scalar f = model.head(xp);
    grad = g + ss.concave_d1(f) * model.w - cd.gradient;
    hess = ss.concave_d2(f) * model.w * model.w.transpose() - cd.hessian;
  }
};

// Affine set anchor + span(basis) known to contain the subproblem maximizer.
template <typename Scalar>
struct Reduction {
  VectorX<Scalar> anchor;
  MatrixX<Scalar> basis;  // orthonormal columns
  bool constrained = false;
};

template <typename Scalar>
Reduction<Scalar> reduce(const VectorX<Scalar>& x, const VectorX<Scalar>& g, const LinearScorer<Scalar>& model,
                         const CostSpec<Scalar>& c, const TangentSpec<Scalar>* constraint) {
  const Eigen::Index d = x.size();
  Reduction<Scalar> r;
  if (constraint) {
    r.anchor = constraint->base;
    r.basis = orthonormal_basis<Scalar>(constraint->directions);
    r.constrained = true;
    return r;
  }
  // Stationarity: g + s w - grad c(x') = 0.
  if (c.kind == CostKind::Quadratic || c.kind == CostKind::WeightedQuadratic) {
    // 2 t P (x' - x) = g + s w  =>  x' = x + P^{-1} g / 2t + s P^{-1} w / 2t
    const VectorX<Scalar> p = c.quadratic_weights(d);
    r.anchor = x + g.cwiseQuotient(p) / (Scalar(2) * c.scale);
    r.basis = orthonormal_basis<Scalar>(model.w.cwiseQuotient(p));
  } else {
    // 2 t gamma (x' - x) = g + s w - t (1 - gamma) q v
    r.anchor = x + g / (Scalar(2) * c.scale * c.gamma);
    MatrixX<Scalar> span(d, 2);
    span << model.w, c.v;
    r.basis = orthonormal_basis<Scalar>(span);
  }
  return r;
}

template <typename Scalar>
Scalar stationarity_residual(const Surrogate<Scalar>& s, const Reduction<Scalar>& red, const VectorX<Scalar>& xp) {
  const VectorX<Scalar> grad = s.gradient(xp);
  if (red.constrained) return (red.basis.transpose() * grad).norm();
  return grad.norm();
}

// Exact line maximization along direction q by bisection on the (decreasing)
// directional derivative.
template <typename Scalar>
VectorX<Scalar> bisect_along(const Surrogate<Scalar>& s, const VectorX<Scalar>& start, const VectorX<Scalar>& q,
                             Scalar tol) {
  auto deriv = [&](Scalar a) { return q.dot(s.gradient(start + a * q)); };
  Scalar d0 = deriv(Scalar(0));
  if (std::abs(d0) <= tol) return start;
  Scalar lo = 0, hi = 0, span = 1;
  if (d0 > 0) {
    hi = span;
    while (deriv(hi) > 0) {
      lo = hi;
      span *= 2;
      hi = span;
      if (span > Scalar(1e12)) throw SolverFailure("bisection bracket diverged");
    }
  } else {
    lo = -span;
    while (deriv(lo) < 0) {
      hi = lo;
      span *= 2;
      lo = -span;
      if (span > Scalar(1e12)) throw SolverFailure("bisection bracket diverged");
    }
  }
  Scalar mid = Scalar(0.5) * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = Scalar(0.5) * (lo + hi);
    const Scalar dm = deriv(mid);
    if (std::abs(dm) <= tol * Scalar(0.01) || hi - lo <= std::numeric_limits<Scalar>::epsilon() * (1 + std::abs(mid)))
      break;
    (dm > 0 ? lo : hi) = mid;
  }
  return start + mid * q;
}

}  // namespace detail

// Unique maximizer of psi(x') = g . x' + sigma_cap(w . x' + b) - cost(x, x'),
// optionally restricted to a tangent subspace. Only the linear head of `model`
// is used: x lives in representation space.
template <typename Scalar>
VectorX<Scalar> solve_concave_subproblem(const VectorX<Scalar>& x, const VectorX<Scalar>& g,
                                         const LinearScorer<Scalar>& model, const CostSpec<Scalar>& c,
                                         const ResponseConfig<Scalar>& cfg,
                                         const TangentSpec<Scalar>* constraint = nullptr) {
  if (g.size() != x.size() || model.w.size() != x.size()) throw InvalidInput("subproblem dimensions disagree");
  c.check_dims(x.size());
  if (!(c.quadratic_coefficient() > Scalar(0)))
    throw InvalidInput("response layer needs a cost with a strictly positive quadratic component");

  const detail::Surrogate<Scalar> s{x, g, model, c, SmoothSign<Scalar>(cfg.tau)};
  const detail::Reduction<Scalar> red = detail::reduce(x, g, model, c, constraint);
  const MatrixX<Scalar>& Q = red.basis;
  const Eigen::Index r = Q.cols();
  if (r == 0) return red.anchor;

  const Scalar tol = cfg.subproblem_tol;
  VectorX<Scalar> alpha = VectorX<Scalar>::Zero(r);
  VectorX<Scalar> xp = red.anchor;
  VectorX<Scalar> grad;
  MatrixX<Scalar> hess;
  bool done = false;
  int polish = 0;
  for (int it = 0; it < 100; ++it) {
    s.derivatives(xp, grad, hess);
    const VectorX<Scalar> gr = Q.transpose() * grad;
    const Scalar resid = red.constrained ? gr.norm() : grad.norm();
    if (!std::isfinite(static_cast<double>(resid))) break;
    // Once within tolerance, take up to two more Newton steps to reach
    // machine precision.
    if (resid <= tol) {
      if (polish++ >= 2 || resid == Scalar(0)) {
        done = true;
        break;
      }
    }
    const MatrixX<Scalar> Hr = Q.transpose() * hess * Q;
    const VectorX<Scalar> step = (-Hr).ldlt().solve(gr);
    const Scalar slope = gr.dot(step);
    const Scalar v0 = s.value(xp);
    Scalar t = 1;
    VectorX<Scalar> cand = xp + Q * step;
    while (s.value(cand) < v0 + Scalar(1e-4) * t * slope && t > Scalar(1e-12)) {
      t *= Scalar(0.5);
      cand = xp + t * (Q * step);
    }
    if (t <= Scalar(1e-12)) {
      // No ascent possible at working precision.
      done = resid <= tol;
      break;
    }
    alpha += t * step;
    xp = cand;
  }
  if (done) return xp;

  // Fallback: cyclic exact line maximization along each reduced coordinate.
  xp = red.anchor;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    for (Eigen::Index j = 0; j < r; ++j) xp = detail::bisect_along(s, xp, VectorX<Scalar>(Q.col(j)), tol);
    if (detail::stationarity_residual(s, red, xp) <= tol) return xp;
  }
  throw SolverFailure("concave subproblem did not converge");
}

namespace detail {

template <typename Scalar>
void check_response_inputs(const VectorX<Scalar>& x, const LinearScorer<Scalar>& model, const CostSpec<Scalar>& c,
                           const ResponseConfig<Scalar>& cfg) {
  cfg.validate();
  c.validate();
  if (model.w.size() != x.size()) throw InvalidInput("model and input dimensions disagree");
  if (!x.allFinite()) throw InvalidInput("input point is not finite");
  c.check_dims(x.size());
  if (!(c.quadratic_coefficient() > Scalar(0)))
    throw InvalidInput("response layer needs a cost with a strictly positive quadratic component");
}

template <typename Scalar>
ResponseOutcome<Scalar> run_ccp(const VectorX<Scalar>& x, const LinearScorer<Scalar>& model,
                                const CostSpec<Scalar>& c, const ResponseConfig<Scalar>& cfg,
                                const TangentSpec<Scalar>* constraint) {
  check_response_inputs(x, model, c, cfg);
  const SmoothSign<Scalar> ss(cfg.tau);
  ResponseOutcome<Scalar> out;
  VectorX<Scalar> prev = x;
  VectorX<Scalar> g = ss.convex_d1(model.head(prev)) * model.w;
  out.payoff_trace.push_back(smoothed_payoff(x, prev, model, c, cfg.tau));
  for (int t = 1; t <= cfg.max_iter; ++t) {
    g = ss.convex_d1(model.head(prev)) * model.w;
    VectorX<Scalar> next = solve_concave_subproblem(x, g, model, c, cfg, constraint);
    if (!next.allFinite()) {
      std::vector<double> trace(out.payoff_trace.begin(), out.payoff_trace.end());
      throw SolverFailure("CCP iterate became non-finite", trace);
    }
    const Scalar step = (next - prev).norm();
    out.payoff_trace.push_back(smoothed_payoff(x, next, model, c, cfg.tau));
    out.iterations = t;
    prev = std::move(next);
    if (step <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  // Surrogate of the last subproblem (linearized at x^{t-1}) evaluated at x^t.
  const Surrogate<Scalar> s{x, g, model, c, ss};
  out.x_star = prev;
  out.g_final = ss.convex_d1(model.head(prev)) * model.w;
  out.surrogate_value = s.value(prev);
  return out;
}

}  // namespace detail

// Smoothed best response by the convex-concave procedure:
//   x^0 = x;  g = grad sigma_cup(f(x^{t-1}));
//   x^t = argmax_x' g . x' + sigma_cap(f(x')) - cost(x, x')
// until |x^t - x^{t-1}| <= tol or max_iter.
template <typename Scalar>
ResponseOutcome<Scalar> ccp_respond(const VectorX<Scalar>& x, const LinearScorer<Scalar>& model,
                                    const CostSpec<Scalar>& c, const ResponseConfig<Scalar>& cfg) {
  return detail::run_ccp<Scalar>(x, model, c, cfg, nullptr);
}

// CCP with every subproblem restricted to the tangent subspace at x.
template <typename Scalar>
ResponseOutcome<Scalar> tangent_constrained_respond(const VectorX<Scalar>& x, const LinearScorer<Scalar>& model,
                                                    const CostSpec<Scalar>& c, const TangentSpec<Scalar>& tangent,
                                                    const ResponseConfig<Scalar>& cfg) {
  tangent.validate();
  if (tangent.base.size() != x.size() ||
      (tangent.base - x).norm() > Scalar(1e-12) * (Scalar(1) + x.norm()))
    throw InvalidInput("tangent must be anchored at the responding point");
  return detail::run_ccp<Scalar>(x, model, c, cfg, &tangent);
}

// Implicit derivatives of x_star with respect to (w, b, v), from the
// stationarity condition of the final surrogate.
template <typename Scalar>
ResponseJacobians<Scalar> response_jacobians(const ResponseOutcome<Scalar>& outcome, const VectorX<Scalar>& x,
                                             const LinearScorer<Scalar>& model, const CostSpec<Scalar>& c,
                                             const ResponseConfig<Scalar>& cfg,
                                             const TangentSpec<Scalar>* constraint = nullptr,
                                             JacobianMode mode = JacobianMode::FixedPoint) {
  if (!outcome.converged) throw InvalidInput("Jacobians need a converged response");
  detail::check_response_inputs(x, model, c, cfg);
  const Eigen::Index d = x.size();
  const SmoothSign<Scalar> ss(cfg.tau);
  const VectorX<Scalar>& xs = outcome.x_star;
  const VectorX<Scalar>& w = model.w;
  const Scalar f = model.head(xs);

  const auto cd = cost_derivatives(c, x, xs);
  const Scalar curv = mode == JacobianMode::FixedPoint ? ss.d2(f) : ss.concave_d2(f);
  const MatrixX<Scalar> H = curv * w * w.transpose() - cd.hessian;

  // d(grad psi)/d theta at fixed x'.
  MatrixX<Scalar> Gw = ss.d2(f) * w * xs.transpose();
  Gw.diagonal().array() += ss.d1(f);
  const VectorX<Scalar> Gb = ss.d2(f) * w;
  const MatrixX<Scalar> Gv = -cost_gradient_param_jacobian(c, x, xs);

  const MatrixX<Scalar> Q = constraint ? detail::orthonormal_basis<Scalar>(constraint->directions)
                                       : MatrixX<Scalar>(MatrixX<Scalar>::Identity(d, d));
  const MatrixX<Scalar> Hr = Q.transpose() * H * Q;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(Hr, Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues().cwiseAbs();
  const Scalar cond = ev.maxCoeff() / ev.minCoeff();
  if (!(cond <= Scalar(1e12)))
    throw DegenerateJacobian("stationarity Hessian is ill-conditioned", static_cast<double>(cond));

  const auto lu = Hr.partialPivLu();
  ResponseJacobians<Scalar> J;
  J.d_w = -Q * lu.solve(Q.transpose() * Gw);
  J.d_b = -Q * lu.solve(Q.transpose() * Gb);
  J.d_v = Gv.cols() > 0 ? MatrixX<Scalar>(-Q * lu.solve(Q.transpose() * Gv)) : MatrixX<Scalar>(d, 0);
  return J;
}

// Hard-sign best response argmax h(x') - c(x, x') in closed form
// (Quadratic / WeightedQuadratic only). Moves to the cheapest boundary point
// when that costs strictly less than 2; ties stay.
template <typename Scalar>
VectorX<Scalar> exact_best_response(const VectorX<Scalar>& x, const LinearScorer<Scalar>& model,
                                    const CostSpec<Scalar>& c) {
  if (c.kind != CostKind::Quadratic && c.kind != CostKind::WeightedQuadratic)
    throw InvalidInput("exact best response needs a (weighted) quadratic cost");
  if (model.w.size() != x.size()) throw InvalidInput("model and input dimensions disagree");
  c.check_dims(x.size());
  if (model.w.squaredNorm() == Scalar(0)) throw InvalidInput("zero weight vector has no decision boundary");
  const Scalar f = model.head(x);
  if (f >= Scalar(0)) return x;
  const VectorX<Scalar> p = c.quadratic_weights(x.size());
  const VectorX<Scalar> u = model.w.cwiseQuotient(p);
  const Scalar kappa = model.w.dot(u);
  const Scalar move_cost = c.scale * f * f / kappa;
  if (move_cost < Scalar(2)) return x - (f / kappa) * u;
  return x;
}

// Payoff of the exact best response, computed without re-evaluating the
// sign at the (rounded) boundary point.
template <typename Scalar>
Scalar exact_best_response_payoff(const VectorX<Scalar>& x, const LinearScorer<Scalar>& model,
                                  const CostSpec<Scalar>& c) {
  const VectorX<Scalar> xb = exact_best_response(x, model, c);
  if (model.head(x) >= Scalar(0)) return Scalar(1);
  if (xb == x) return Scalar(-1);
  return Scalar(1) - cost(c, x, xb, CostMode::Exact);
}

// Exhaustive grid maximization of the smoothed payoff over the (<= 2 dim)
// subspace that contains every stationary point. `resolution` is the grid
// step in input units.
template <typename Scalar>
VectorX<Scalar> grid_response_oracle(const VectorX<Scalar>& x, const LinearScorer<Scalar>& model,
                                     const CostSpec<Scalar>& c, Scalar tau, Scalar resolution) {
  if (!(c.quadratic_coefficient() > Scalar(0))) throw InvalidInput("grid oracle needs a quadratic component");
  if (!(resolution > Scalar(0))) throw InvalidConfig("grid resolution must be positive");
  const Eigen::Index d = x.size();
  const VectorX<Scalar> zero_g = VectorX<Scalar>::Zero(d);
  const auto red = detail::reduce<Scalar>(x, zero_g, model, c, nullptr);
  const MatrixX<Scalar>& Q = red.basis;
  if (Q.cols() == 0) return x;
  if (Q.cols() > 2) throw InvalidInput("grid oracle supports at most two effective dimensions");

  const SmoothSign<Scalar> ss(tau);
  const Scalar c0 = cost(c, x, x, CostMode::Smoothed);
  const Scalar radius = std::sqrt((Scalar(2) + c0) / c.quadratic_coefficient());
  const long n = static_cast<long>(std::ceil(radius / resolution));
  auto payoff = [&](const VectorX<Scalar>& xp) { return ss(model.head(xp)) - cost(c, x, xp, CostMode::Smoothed); };

  VectorX<Scalar> best = x;
  Scalar best_val = payoff(x);
  VectorX<Scalar> xp(d);
  if (Q.cols() == 1) {
    for (long i = -n; i <= n; ++i) {
      xp = x + (Scalar(i) * resolution) * Q.col(0);
      const Scalar val = payoff(xp);
      if (val > best_val) best_val = val, best = xp;
    }
  } else {
    for (long i = -n; i <= n; ++i)
      for (long j = -n; j <= n; ++j) {
        if (Scalar(i * i + j * j) * resolution * resolution > radius * radius) continue;
        xp = x + (Scalar(i) * resolution) * Q.col(0) + (Scalar(j) * resolution) * Q.col(1);
        const Scalar val = payoff(xp);
        if (val > best_val) best_val = val, best = xp;
      }
  }
  return best;
}

// Responses for every row of Z. (Weighted) quadratic costs without tangent
// constraints take a vectorized path that solves the reduced scalar problems
// of the whole batch together; everything else loops over ccp_respond.
template <typename Scalar>
std::vector<ResponseOutcome<Scalar>> ccp_respond_batch(const MatrixX<Scalar>& Z, const LinearScorer<Scalar>& model,
                                                       const CostSpec<Scalar>& c, const ResponseConfig<Scalar>& cfg) {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index m = Z.rows();
  const Eigen::Index d = Z.cols();
  std::vector<ResponseOutcome<Scalar>> out(static_cast<size_t>(m));
  if (c.kind != CostKind::Quadratic && c.kind != CostKind::WeightedQuadratic) {
    for (Eigen::Index i = 0; i < m; ++i) {
      try {
        out[i] = ccp_respond<Scalar>(Z.row(i).transpose(), model, c, cfg);
      } catch (const SolverFailure& e) {
        throw SolverFailure(e.what(), e.trace(), i);
      }
    }
    return out;
  }
  cfg.validate();
  c.validate();
  if (model.w.size() != d) throw InvalidInput("model and batch dimensions disagree");
  c.check_dims(d);

  // x' = x + alpha u with u = P^{-1} w; f(x') = f(x) + alpha kappa.
  const SmoothSign<Scalar> ss(cfg.tau);
  const Scalar t = c.scale;
  const VectorX<Scalar> u = model.w.cwiseQuotient(c.quadratic_weights(d));
  const Scalar kappa = model.w.dot(u);
  const Scalar unorm = u.norm();
  const Scalar wnorm = model.w.norm();
  const Array f0 = ((Z * model.w).array() + model.b);

  Array alpha = Array::Zero(m);
  Array g_coef = Array::Zero(m);
  std::vector<int> iters(static_cast<size_t>(m), 0);
  std::vector<char> conv(static_cast<size_t>(m), kappa == Scalar(0) ? 1 : 0);
  if (kappa == Scalar(0)) std::fill(iters.begin(), iters.end(), 1);

  const Scalar half_inv_tau = Scalar(0.5) / cfg.tau;
  auto cap_d1 = [&](const Array& z) {
    const Array v = z / cfg.tau - Scalar(1);
    return (-v / (Scalar(2) * cfg.tau * (v.square() + Scalar(1)).sqrt())).eval();
  };
  auto cap_d2 = [&](const Array& z) {
    const Array r2 = (z / cfg.tau - Scalar(1)).square() + Scalar(1);
    return (Scalar(-1) / (Scalar(2) * cfg.tau * cfg.tau * r2 * r2.sqrt())).eval();
  };
  auto cup_d1 = [&](const Array& z) {
    const Array v = z / cfg.tau + Scalar(1);
    return (v / (Scalar(2) * cfg.tau * (v.square() + Scalar(1)).sqrt())).eval();
  };

  for (int it = 1; it <= cfg.max_iter && kappa != Scalar(0); ++it) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < m; ++i)
      if (!conv[i]) active.push_back(i);
    if (active.empty()) break;
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    Array fa(na), aa(na), prev(na);
    for (Eigen::Index k = 0; k < na; ++k) {
      fa(k) = f0(active[k]);
      prev(k) = alpha(active[k]);
    }
    aa = cup_d1(fa + prev * kappa);
    // Root of h(beta) = a - 2 t beta + sigma_cap'(f0 + beta kappa), decreasing.
    Array lo = (aa - half_inv_tau) / (Scalar(2) * t);
    Array hi = (aa + half_inv_tau) / (Scalar(2) * t);
    Array beta = prev.max(lo).min(hi);
    for (int nt = 0; nt < 100; ++nt) {
      const Array z = fa + beta * kappa;
      const Array h = aa - Scalar(2) * t * beta + cap_d1(z);
      const Array hp = Scalar(-2) * t + kappa * cap_d2(z);
      const Scalar resid = (h.abs() * wnorm).maxCoeff();
      lo = (h > Scalar(0)).select(beta, lo);
      hi = (h < Scalar(0)).select(beta, hi);
      if (resid <= cfg.subproblem_tol * Scalar(1e-3)) break;
      Array nb = beta - h / hp;
      nb = (nb > lo && nb < hi).select(nb, Scalar(0.5) * (lo + hi));
      if (((nb - beta).abs() <= std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + beta.abs())).all()) {
        beta = nb;
        break;
      }
      beta = nb;
    }
    if (!beta.allFinite()) throw SolverFailure("batched CCP iterate became non-finite");
    const Array step = (beta - prev).abs() * unorm;
    for (Eigen::Index k = 0; k < na; ++k) {
      const Eigen::Index i = active[k];
      alpha(i) = beta(k);
      g_coef(i) = aa(k);
      iters[i] = it;
      if (step(k) <= cfg.tol) conv[i] = 1;
    }
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    auto& o = out[i];
    const VectorX<Scalar> x = Z.row(i).transpose();
    o.x_star = x + alpha(i) * u;
    o.iterations = iters[i];
    o.converged = conv[i] != 0;
    const Scalar fs = f0(i) + alpha(i) * kappa;
    o.g_final = ss.convex_d1(fs) * model.w;
    const VectorX<Scalar> g = g_coef(i) * model.w;
    o.surrogate_value = detail::Surrogate<Scalar>{x, g, model, c, ss}.value(o.x_star);
  }
  return out;
}

}  // namespace serm
