#include "serm/objectives.hpp"

#include <chrono>
#include <cmath>

#include "serm/errors.hpp"

namespace serm {

const char* to_string(Regularizer r) {
  switch (r) {
    case Regularizer::None: return "none";
    case Regularizer::Utility: return "utility";
    case Regularizer::Burden: return "burden";
    case Regularizer::Recourse: return "recourse";
  }
  return "?";
}

Regularizer regularizer_from_string(const std::string& s) {
  if (s == "none") return Regularizer::None;
  if (s == "utility") return Regularizer::Utility;
  if (s == "burden") return Regularizer::Burden;
  if (s == "recourse") return Regularizer::Recourse;
  throw InvalidConfig("unknown regularizer '" + s + "'");
}

void ObjectiveConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidConfig("lambda must be finite and >= 0");
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& o) {
  w += o.w;
  b += o.b;
  if (v.size() == o.v.size()) v += o.v;
  return *this;
}

ParamGradient& ParamGradient::operator*=(double s) {
  w *= s;
  b *= s;
  v *= s;
  return *this;
}

double logistic_loss(double margin) { return softplus(-margin, 1.0); }

Dataset to_representation(const Dataset& batch, const Scorer& model) {
  if (!model.feature_map) return batch;
  if (batch.has_tangents()) throw InvalidInput("tangent constraints are not supported with feature maps");
  Dataset z = batch;
  z.X = model.feature_map->apply_rows(batch.X);
  z.feature_names.clear();
  return z;
}

BatchResponse respond_batch(const Dataset& batch, const Scorer& head, const Cost& cost, const ResponseCfg& cfg,
                            bool with_jacobians, const ObjectiveOptions& opts) {
  const Eigen::Index m = batch.size();
  if (m < 1) throw InvalidInput("batch must be nonempty");
  if (opts.use_tangents && !batch.has_tangents()) throw InvalidInput("tangent responses need per-row tangents");
  BatchResponse br;
  br.ok.assign(static_cast<size_t>(m), 1);
  const bool skip = opts.on_failure == FailurePolicy::Skip;
  auto fail = [&](Eigen::Index i) {
    if (br.ok[i]) {
      br.ok[i] = 0;
      ++br.failures;
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  const bool vectorized =
      !opts.use_tangents && (cost.kind == CostKind::Quadratic || cost.kind == CostKind::WeightedQuadratic);
  bool done = false;
  if (vectorized) {
    try {
      br.outcomes = ccp_respond_batch<double>(batch.X, head, cost, cfg);
      done = true;
    } catch (const SolverFailure&) {
      if (!skip) throw;
    }
  }
  if (!done) {
    br.outcomes.assign(static_cast<size_t>(m), Outcome{});
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::VectorXd x = batch.row(i);
      try {
        if (opts.use_tangents)
          br.outcomes[i] = tangent_constrained_respond<double>(x, head, cost, Tangent{x, batch.tangents[i]}, cfg);
        else
          br.outcomes[i] = ccp_respond<double>(x, head, cost, cfg);
      } catch (const SolverFailure& e) {
        if (!skip) throw SolverFailure(e.what(), e.trace(), i);
        br.outcomes[i].x_star = x;
        fail(i);
      }
    }
  }
  br.ccp_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& o : br.outcomes) br.ccp_iterations += o.iterations;

  if (!with_jacobians) return br;
  br.jacobians.assign(static_cast<size_t>(m), Jacobians{});
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!br.ok[i]) continue;
    const auto& o = br.outcomes[i];
    if (!o.converged) {
      if (!skip) {
        std::vector<double> trace(o.payoff_trace.begin(), o.payoff_trace.end());
        throw SolverFailure("CCP did not converge within max_iter", trace, i);
      }
      fail(i);
      continue;
    }
    const Eigen::VectorXd x = batch.row(i);
    try {
      if (opts.use_tangents) {
        const Tangent tan{x, batch.tangents[i]};
        br.jacobians[i] = response_jacobians<double>(o, x, head, cost, cfg, &tan, opts.jacobian_mode);
      } else {
        br.jacobians[i] = response_jacobians<double>(o, x, head, cost, cfg, nullptr, opts.jacobian_mode);
      }
    } catch (const DegenerateJacobian&) {
      if (!skip) throw;
      fail(i);
    }
  }
  return br;
}

namespace {

// d f(x*) / d (w, b, v) along both the direct and the response path.
ParamGradient score_chain(const Outcome& o, const Jacobians& J, const Scorer& head, bool cost_grad) {
  ParamGradient g;
  g.w = o.x_star + J.d_w.transpose() * head.w;
  g.b = 1.0 + J.d_b.dot(head.w);
  if (cost_grad) g.v = J.d_v.transpose() * head.w;
  return g;
}

Eigen::Index n_cost_params(const Cost& cost, const ObjectiveOptions& opts) {
  return opts.cost_gradient ? cost.num_params() : 0;
}

ObjectiveValue loss_from(const BatchResponse& br, const Dataset& batch, const Scorer& head, const Cost& cost,
                         const ObjectiveOptions& opts) {
  ObjectiveValue out{0.0, ParamGradient::zeros(head.dim(), n_cost_params(cost, opts))};
  const int n = br.successes();
  if (n == 0) return out;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    if (!br.ok[i]) continue;
    const auto& o = br.outcomes[i];
    const double y = batch.y(i);
    const double margin = y * head.head(o.x_star);
    out.value += logistic_loss(margin);
    ParamGradient g = score_chain(o, br.jacobians[i], head, opts.cost_gradient);
    g *= -y * logistic(-margin);
    out.grad += g;
  }
  out.value /= n;
  out.grad *= 1.0 / n;
  return out;
}

ObjectiveValue utility_from(const BatchResponse& br, const Dataset& batch, const Scorer& head, const Cost& c,
                            const ResponseCfg& cfg, const ObjectiveOptions& opts) {
  ObjectiveValue out{0.0, ParamGradient::zeros(head.dim(), n_cost_params(c, opts))};
  const int n = br.successes();
  if (n == 0) return out;
  const SmoothSign<double> ss(cfg.tau);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    if (!br.ok[i]) continue;
    const auto& o = br.outcomes[i];
    const auto& J = br.jacobians[i];
    const Eigen::VectorXd x = batch.row(i);
    const double fs = head.head(o.x_star);
    out.value -= ss(fs) - cost(c, x, o.x_star, CostMode::Smoothed);
    const Eigen::VectorXd grad_c = cost_derivatives(c, x, o.x_star).gradient;
    ParamGradient g = score_chain(o, J, head, opts.cost_gradient);
    g *= ss.d1(fs);
    g.w -= J.d_w.transpose() * grad_c;
    g.b -= J.d_b.dot(grad_c);
    if (opts.cost_gradient) g.v -= J.d_v.transpose() * grad_c + cost_param_gradient(c, x, o.x_star);
    g *= -1.0;
    out.grad += g;
  }
  out.value /= n;
  out.grad *= 1.0 / n;
  return out;
}

ObjectiveValue recourse_from(const BatchResponse& br, const Dataset& batch, const Scorer& head, const Cost& cost,
                             const ResponseCfg& cfg, bool masked, const ObjectiveOptions& opts) {
  ObjectiveValue out{0.0, ParamGradient::zeros(head.dim(), n_cost_params(cost, opts))};
  const int n = br.successes();
  if (n == 0) return out;
  const SmoothSign<double> ss(cfg.tau);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    if (!br.ok[i]) continue;
    const auto& o = br.outcomes[i];
    const Eigen::VectorXd x = batch.row(i);
    const double f0 = head.head(x);
    if (masked && f0 >= 0) continue;
    const double fs = head.head(o.x_star);
    const double a = ss(-f0), b = ss(-fs);
    out.value += a * b;
    // d/dtheta [a * b] = -sigma'(-f0) df0 * b - a * sigma'(-fs) dfs
    ParamGradient g = score_chain(o, br.jacobians[i], head, opts.cost_gradient);
    g *= -a * ss.d1(-fs);
    g.w -= ss.d1(-f0) * b * x;
    g.b -= ss.d1(-f0) * b;
    out.grad += g;
  }
  out.value /= n;
  out.grad *= 1.0 / n;
  return out;
}

void check_batch(const Dataset& batch, const Scorer& model) {
  if (batch.size() < 1) throw InvalidInput("batch must be nonempty");
  if (batch.dim() != model.input_dim()) throw InvalidInput("batch dimension does not match model");
}

}  // namespace

double burden_of(const Eigen::VectorXd& x, const Scorer& head, const Cost& cost) {
  if (cost.kind != CostKind::Quadratic && cost.kind != CostKind::WeightedQuadratic)
    throw InvalidInput("burden has a closed form only for (weighted) quadratic costs");
  const Eigen::VectorXd p = cost.quadratic_weights(head.dim());
  const double norm = head.w.cwiseAbs2().cwiseQuotient(p).sum();
  if (norm == 0.0) throw InvalidInput("burden is undefined for a zero weight vector");
  const double gap = std::max(0.0, -head.head(x));
  return cost.scale * gap * gap / norm;
}

ObjectiveValue strategic_loss(const Dataset& batch, const Scorer& model, const Cost& cost, const ResponseCfg& cfg,
                              const ObjectiveOptions& opts) {
  check_batch(batch, model);
  const Dataset z = to_representation(batch, model);
  const Scorer head = model.linear_head();
  const auto br = respond_batch(z, head, cost, cfg, true, opts);
  return loss_from(br, z, head, cost, opts);
}

ObjectiveValue reg_utility(const Dataset& batch, const Scorer& model, const Cost& cost, const ResponseCfg& cfg,
                           const ObjectiveOptions& opts) {
  check_batch(batch, model);
  const Dataset z = to_representation(batch, model);
  const Scorer head = model.linear_head();
  const auto br = respond_batch(z, head, cost, cfg, true, opts);
  return utility_from(br, z, head, cost, cfg, opts);
}

ObjectiveValue reg_burden(const Dataset& batch, const Scorer& model, const Cost& cost, const ObjectiveOptions& opts) {
  check_batch(batch, model);
  const Dataset z = to_representation(batch, model);
  const Scorer head = model.linear_head();
  const Eigen::Index k = head.dim();
  ObjectiveValue out{0.0, ParamGradient::zeros(k, n_cost_params(cost, opts))};
  const Eigen::VectorXd p = cost.quadratic_weights(k);
  if (cost.kind != CostKind::Quadratic && cost.kind != CostKind::WeightedQuadratic)
    throw InvalidInput("burden has a closed form only for (weighted) quadratic costs");
  const Eigen::VectorXd wp = head.w.cwiseQuotient(p);
  const double norm = head.w.dot(wp);
  if (norm == 0.0) return out;  // w = 0 (e.g. the initial model): no term, no gradient
  const double t = cost.scale;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z.y(i) <= 0) continue;
    const Eigen::VectorXd x = z.row(i);
    const double gap = -head.head(x);
    if (gap <= 0) continue;  // subgradient 0 at the kink
    out.value += t * gap * gap / norm;
    // B = t gap^2 / N with N = sum w_j^2 / p_j
    out.grad.w += t * (-2.0 * gap * x / norm - gap * gap * 2.0 * wp / (norm * norm));
    out.grad.b += -2.0 * t * gap / norm;
    if (opts.cost_gradient && cost.kind == CostKind::WeightedQuadratic)
      out.grad.v += t * gap * gap / (norm * norm) * wp.cwiseAbs2();
  }
  const double m = static_cast<double>(z.size());
  out.value /= m;
  out.grad *= 1.0 / m;
  return out;
}

ObjectiveValue reg_recourse(const Dataset& batch, const Scorer& model, const Cost& cost, const ResponseCfg& cfg,
                            bool masked, const ObjectiveOptions& opts) {
  check_batch(batch, model);
  const Dataset z = to_representation(batch, model);
  const Scorer head = model.linear_head();
  const auto br = respond_batch(z, head, cost, cfg, true, opts);
  return recourse_from(br, z, head, cost, cfg, masked, opts);
}

ObjectiveValue regularized_objective(const Dataset& batch, const Scorer& model, const Cost& cost,
                                     const ResponseCfg& cfg, const ObjectiveConfig& obj, const ObjectiveOptions& opts,
                                     BatchResponse* responses_out) {
  obj.validate();
  check_batch(batch, model);
  const Dataset z = to_representation(batch, model);
  const Scorer head = model.linear_head();
  auto br = respond_batch(z, head, cost, cfg, true, opts);
  ObjectiveValue total = loss_from(br, z, head, cost, opts);
  if (obj.regularizer != Regularizer::None && obj.lambda > 0.0) {
    ObjectiveValue reg;
    switch (obj.regularizer) {
      case Regularizer::Utility: reg = utility_from(br, z, head, cost, cfg, opts); break;
      case Regularizer::Burden: reg = reg_burden(z, head, cost, opts); break;
      case Regularizer::Recourse: reg = recourse_from(br, z, head, cost, cfg, obj.recourse_masked, opts); break;
      case Regularizer::None: break;
    }
    total.value += obj.lambda * reg.value;
    reg.grad *= obj.lambda;
    total.grad += reg.grad;
  }
  if (responses_out) *responses_out = std::move(br);
  return total;
}

WorstCaseValue worst_case_loss(const Dataset& batch, const Scorer& model, const std::vector<Cost>& candidates,
                               const ResponseCfg& cfg, const ObjectiveOptions& opts) {
  if (candidates.empty()) throw InvalidInput("worst-case loss needs at least one candidate cost");
  WorstCaseValue out;
  bool first = true;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    ObjectiveValue v = strategic_loss(batch, model, candidates[c], cfg, opts);
    if (first || v.value > out.value) {
      out.value = v.value;
      out.worst_index = c;
      out.grad = std::move(v.grad);
      first = false;
    }
  }
  return out;
}

}  // namespace serm
