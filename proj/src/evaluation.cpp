#include "serm/evaluation.hpp"

#include <cmath>
#include <limits>

#include "serm/errors.hpp"

namespace serm {

namespace {

struct Responded {
  Dataset z;  // representation space
  std::vector<Eigen::VectorXd> x_star;
  std::vector<char> ok;
  long failures = 0;
};

Responded respond_all(const Scorer& model, const Dataset& data, const Cost& cost, const ResponseCfg& cfg,
                      const EvalOptions& opts) {
  if (data.dim() != model.input_dim()) throw InvalidInput("dataset dimension does not match model");
  Responded r;
  r.z = to_representation(data, model);
  const Scorer head = opts.canonical_scale ? canonical(model.linear_head()) : model.linear_head();
  const Eigen::Index m = r.z.size();
  r.x_star.resize(static_cast<size_t>(m));
  r.ok.assign(static_cast<size_t>(m), 1);
  if (opts.exact_responses) {
    for (Eigen::Index i = 0; i < m; ++i) r.x_star[i] = exact_best_response<double>(r.z.row(i), head, cost);
    return r;
  }
  ObjectiveOptions o;
  o.use_tangents = opts.use_tangents;
  o.on_failure = FailurePolicy::Skip;
  const auto br = respond_batch(r.z, head, cost, cfg, false, o);
  for (Eigen::Index i = 0; i < m; ++i) {
    r.x_star[i] = br.outcomes[i].x_star;
    r.ok[i] = br.ok[i];
  }
  r.failures = br.failures;
  return r;
}

}  // namespace

Scorer canonical(const Scorer& model) {
  Scorer out = model;
  const double n = model.w.norm();
  if (n > 0.0) {
    out.w /= n;
    out.b /= n;
  }
  return out;
}

double clean_accuracy(const Scorer& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  long correct = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i)
    correct += hard_sign(score<double>(model, data.row(i))) == static_cast<int>(data.y(i));
  return double(correct) / double(data.size());
}

Metrics evaluate(const Scorer& model, const Dataset& data, const Cost& c, const ResponseCfg& eval_response,
                 const EvalOptions& opts) {
  const Responded r = respond_all(model, data, c, eval_response, opts);
  const Scorer head = opts.canonical_scale ? canonical(model.linear_head()) : model.linear_head();
  const bool closed_burden = c.kind == CostKind::Quadratic || c.kind == CostKind::WeightedQuadratic;
  const bool zero_w = head.w.squaredNorm() == 0.0;

  Metrics m;
  m.failures = r.failures;
  long strategic = 0, clean = 0, positives = 0;
  double utility = 0.0, burden = 0.0;
  for (Eigen::Index i = 0; i < r.z.size(); ++i) {
    if (!r.ok[i]) continue;
    const Eigen::VectorXd x = r.z.row(i);
    const int y = static_cast<int>(r.z.y(i));
    const int before = hard_sign(head.head(x));
    const int after = hard_sign(head.head(r.x_star[i]));
    ++m.n_evaluated;
    strategic += after == y;
    clean += before == y;
    utility += after - cost(c, x, r.x_star[i], CostMode::Exact);
    if (before < 0) {
      ++m.denied;
      m.granted += after > 0;
    }
    if (y > 0) {
      ++positives;
      if (closed_burden && !zero_w) burden += burden_of(x, head, c);
    }
  }
  if (m.n_evaluated > 0) {
    m.strategic_accuracy = double(strategic) / double(m.n_evaluated);
    m.clean_accuracy = double(clean) / double(m.n_evaluated);
    m.mean_utility = utility / double(m.n_evaluated);
  }
  if (!closed_burden || zero_w)
    m.mean_burden = std::numeric_limits<double>::quiet_NaN();
  else
    m.mean_burden = positives > 0 ? burden / double(positives) : 0.0;
  m.recourse_rate = m.denied > 0 ? double(m.granted) / double(m.denied) : 1.0;
  return m;
}

Dataset respond_dataset(const Scorer& model, const Dataset& data, const Cost& cost, const ResponseCfg& eval_response,
                        const EvalOptions& opts) {
  const Responded r = respond_all(model, data, cost, eval_response, opts);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < r.z.size(); ++i)
    if (r.ok[i]) keep.push_back(i);
  Dataset out = r.z.subset(keep);
  for (size_t k = 0; k < keep.size(); ++k) out.X.row(static_cast<Eigen::Index>(k)) = r.x_star[keep[k]].transpose();
  out.tangents.clear();
  return out;
}

std::vector<ResponseRow> respond_rows(const Scorer& model, const Dataset& data, const Cost& c,
                                      const ResponseCfg& eval_response, const EvalOptions& opts) {
  const Responded r = respond_all(model, data, c, eval_response, opts);
  const Scorer head = model.linear_head();
  std::vector<ResponseRow> rows(static_cast<size_t>(r.z.size()));
  for (Eigen::Index i = 0; i < r.z.size(); ++i) {
    ResponseRow& row = rows[static_cast<size_t>(i)];
    row.x = r.z.row(i);
    row.y = static_cast<int>(r.z.y(i));
    row.ok = r.ok[i] != 0;
    row.x_star = row.ok ? r.x_star[i] : row.x;
    row.score_before = head.head(row.x);
    row.score_after = head.head(row.x_star);
    row.payoff = hard_sign(row.score_after) - cost(c, row.x, row.x_star, CostMode::Exact);
  }
  return rows;
}

}  // namespace serm
