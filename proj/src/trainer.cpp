#include "serm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "serm/errors.hpp"
#include "serm/evaluation.hpp"

namespace serm {

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, const AdamHyper& h) {
  if (grads.size() != params.size()) throw InvalidInput("adam_step: gradient size does not match parameters");
  if (!grads.allFinite()) {
    std::ostringstream os;
    os << "non-finite gradient at Adam step " << state.step + 1 << ": [" << grads.transpose() << "]";
    throw SolverFailure(os.str());
  }
  if (state.m.size() != params.size()) state = AdamState::zeros(params.size());
  ++state.step;
  state.m = h.beta1 * state.m + (1.0 - h.beta1) * grads;
  state.v = h.beta2 * state.v + (1.0 - h.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(h.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, double(state.step));
  const Eigen::ArrayXd mhat = state.m.array() / c1;
  const Eigen::ArrayXd vhat = state.v.array() / c2;
  params.array() -= h.learning_rate * mhat / (vhat.sqrt() + h.eps);
}

void TrainConfig::validate(Eigen::Index train_size) const {
  std::vector<std::string> bad;
  if (!(adam.learning_rate > 0.0) || !std::isfinite(adam.learning_rate)) bad.push_back("learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) bad.push_back("adam_beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) bad.push_back("adam_beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) bad.push_back("adam_eps must be > 0");
  if (batch_size < 1) bad.push_back("batch_size must be >= 1");
  if (train_size > 0 && batch_size > train_size) bad.push_back("batch_size must not exceed the training-set size");
  if (max_epochs < 1) bad.push_back("max_epochs must be >= 1");
  if (patience < 0) bad.push_back("patience must be >= 0");
  if (patience >= max_epochs) bad.push_back("patience must be < max_epochs");
  if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0)) bad.push_back("max_failure_rate must be in [0, 1]");
  try {
    objective.validate();
  } catch (const InvalidConfig& e) {
    bad.push_back(e.what());
  }
  try {
    response.validate();
  } catch (const InvalidConfig& e) {
    bad.push_back(std::string("response: ") + e.what());
  }
  try {
    eval_response.validate();
  } catch (const InvalidConfig& e) {
    bad.push_back(std::string("eval_response: ") + e.what());
  }
  if (bad.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& b : bad) msg += " " + b + ";";
  throw InvalidConfig(msg, bad);
}

void CostBox::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidConfig("cost box radius must be > 0");
  if (center.size() < 1) throw InvalidConfig("cost box center must be nonempty");
  if (!center.allFinite()) throw InvalidConfig("cost box center must be finite");
}

Eigen::VectorXd CostBox::project(const Eigen::VectorXd& v) const {
  return v.array().max(center.array() - radius).min(center.array() + radius).matrix();
}

bool CostBox::contains(const Eigen::VectorXd& v, double slack) const {
  return v.size() == center.size() && ((v - center).cwiseAbs().array() <= radius + slack).all();
}

std::vector<Eigen::VectorXd> CostBox::corners() const {
  const Eigen::Index p = center.size();
  if (p > 10) throw InvalidConfig("box corner enumeration is limited to 10 dimensions; pass candidates explicitly");
  std::vector<Eigen::VectorXd> out;
  for (long mask = 0; mask < (1L << p); ++mask) {
    Eigen::VectorXd c = center;
    for (Eigen::Index j = 0; j < p; ++j) c(j) += (mask >> j) & 1 ? radius : -radius;
    out.push_back(c);
  }
  return out;
}

std::vector<Cost> box_corner_candidates(const Cost& base, const CostBox& box) {
  box.validate();
  std::vector<Cost> out;
  for (const auto& c : box.corners()) out.push_back(base.with_params(c));
  return out;
}

namespace {

struct BatchEval {
  double loss = 0.0;  // mean over successes
  ParamGradient grad;
  long successes = 0;
  long failures = 0;
  double ccp_seconds = 0.0;
  long ccp_iterations = 0;
};

using GradFn = std::function<BatchEval(const Dataset&, const Scorer&, const Eigen::VectorXd&)>;
using ValFn = std::function<double(const Scorer&, const Eigen::VectorXd&)>;

Eigen::VectorXd pack(const Scorer& m, const Eigen::VectorXd& v) {
  Eigen::VectorXd p(m.dim() + 1 + v.size());
  p << m.w, m.b, v;
  return p;
}

void unpack(const Eigen::VectorXd& p, Scorer& m, Eigen::VectorXd& v) {
  const Eigen::Index k = m.dim();
  m.w = p.head(k);
  m.b = p(k);
  v = p.tail(v.size());
}

ObjectiveOptions objective_options(const TrainConfig& cfg, bool cost_gradient) {
  ObjectiveOptions o;
  o.jacobian_mode = cfg.jacobian_mode;
  o.use_tangents = cfg.use_tangents;
  o.cost_gradient = cost_gradient;
  o.on_failure = FailurePolicy::Skip;
  return o;
}

BatchEval from_objective(const ObjectiveValue& val, const BatchResponse& br) {
  BatchEval e;
  e.loss = val.value;
  e.grad = val.grad;
  e.failures = br.failures;
  e.successes = br.successes();
  e.ccp_seconds = br.ccp_seconds;
  e.ccp_iterations = br.ccp_iterations;
  return e;
}

TrainReport run_loop(const Dataset& train, const Scorer& init, const Eigen::VectorXd& v0, const CostBox* box,
                     const TrainConfig& cfg, const GradFn& grad_fn, const ValFn& val_fn) {
  const auto t0 = std::chrono::steady_clock::now();
  train.validate();
  init.validate();
  if (train.dim() != init.input_dim()) throw InvalidInput("training data dimension does not match model");
  cfg.validate(train.size());

  TrainReport rep;
  rep.learning_rate = cfg.adam.learning_rate;
  Scorer model = init;
  Eigen::VectorXd v = v0;
  Scorer best_model = model;
  Eigen::VectorXd best_v = v;
  AdamState state = AdamState::zeros(model.dim() + 1 + v.size());
  std::mt19937_64 rng(cfg.seed);
  const Eigen::Index n = train.size();
  std::vector<Eigen::Index> perm(static_cast<size_t>(n));
  bool have_best = false;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    double loss_sum = 0.0;
    long counted = 0, skipped = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index end = std::min<Eigen::Index>(n, start + cfg.batch_size);
      const std::vector<Eigen::Index> idx(perm.begin() + start, perm.begin() + end);
      const Dataset batch = train.subset(idx);
      BatchEval e = grad_fn(batch, model, v);
      skipped += e.failures;
      rep.ccp_seconds += e.ccp_seconds;
      rep.ccp_iterations += e.ccp_iterations;
      if (e.successes == 0) continue;
      loss_sum += e.loss * double(e.successes);
      counted += e.successes;
      if (e.grad.v.size() != v.size()) e.grad.v = Eigen::VectorXd::Zero(v.size());
      Eigen::VectorXd params = pack(model, v);
      Eigen::VectorXd g(params.size());
      g << e.grad.w, e.grad.b, e.grad.v;
      adam_step(params, g, state, cfg.adam);
      unpack(params, model, v);
      if (box) v = box->project(v);
      ++rep.steps;
      if (cfg.on_step) cfg.on_step(StepInfo{epoch, rep.steps, &model, box ? &v : nullptr});
    }
    rep.skipped_examples += skipped;
    if (double(skipped) > cfg.max_failure_rate * double(n)) {
      std::ostringstream os;
      os << "training aborted in epoch " << epoch << ": response solver failed on " << skipped << " of " << n
         << " examples (limit " << cfg.max_failure_rate * 100 << "%)";
      throw SolverFailure(os.str());
    }
    const double val_acc = val_fn(model, v);
    rep.history.push_back({epoch, counted ? loss_sum / double(counted) : 0.0, val_acc, skipped});
    rep.epochs_run = epoch;
    if (!have_best || val_acc > rep.best_val_accuracy) {
      have_best = true;
      rep.best_val_accuracy = val_acc;
      rep.best_epoch = epoch;
      best_model = model;
      best_v = v;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  rep.model = best_model;
  if (v0.size() > 0) rep.cost_params = best_v;
  rep.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

double strategic_val(const Scorer& m, const Dataset& val, const Cost& c, const TrainConfig& cfg) {
  EvalOptions eo;
  eo.use_tangents = cfg.use_tangents;
  eo.canonical_scale = cfg.canonical_eval;
  return evaluate(m, val, c, cfg.eval_response, eo).strategic_accuracy;
}

}  // namespace

TrainReport train_serm(const Dataset& train, const Dataset& val, const Scorer& init, const Cost& cost,
                       const TrainConfig& cfg) {
  cost.validate();
  const ObjectiveOptions opts = objective_options(cfg, false);
  GradFn grad = [&](const Dataset& batch, const Scorer& m, const Eigen::VectorXd&) {
    BatchResponse br;
    const auto val = regularized_objective(batch, m, cost, cfg.response, cfg.objective, opts, &br);
    return from_objective(val, br);
  };
  ValFn vf = [&](const Scorer& m, const Eigen::VectorXd&) { return strategic_val(m, val, cost, cfg); };
  return run_loop(train, init, Eigen::VectorXd(), nullptr, cfg, grad, vf);
}

TrainReport train_blind(const Dataset& train, const Dataset& val, const Scorer& init, const TrainConfig& cfg) {
  GradFn grad = [](const Dataset& batch, const Scorer& m, const Eigen::VectorXd&) {
    const Dataset z = to_representation(batch, m);
    const Scorer head = m.linear_head();
    BatchEval e;
    e.grad = ParamGradient::zeros(head.dim(), 0);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const Eigen::VectorXd x = z.row(i);
      const double y = z.y(i);
      const double margin = y * head.head(x);
      e.loss += logistic_loss(margin);
      const double s = -y * logistic(-margin);
      e.grad.w += s * x;
      e.grad.b += s;
    }
    e.successes = z.size();
    e.loss /= double(z.size());
    e.grad *= 1.0 / double(z.size());
    return e;
  };
  ValFn vf = [&](const Scorer& m, const Eigen::VectorXd&) { return clean_accuracy(m, val); };
  return run_loop(train, init, Eigen::VectorXd(), nullptr, cfg, grad, vf);
}

TrainReport train_flexible(const Dataset& train, const Dataset& val, const Scorer& init, const CostBox& box,
                           const Cost& base, const TrainConfig& cfg) {
  box.validate();
  base.validate();
  if (base.num_params() != box.center.size())
    throw InvalidConfig("cost box dimension does not match the cost's parameter count");
  if (base.kind != CostKind::WeightedQuadratic && base.kind != CostKind::Mixture)
    throw InvalidConfig("flexible training supports weighted-quadratic or mixture costs");
  const ObjectiveOptions opts = objective_options(cfg, true);
  GradFn grad = [&](const Dataset& batch, const Scorer& m, const Eigen::VectorXd& v) {
    BatchResponse br;
    const auto val = regularized_objective(batch, m, base.with_params(v), cfg.response, cfg.objective, opts, &br);
    return from_objective(val, br);
  };
  ValFn vf = [&](const Scorer& m, const Eigen::VectorXd& v) {
    return strategic_val(m, val, base.with_params(v), cfg);
  };
  return run_loop(train, init, box.center, &box, cfg, grad, vf);
}

TrainReport train_robust(const Dataset& train, const Dataset& val, const Scorer& init,
                         const std::vector<Cost>& candidates, const TrainConfig& cfg) {
  if (candidates.empty()) throw InvalidConfig("robust training needs at least one candidate cost");
  for (const auto& c : candidates) c.validate();
  const ObjectiveOptions opts = objective_options(cfg, false);
  GradFn grad = [&](const Dataset& batch, const Scorer& m, const Eigen::VectorXd&) {
    BatchEval worst;
    bool first = true;
    for (const auto& c : candidates) {
      BatchResponse br;
      const auto val = regularized_objective(batch, m, c, cfg.response, cfg.objective, opts, &br);
      BatchEval e = from_objective(val, br);
      const double secs = worst.ccp_seconds + e.ccp_seconds;
      const long its = worst.ccp_iterations + e.ccp_iterations;
      const long fails = std::max(worst.failures, e.failures);
      if (first || e.loss > worst.loss) worst = std::move(e);
      worst.ccp_seconds = secs;
      worst.ccp_iterations = its;
      worst.failures = fails;
      first = false;
    }
    return worst;
  };
  ValFn vf = [&](const Scorer& m, const Eigen::VectorXd&) {
    double acc = 1.0;
    for (const auto& c : candidates) acc = std::min(acc, strategic_val(m, val, c, cfg));
    return acc;
  };
  TrainReport rep = run_loop(train, init, Eigen::VectorXd(), nullptr, cfg, grad, vf);

  const ObjectiveOptions full = objective_options(cfg, false);
  rep.worst_case_train_loss = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    const double l = strategic_loss(train, rep.model, c, cfg.response, full).value;
    rep.candidate_train_losses.push_back(l);
    rep.worst_case_train_loss = std::max(rep.worst_case_train_loss, l);
  }
  return rep;
}

std::vector<double> intercept_candidates(const Dataset& train, const Eigen::VectorXd& v, double scale) {
  if (v.size() != train.dim()) throw InvalidInput("intercept baseline: v has the wrong dimension");
  if (!(scale > 0.0)) throw InvalidConfig("intercept baseline: scale must be > 0");
  // Strategic prediction is +1 iff v.x + b > -2/scale, so b acts through the
  // threshold s = -b - 2/scale on the projected scores v.x.
  std::vector<double> s(static_cast<size_t>(train.size()));
  for (Eigen::Index i = 0; i < train.size(); ++i) s[i] = train.X.row(i).dot(v);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> thresholds;
  thresholds.push_back(s.front() - 1.0);
  for (size_t i = 0; i + 1 < s.size(); ++i) thresholds.push_back(0.5 * (s[i] + s[i + 1]));
  thresholds.push_back(s.back() + 1.0);
  std::vector<double> out;
  for (double thr : thresholds) out.push_back(-thr - 2.0 / scale);
  std::sort(out.begin(), out.end());
  return out;
}

Scorer intercept_baseline(const Dataset& train, const Eigen::VectorXd& v, double scale) {
  train.validate();
  const std::vector<double> bs = intercept_candidates(train, v, scale);
  const Eigen::VectorXd proj = train.X * v;
  double best_b = bs.front();
  long best_correct = -1;
  for (double b : bs) {
    long correct = 0;
    for (Eigen::Index i = 0; i < train.size(); ++i) {
      const int pred = proj(i) + b > -2.0 / scale ? 1 : -1;
      correct += pred == static_cast<int>(train.y(i));
    }
    if (correct > best_correct) {
      best_correct = correct;
      best_b = b;
    }
  }
  Scorer out;
  out.w = v;
  out.b = best_b;
  return out;
}

TrainReport tune_learning_rate(const std::function<TrainReport(const TrainConfig&)>& train_fn,
                               const TrainConfig& base, const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidConfig("learning-rate grid must be nonempty");
  std::optional<TrainReport> best;
  for (double lr : grid) {
    TrainConfig cfg = base;
    cfg.adam.learning_rate = lr;
    TrainReport r = train_fn(cfg);
    if (!best || r.best_val_accuracy > best->best_val_accuracy) best = std::move(r);
  }
  return *best;
}

}  // namespace serm
