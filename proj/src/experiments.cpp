#include "serm/experiments.hpp"

#include <cmath>
#include <sstream>

#include "serm/errors.hpp"

namespace serm {

TrainConfig ExperimentOptions::default_train() {
  TrainConfig c;
  c.batch_size = 64;
  c.canonical_eval = true;
  return c;
}

void MethodSummary::finalize() {
  const double n = double(accuracy.size());
  mean = sd = clean_mean = 0.0;
  if (accuracy.empty()) return;
  for (double a : accuracy) mean += a;
  mean /= n;
  for (double a : accuracy) sd += (a - mean) * (a - mean);
  sd = accuracy.size() > 1 ? std::sqrt(sd / (n - 1.0)) : 0.0;
  for (double c : clean) clean_mean += c;
  if (!clean.empty()) clean_mean /= double(clean.size());
}

const MethodSummary& ExperimentResult::at(const std::string& method) const {
  for (const auto& m : methods)
    if (m.name == method) return m;
  throw InvalidInput("experiment '" + name + "' has no method '" + method + "'");
}

SyntheticSpec gaussian_spec(const Eigen::Vector2d& mean_pos, const Eigen::Vector2d& sd, Eigen::Index n,
                            std::uint64_t seed) {
  GaussianMixtureSpec g;
  g.mean_pos = mean_pos;
  g.mean_neg = -mean_pos;
  g.var_pos = sd.cwiseAbs2();
  g.var_neg = g.var_pos;
  SyntheticSpec s;
  s.kind = g;
  s.n = n;
  s.seed = seed;
  return s;
}

namespace {

struct Recorder {
  std::vector<MethodSummary> methods;
  const ExperimentOptions& opts;
  std::uint64_t seed = 0;

  MethodSummary& get(const std::string& name) {
    for (auto& m : methods)
      if (m.name == name) return m;
    methods.push_back(MethodSummary{name, {}, {}, {}, 0, 0, 0});
    return methods.back();
  }

  void add(const std::string& name, const Metrics& m, const Eigen::VectorXd* v = nullptr) {
    auto& s = get(name);
    s.accuracy.push_back(m.strategic_accuracy);
    s.clean.push_back(m.clean_accuracy);
    if (v) s.cost_params.push_back(*v);
    if (opts.log) {
      std::ostringstream os;
      os << "seed " << seed << " " << name << ": strategic " << m.strategic_accuracy << " clean " << m.clean_accuracy;
      if (v) os << " v=[" << v->transpose() << "]";
      opts.log(os.str());
    }
  }

  ExperimentResult finish(const std::string& name) {
    for (auto& m : methods) m.finalize();
    return {name, methods};
  }
};

DataSplit draw(const SyntheticSpec& spec, bool standardize) {
  DataSplit sp = split(gen_synthetic(spec), spec.seed);
  if (!standardize) return sp;
  auto st = standardize_fit_transform(sp.train, {sp.val, sp.test});
  return {st.train, st.others[0], st.others[1]};
}

Metrics test_metrics(const MethodRun& run, const Dataset& test, const TrainConfig& cfg, bool tangents) {
  EvalOptions eo = eval_options(cfg);
  eo.use_tangents = tangents;
  return evaluate(run.model, test, run.eval_cost, cfg.eval_response, eo);
}

}  // namespace

ExperimentResult flexible_experiment(const ExperimentOptions& opts, double grid_step) {
  if (!(grid_step > 0.0)) throw InvalidConfig("oracle grid step must be > 0");
  const Eigen::VectorXd v0 = Eigen::Vector2d(0.5, 0.5);
  const double radius = 2.0, gamma = 0.005;
  const Cost c0 = Cost::mixture(gamma, v0);
  const CostBox box{v0, radius};
  Recorder rec{{}, opts};
  for (int s = 0; s < opts.n_seeds; ++s) {
    rec.seed = opts.seed + static_cast<std::uint64_t>(s);
    const DataSplit sp = draw(gaussian_spec({0.5, 0.0}, {0.1, 1.0}, opts.n, rec.seed), opts.standardize);
    TrainConfig cfg = opts.train;
    cfg.seed = rec.seed;

    MethodSetup flex{Method::Flexible, std::nullopt, box, {}, std::nullopt};
    const MethodRun fr = fit_method(flex, sp.train, sp.val, c0, cfg, opts.lr_grid);
    const Eigen::VectorXd vhat = fr.eval_cost.v;
    rec.add("flexible", test_metrics(fr, sp.test, cfg, false), &vhat);

    const MethodRun nr = fit_method(MethodSetup::of(Method::Serm), sp.train, sp.val, c0, cfg, opts.lr_grid);
    rec.add("naive", test_metrics(nr, sp.test, cfg, false), &v0);

    // Oracle: a fixed in-box cost chosen by validation accuracy over a grid;
    // ties keep the first, so a perfect score ends the search.
    const int steps = static_cast<int>(std::floor(2.0 * radius / grid_step + 1e-9));
    MethodRun best;
    double best_val = -1.0;
    for (int i = 0; i <= steps && best_val < 1.0; ++i) {
      for (int j = 0; j <= steps && best_val < 1.0; ++j) {
        const Eigen::Vector2d v(v0(0) - radius + i * grid_step, v0(1) - radius + j * grid_step);
        const Cost cv = Cost::mixture(gamma, v);
        MethodRun r = fit_method(MethodSetup::of(Method::Serm), sp.train, sp.val, cv, cfg, opts.lr_grid);
        if (r.report.best_val_accuracy > best_val) {
          best_val = r.report.best_val_accuracy;
          best = std::move(r);
        }
      }
    }
    const Eigen::VectorXd vstar = best.eval_cost.v;
    rec.add("oracle", test_metrics(best, sp.test, cfg, false), &vstar);

    const MethodRun br = fit_method(MethodSetup::of(Method::Blind), sp.train, sp.val, c0, cfg, opts.lr_grid);
    rec.add("blind", test_metrics(br, sp.test, cfg, false));
  }
  return rec.finish("flexible");
}

ExperimentResult robust_experiment(const ExperimentOptions& opts) {
  const Cost vstar = Cost::weighted_quadratic(Eigen::Vector2d(0.5, 0.5));
  const Cost v0 = Cost::weighted_quadratic(Eigen::Vector2d(2.0, 2.0));
  const CostBox box{Eigen::Vector2d(2.0, 2.0), 1.7};
  const std::vector<Cost> extremes{v0.with_params(box.center.array() - box.radius),
                                   v0.with_params(box.center.array() + box.radius)};
  Recorder rec{{}, opts};
  for (int s = 0; s < opts.n_seeds; ++s) {
    rec.seed = opts.seed + static_cast<std::uint64_t>(s);
    const DataSplit sp = draw(gaussian_spec({0.6, 0.0}, {0.1, 0.1}, opts.n, rec.seed), opts.standardize);
    TrainConfig cfg = opts.train;
    cfg.seed = rec.seed;
    MethodSetup robust{Method::Robust, std::nullopt, box, extremes, std::nullopt};
    rec.add("robust", test_metrics(fit_method(robust, sp.train, sp.val, vstar, cfg, opts.lr_grid), sp.test, cfg, false));
    MethodSetup naive{Method::Serm, v0, std::nullopt, {}, std::nullopt};
    rec.add("naive", test_metrics(fit_method(naive, sp.train, sp.val, vstar, cfg, opts.lr_grid), sp.test, cfg, false));
    rec.add("oracle",
            test_metrics(fit_method(MethodSetup::of(Method::Serm), sp.train, sp.val, vstar, cfg, opts.lr_grid), sp.test, cfg, false));
    rec.add("blind",
            test_metrics(fit_method(MethodSetup::of(Method::Blind), sp.train, sp.val, vstar, cfg, opts.lr_grid), sp.test, cfg, false));
  }
  return rec.finish("robust");
}

ExperimentResult manifold_experiment(const ExperimentOptions& opts) {
  const Cost cost = Cost::quadratic();
  Recorder rec{{}, opts};
  for (int s = 0; s < opts.n_seeds; ++s) {
    rec.seed = opts.seed + static_cast<std::uint64_t>(s);
    SyntheticSpec spec;
    spec.kind = ParabolaManifoldSpec{};
    spec.n = opts.n;
    spec.seed = rec.seed;
    const DataSplit sp = draw(spec, opts.standardize);
    TrainConfig cfg = opts.train;
    cfg.seed = rec.seed;
    MethodSetup tangent{Method::Serm, std::nullopt, std::nullopt, {}, true};
    rec.add("serm-tangent",
            test_metrics(fit_method(tangent, sp.train, sp.val, cost, cfg, opts.lr_grid), sp.test, cfg, true));
    MethodSetup naive{Method::Serm, std::nullopt, std::nullopt, {}, false};
    rec.add("naive", test_metrics(fit_method(naive, sp.train, sp.val, cost, cfg, opts.lr_grid), sp.test, cfg, true));
    rec.add("blind",
            test_metrics(fit_method(MethodSetup::of(Method::Blind), sp.train, sp.val, cost, cfg, opts.lr_grid), sp.test, cfg, true));
  }
  return rec.finish("manifold");
}

std::vector<GapRow> core_gap_experiment(const ExperimentOptions& opts, const std::vector<double>& scales) {
  std::vector<GapRow> rows;
  for (double t : scales) {
    Cost cost = Cost::quadratic();
    cost.scale = t;
    Recorder rec{{}, opts};
    for (int s = 0; s < opts.n_seeds; ++s) {
      rec.seed = opts.seed + static_cast<std::uint64_t>(s);
      const DataSplit sp = draw(gaussian_spec({0.5, 0.0}, {0.25, 0.25}, opts.n, rec.seed), opts.standardize);
      TrainConfig cfg = opts.train;
      cfg.seed = rec.seed;
      rec.add("blind",
              test_metrics(fit_method(MethodSetup::of(Method::Blind), sp.train, sp.val, cost, cfg, opts.lr_grid), sp.test, cfg, false));
      rec.add("serm",
              test_metrics(fit_method(MethodSetup::of(Method::Serm), sp.train, sp.val, cost, cfg, opts.lr_grid), sp.test, cfg, false));
    }
    const auto res = rec.finish("core-gap");
    rows.push_back({t, res.at("blind"), res.at("serm")});
  }
  return rows;
}

double social_metric(Regularizer r, const Metrics& m) {
  switch (r) {
    case Regularizer::Utility: return m.mean_utility;
    case Regularizer::Burden: return m.mean_burden;
    case Regularizer::Recourse: return m.recourse_rate;
    case Regularizer::None: break;
  }
  throw InvalidInput("no social metric for the 'none' regularizer");
}

bool social_higher_is_better(Regularizer r) { return r != Regularizer::Burden; }

std::vector<TradeoffPoint> regularization_tradeoff(const ExperimentOptions& opts, const std::vector<double>& lambdas,
                                                   const std::vector<Regularizer>& regs) {
  const Cost cost = Cost::quadratic();
  std::vector<DataSplit> splits;
  for (int s = 0; s < opts.n_seeds; ++s)
    splits.push_back(draw(gaussian_spec({0.5, 0.0}, {0.25, 0.25}, opts.n, opts.seed + static_cast<std::uint64_t>(s)), opts.standardize));
  std::vector<TradeoffPoint> out;
  for (Regularizer r : regs) {
    for (double lambda : lambdas) {
      TradeoffPoint p;
      p.regularizer = r;
      p.lambda = lambda;
      for (int s = 0; s < opts.n_seeds; ++s) {
        const DataSplit& sp = splits[static_cast<size_t>(s)];
        TrainConfig cfg = opts.train;
        cfg.seed = opts.seed + static_cast<std::uint64_t>(s);
        cfg.objective.regularizer = r;
        cfg.objective.lambda = lambda;
        const Metrics m = test_metrics(fit_method(MethodSetup::of(Method::Serm), sp.train, sp.val, cost, cfg, opts.lr_grid), sp.test,
                                       cfg, false);
        p.accuracy_runs.push_back(m.strategic_accuracy);
        p.social_runs.push_back(social_metric(r, m));
      }
      for (double a : p.accuracy_runs) p.accuracy += a / double(opts.n_seeds);
      for (double v : p.social_runs) p.social += v / double(opts.n_seeds);
      if (opts.log) {
        std::ostringstream os;
        os << to_string(r) << " lambda " << lambda << ": accuracy " << p.accuracy << " social " << p.social;
        opts.log(os.str());
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace serm
