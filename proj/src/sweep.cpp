#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "serm/errors.hpp"
#include "serm/evaluation.hpp"

namespace serm {

EvalOptions eval_options(const TrainConfig& cfg) {
  EvalOptions o;
  o.use_tangents = cfg.use_tangents;
  o.canonical_scale = cfg.canonical_eval;
  return o;
}

const char* to_string(Method m) {
  switch (m) {
    case Method::Blind: return "blind";
    case Method::Serm: return "serm";
    case Method::Flexible: return "flexible";
    case Method::Robust: return "robust";
    case Method::Intercept: return "intercept";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "blind") return Method::Blind;
  if (s == "serm") return Method::Serm;
  if (s == "flexible") return Method::Flexible;
  if (s == "robust") return Method::Robust;
  if (s == "intercept" || s == "intercept-baseline") return Method::Intercept;
  throw InvalidConfig("unknown method '" + s + "'");
}

namespace {

CostBox default_box(const Cost& c) {
  if (c.num_params() == 0) throw InvalidConfig("cost has no parameters to search over");
  return CostBox{c.v, 1.0};
}

Scorer zero_model(Eigen::Index d) {
  Scorer m;
  m.w = Eigen::VectorXd::Zero(d);
  m.b = 0.0;
  return m;
}

}  // namespace

MethodRun fit_method(const MethodSetup& setup, const Dataset& train, const Dataset& val, const Cost& true_cost,
                     const TrainConfig& base_cfg, const std::vector<double>& lr_grid) {
  TrainConfig cfg = base_cfg;
  if (setup.use_tangents) cfg.use_tangents = *setup.use_tangents;
  const Scorer init = zero_model(train.dim());
  MethodRun run{init, true_cost, {}};
  switch (setup.method) {
    case Method::Blind:
      run.report = tune_learning_rate([&](const TrainConfig& c) { return train_blind(train, val, init, c); }, cfg,
                                      lr_grid);
      break;
    case Method::Serm: {
      const Cost c = setup.train_cost.value_or(true_cost);
      run.report = tune_learning_rate([&](const TrainConfig& k) { return train_serm(train, val, init, c, k); }, cfg,
                                      lr_grid);
      break;
    }
    case Method::Flexible: {
      const CostBox box = setup.box.value_or(default_box(true_cost));
      run.report = tune_learning_rate(
          [&](const TrainConfig& k) { return train_flexible(train, val, init, box, true_cost, k); }, cfg, lr_grid);
      run.eval_cost = true_cost.with_params(*run.report.cost_params);
      break;
    }
    case Method::Robust: {
      const std::vector<Cost> cands = setup.candidates.empty()
                                          ? box_corner_candidates(true_cost, setup.box.value_or(default_box(true_cost)))
                                          : setup.candidates;
      run.report = tune_learning_rate([&](const TrainConfig& k) { return train_robust(train, val, init, cands, k); },
                                      cfg, lr_grid);
      break;
    }
    case Method::Intercept: {
      if (!true_cost.has_linear_part()) throw InvalidConfig("the intercept baseline needs a cost with a linear part");
      run.model = intercept_baseline(train, true_cost.v, true_cost.scale);
      return run;
    }
  }
  run.model = run.report.model;
  return run;
}

Dataset DataSource::load() const {
  if (synthetic && !csv_path.empty()) throw InvalidConfig("data source: give either a synthetic spec or a csv path");
  if (synthetic) return gen_synthetic(*synthetic);
  if (csv_path.empty()) throw InvalidConfig("data source: no csv path or synthetic spec");
  if (label_column.empty()) throw InvalidConfig("data source: label column is required for csv input");
  Dataset d = load_csv(csv_path, label_column, positive_label).data;
  return d;
}

void SweepSpec::validate() const {
  std::vector<std::string> bad;
  if (variable != "gamma" && variable != "scale" && variable != "lambda")
    bad.push_back("sweep variable must be gamma, scale or lambda");
  if (values.empty()) bad.push_back("sweep values must be nonempty");
  if (methods.empty()) bad.push_back("at least one method is required");
  if (n_splits < 1) bad.push_back("n_splits must be >= 1");
  if (lr_grid.empty()) bad.push_back("lr grid must be nonempty");
  if (variable == "gamma" && !cost.has_linear_part()) bad.push_back("a gamma sweep needs a linear or mixture cost");
  for (double v : values) {
    if (!std::isfinite(v)) bad.push_back("sweep values must be finite");
    if (variable == "gamma" && !(v > 0.0 && v <= 1.0)) bad.push_back("gamma values must be in (0, 1]");
    if (variable == "scale" && !(v > 0.0)) bad.push_back("scale values must be > 0");
    if (variable == "lambda" && !(v >= 0.0)) bad.push_back("lambda values must be >= 0");
  }
  if (bad.empty()) return;
  std::string msg = "invalid sweep:";
  for (const auto& b : bad) msg += " " + b + ";";
  throw InvalidConfig(msg, bad);
}

MetricsSummary summarize(const std::vector<Metrics>& runs) {
  MetricsSummary s;
  const double n = double(runs.size());
  if (runs.empty()) return s;
  auto stat = [&](auto get, double& mean, double& sd) {
    mean = 0.0;
    for (const auto& m : runs) mean += get(m);
    mean /= n;
    double ss = 0.0;
    for (const auto& m : runs) ss += (get(m) - mean) * (get(m) - mean);
    sd = runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  };
  stat([](const Metrics& m) { return m.strategic_accuracy; }, s.mean.strategic_accuracy, s.sd.strategic_accuracy);
  stat([](const Metrics& m) { return m.clean_accuracy; }, s.mean.clean_accuracy, s.sd.clean_accuracy);
  stat([](const Metrics& m) { return m.mean_utility; }, s.mean.mean_utility, s.sd.mean_utility);
  stat([](const Metrics& m) { return m.mean_burden; }, s.mean.mean_burden, s.sd.mean_burden);
  stat([](const Metrics& m) { return m.recourse_rate; }, s.mean.recourse_rate, s.sd.recourse_rate);
  double ne = 0, nf = 0;
  for (const auto& m : runs) {
    ne += double(m.n_evaluated);
    nf += double(m.failures);
  }
  s.mean.n_evaluated = static_cast<long>(std::llround(ne / n));
  s.mean.failures = static_cast<long>(std::llround(nf / n));
  return s;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  spec.validate();
  const Dataset all = spec.data.load();
  std::vector<SweepRow> rows;
  for (double value : spec.values) {
    Cost cost = spec.cost;
    TrainConfig cfg = spec.train;
    if (spec.variable == "gamma") {
      cost.kind = CostKind::Mixture;
      cost.gamma = value;
    } else if (spec.variable == "scale") {
      cost.scale = value;
    } else {
      cfg.objective.lambda = value;
    }
    for (const auto& setup : spec.methods) {
      SweepRow row;
      row.value = value;
      row.method = setup.method;
      std::vector<Metrics> runs;
      for (int s = 0; s < spec.n_splits; ++s) {
        const std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(s);
        try {
          Dataset base = spec.data.balance ? balance_classes(all, seed) : all;
          DataSplit sp = split(base, seed);
          if (spec.data.standardize) {
            auto st = standardize_fit_transform(sp.train, {sp.val, sp.test});
            sp = DataSplit{st.train, st.others[0], st.others[1]};
          }
          TrainConfig c = cfg;
          c.seed = seed;
          const MethodRun run = fit_method(setup, sp.train, sp.val, cost, c, spec.lr_grid);
          EvalOptions eo = eval_options(c);
          eo.use_tangents = spec.eval_tangents;
          runs.push_back(evaluate(run.model, sp.test, run.eval_cost, c.eval_response, eo));
        } catch (const std::exception& e) {
          row.failed = true;
          if (row.error.empty()) row.error = e.what();
        }
      }
      row.n_ok = static_cast<int>(runs.size());
      row.metrics = summarize(runs);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& variable, std::ostream& out) {
  out << variable
      << ",method,n_ok,failed,strategic_accuracy,strategic_accuracy_sd,clean_accuracy,clean_accuracy_sd,"
         "mean_utility,mean_utility_sd,mean_burden,mean_burden_sd,recourse_rate,recourse_rate_sd,error\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    const auto& m = r.metrics.mean;
    const auto& s = r.metrics.sd;
    std::string err = r.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    out << r.value << ',' << to_string(r.method) << ',' << r.n_ok << ',' << (r.failed ? 1 : 0) << ','
        << m.strategic_accuracy << ',' << s.strategic_accuracy << ',' << m.clean_accuracy << ',' << s.clean_accuracy
        << ',' << m.mean_utility << ',' << s.mean_utility << ',' << m.mean_burden << ',' << s.mean_burden << ','
        << m.recourse_rate << ',' << s.recourse_rate << ',' << err << '\n';
  }
}

std::vector<BenchRow> runtime_bench(const BenchSpec& spec) {
  if (spec.batch_sizes.empty()) throw InvalidConfig("bench needs at least one batch size");
  if (spec.epochs < 1) throw InvalidConfig("bench epochs must be >= 1");
  if (spec.repeats < 1) throw InvalidConfig("bench repeats must be >= 1");
  if (spec.dim < 1 || spec.n_train < 1 || spec.n_val < 1) throw InvalidConfig("bench sizes must be positive");
  GaussianMixtureSpec g;
  g.mean_pos = Eigen::VectorXd::Constant(spec.dim, 0.5 / std::sqrt(double(spec.dim)));
  g.mean_neg = -g.mean_pos;
  g.var_neg = Eigen::VectorXd::Constant(spec.dim, 0.25);
  g.var_pos = g.var_neg;
  SyntheticSpec ss;
  ss.kind = g;
  ss.n = spec.n_train + spec.n_val;
  ss.seed = spec.seed;
  ss.label_noise = spec.label_noise;
  const Dataset all = gen_synthetic(ss);
  std::vector<Eigen::Index> tr(static_cast<size_t>(spec.n_train)), va(static_cast<size_t>(spec.n_val));
  for (Eigen::Index i = 0; i < spec.n_train; ++i) tr[i] = i;
  for (Eigen::Index i = 0; i < spec.n_val; ++i) va[i] = spec.n_train + i;
  const auto st = standardize_fit_transform(all.subset(tr), {all.subset(va)});

  std::vector<BenchRow> rows;
  for (int bs : spec.batch_sizes) {
    if (bs < 1 || bs > spec.n_train) throw InvalidConfig("bench batch size out of range");
    TrainConfig cfg;
    cfg.batch_size = bs;
    cfg.max_epochs = spec.epochs;
    cfg.patience = spec.epochs - 1;  // a full patience window only closes at the last epoch
    cfg.adam.learning_rate = spec.learning_rate;
    cfg.seed = spec.seed;
    cfg.canonical_eval = true;
    Scorer init;
    init.w = Eigen::VectorXd::Zero(spec.dim);
    BenchRow best;
    for (int k = 0; k < spec.repeats; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      const TrainReport rep = train_serm(st.train, st.others[0], init, spec.cost, cfg);
      BenchRow r;
      r.batch_size = bs;
      r.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.ccp_seconds = rep.ccp_seconds;
      r.ccp_share = r.total_seconds > 0 ? std::clamp(r.ccp_seconds / r.total_seconds, 0.0, 1.0) : 0.0;
      r.ccp_iterations = rep.ccp_iterations;
      r.steps = rep.steps;
      r.epochs = rep.epochs_run;
      if (k == 0 || r.total_seconds < best.total_seconds) best = r;
    }
    rows.push_back(best);
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "batch_size,epochs,steps,total_seconds,ccp_seconds,ccp_share,ccp_iterations\n";
  out << std::setprecision(8);
  for (const auto& r : rows)
    out << r.batch_size << ',' << r.epochs << ',' << r.steps << ',' << r.total_seconds << ',' << r.ccp_seconds << ','
        << r.ccp_share << ',' << r.ccp_iterations << '\n';
}

}  // namespace serm
