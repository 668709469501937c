#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "serm/errors.hpp"
#include "serm/evaluation.hpp"
#include "serm/experiments.hpp"
#include "serm/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace serm::cli {

namespace {

constexpr int kManifestFormat = 1;

const std::vector<std::string> kSections = {"data.",  "split.", "cost.",   "train.",      "objective.",
                                            "method.", "eval.",  "sweep.", "bench.", "experiment."};

struct Invocation {
  std::string command;
  std::string config_path, manifest_path, out, model;
  std::vector<std::string> sets;
};

// Everything a command produced, for the manifest.
struct Run {
  std::string command;
  Config cfg;
  ConfigReader reader;
  fs::path out;
  std::vector<std::string> outputs;
  std::ostream& log;

  Run(std::string cmd, Config c, std::ostream& l) : command(std::move(cmd)), cfg(std::move(c)), reader(cfg), log(l) {}

  // Accepts the sections this command does not consume, then validates.
  void finish(const std::vector<std::string>& own) {
    for (const auto& s : kSections)
      if (std::find(own.begin(), own.end(), s) == own.end()) reader.tolerate(s);
    reader.finish();
    fs::create_directories(out);
  }

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

json metrics_json(const Metrics& m) {
  return json{{"strategic_accuracy", number(m.strategic_accuracy)},
              {"clean_accuracy", number(m.clean_accuracy)},
              {"mean_utility", number(m.mean_utility)},
              {"mean_burden", number(m.mean_burden)},
              {"recourse_rate", number(m.recourse_rate)},
              {"n_evaluated", m.n_evaluated},
              {"failures", m.failures},
              {"denied", m.denied},
              {"granted", m.granted}};
}

json cost_json(const Cost& c) {
  return json{{"kind", to_string(c.kind)},
              {"v", vec_json(c.v)},
              {"gamma", c.gamma},
              {"beta", c.beta},
              {"scale", c.scale}};
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw InvalidInput("cannot write '" + p.string() + "'");
  f << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw InvalidInput("cannot write '" + p.string() + "'");
  return f;
}

template <typename F>
void check(ConfigReader& r, const std::string& what, F&& fn) {
  try {
    fn();
  } catch (const InvalidConfig& e) {
    if (e.violations().empty())
      r.require(false, what + ": " + e.what());
    else
      for (const auto& v : e.violations()) r.require(false, what + ": " + v);
  }
}

std::optional<std::vector<double>> opt_reals(Run& run, const std::string& key) {
  if (!run.cfg.has(key)) return std::nullopt;
  return run.reader.reals(key, {});
}

// ---- shared sections -----------------------------------------------------

DataSource read_data(Run& run) {
  ConfigReader& r = run.reader;
  DataSource src;
  const auto csv = r.opt_str("data.csv");
  const std::string synth = r.str("data.synthetic", csv ? "" : "gaussian");
  if (csv) {
    src.csv_path = *csv;
    src.label_column = r.str("data.label", "label");
    src.positive_label = r.str("data.positive", "1");
    r.require(synth.empty(), "data: give either data.csv or data.synthetic, not both");
  } else {
    SyntheticSpec s;
    s.n = r.integer("data.n", 1000);
    s.seed = static_cast<std::uint64_t>(r.integer("data.seed", 0));
    s.label_noise = r.real("data.label_noise", 0.0);
    if (synth == "gaussian") {
      const auto mp = r.reals("data.mean_pos", {0.5, 0.0});
      std::vector<double> neg(mp.size());
      for (size_t i = 0; i < mp.size(); ++i) neg[i] = -mp[i];
      const auto mn = r.reals("data.mean_neg", neg);
      const auto sd = r.reals("data.sd", std::vector<double>(mp.size(), 0.25));
      r.require(!mp.empty() && mn.size() == mp.size() && sd.size() == mp.size(),
                "data: mean_pos, mean_neg and sd must have the same nonzero length");
      GaussianMixtureSpec g;
      g.mean_pos = to_vector(mp);
      g.mean_neg = to_vector(mn);
      g.var_pos = to_vector(sd).cwiseAbs2();
      g.var_neg = g.var_pos;
      s.kind = g;
    } else if (synth == "manifold") {
      ParabolaManifoldSpec p;
      p.lo = r.real("data.lo", p.lo);
      p.hi = r.real("data.hi", p.hi);
      s.kind = p;
    } else {
      r.require(false, "data.synthetic: '" + synth + "' is not gaussian or manifold");
    }
    check(r, "data", [&] { s.validate(); });
    src.synthetic = s;
  }
  // Synthetic experiments run in raw coordinates; real data is z-scored.
  src.standardize = r.flag("data.standardize", csv.has_value());
  src.balance = r.flag("data.balance", false);
  return src;
}

Cost read_cost(Run& run) {
  ConfigReader& r = run.reader;
  Cost c;
  const std::string kind = r.str("cost.kind", "quadratic");
  check(r, "cost.kind", [&] { c.kind = cost_kind_from_string(kind); });
  c.v = to_vector(r.reals("cost.v", {}));
  c.gamma = r.real("cost.gamma", 1.0);
  c.beta = r.real("cost.beta", 50.0);
  c.scale = r.real("cost.scale", 1.0);
  if (c.kind == CostKind::LinearSeparable && !run.cfg.has("cost.gamma")) c.gamma = 0.0;
  check(r, "cost", [&] { c.validate(); });
  return c;
}

struct TrainSettings {
  TrainConfig cfg;
  std::vector<double> lr_grid;
};

// Response and evaluation settings shared by every command that responds.
void read_response(Run& run, TrainConfig& t) {
  ConfigReader& r = run.reader;
  t.eval_response.tau = r.real("train.eval_tau", 0.2);
  t.response.tol = t.eval_response.tol = r.real("train.tol", 1e-3);
  t.response.max_iter = t.eval_response.max_iter = static_cast<int>(r.integer("train.max_iter", 100));
  t.use_tangents = r.flag("train.tangents", false);
  t.canonical_eval = r.flag("train.canonical_eval", true);
  check(r, "train", [&] { t.eval_response.validate(); });
}

TrainSettings read_train(Run& run) {
  ConfigReader& r = run.reader;
  TrainSettings s;
  TrainConfig& t = s.cfg;
  s.lr_grid = r.reals("train.lr_grid", {1e-3, 1e-2, 1e-1});
  r.require(!s.lr_grid.empty(), "train.lr_grid must be nonempty");
  for (double lr : s.lr_grid) r.require(lr > 0.0, "train.lr_grid entries must be > 0");
  t.batch_size = static_cast<int>(r.integer("train.batch_size", 64));
  t.max_epochs = static_cast<int>(r.integer("train.max_epochs", 10));
  t.patience = static_cast<int>(r.integer("train.patience", 2));
  t.seed = static_cast<std::uint64_t>(r.integer("train.seed", 0));
  t.response.tau = r.real("train.tau", 1.0);
  read_response(run, t);
  t.max_failure_rate = r.real("train.max_failure_rate", 0.01);
  const std::string jac = r.str("train.jacobian", "fixed_point");
  if (jac == "fixed_point")
    t.jacobian_mode = JacobianMode::FixedPoint;
  else if (jac == "frozen")
    t.jacobian_mode = JacobianMode::FrozenLinearization;
  else
    r.require(false, "train.jacobian: '" + jac + "' is not fixed_point or frozen");
  const std::string reg = r.str("objective.regularizer", "none");
  check(r, "objective.regularizer", [&] { t.objective.regularizer = regularizer_from_string(reg); });
  t.objective.lambda = r.real("objective.lambda", 0.0);
  t.objective.recourse_masked = r.flag("objective.recourse_masked", false);
  check(r, "train", [&] { t.validate(std::numeric_limits<Eigen::Index>::max()); });
  return s;
}

std::vector<Cost> parse_candidates(Run& run, const Cost& base) {
  std::vector<Cost> out;
  const auto s = run.reader.opt_str("method.candidates");
  if (!s) return out;
  for (const auto& item : split_list(*s, ';')) {
    check(run.reader, "method.candidates", [&] {
      Cost c = base;
      c.v = to_vector(parse_reals(item));
      c.validate();
      out.push_back(c);
    });
  }
  return out;
}

// Settings for flexible / robust / naive runs; applied to every method.
MethodSetup read_method(Run& run, Method m, const Cost& cost) {
  ConfigReader& r = run.reader;
  MethodSetup s = MethodSetup::of(m);
  if (const auto tv = opt_reals(run, "method.train_cost_v")) {
    Cost c = cost;
    c.v = to_vector(*tv);
    check(r, "method.train_cost_v", [&] { c.validate(); });
    s.train_cost = c;
  }
  const auto center = opt_reals(run, "method.box_center");
  const double radius = r.real("method.box_radius", 1.0);
  if (m == Method::Flexible || m == Method::Robust) {
    r.require(cost.num_params() > 0, "method " + std::string(to_string(m)) + " needs a cost with parameters v");
    CostBox box{center ? to_vector(*center) : cost.v, radius};
    check(r, "method.box", [&] { box.validate(); });
    if (box.center.size() != cost.v.size()) r.require(false, "method.box_center must match cost.v in length");
    s.box = box;
  }
  if (m == Method::Robust) s.candidates = parse_candidates(run, cost);
  return s;
}

std::vector<MethodSetup> read_methods(Run& run, const std::vector<std::string>& names, const Cost& cost) {
  std::vector<MethodSetup> out;
  // Reading method.* once per method would re-resolve the same keys; fine.
  for (const auto& n : names) {
    std::optional<Method> m;
    check(run.reader, "method", [&] { m = method_from_string(n); });
    if (m) out.push_back(read_method(run, *m, cost));
  }
  return out;
}

struct Prepared {
  DataSplit split;
  std::optional<Standardizer> standardizer;
};

Prepared prepare(const DataSource& src, std::uint64_t split_seed, const std::optional<Standardizer>& fitted) {
  Dataset all = src.load();
  if (src.balance) all = balance_classes(all, split_seed);
  Prepared p;
  p.split = split(all, split_seed);
  if (fitted) {
    p.standardizer = fitted;
    p.split = DataSplit{fitted->transform(p.split.train), fitted->transform(p.split.val),
                        fitted->transform(p.split.test)};
  } else if (src.standardize) {
    auto st = standardize_fit_transform(p.split.train, {p.split.val, p.split.test});
    p.standardizer = st.standardizer;
    p.split = DataSplit{st.train, st.others[0], st.others[1]};
  }
  return p;
}

const Dataset& pick_split(const DataSplit& s, const std::string& which, Dataset& scratch) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  std::vector<Eigen::Index> idx;
  scratch = s.train;
  for (const Dataset* d : {&s.val, &s.test}) {
    Dataset merged;
    merged.X.resize(scratch.size() + d->size(), scratch.dim());
    merged.X << scratch.X, d->X;
    merged.y.resize(scratch.size() + d->size());
    merged.y << scratch.y, d->y;
    merged.feature_names = scratch.feature_names;
    if (scratch.has_tangents() && d->has_tangents()) {
      merged.tangents = scratch.tangents;
      merged.tangents.insert(merged.tangents.end(), d->tangents.begin(), d->tangents.end());
    }
    scratch = std::move(merged);
  }
  return scratch;
}

// ---- commands ------------------------------------------------------------

json report_json(const MethodRun& mr, Method method) {
  const TrainReport& rep = mr.report;
  json hist = json::array();
  for (const auto& e : rep.history)
    hist.push_back(json{{"epoch", e.epoch},
                        {"train_loss", number(e.train_loss)},
                        {"val_accuracy", number(e.val_accuracy)},
                        {"skipped", e.skipped}});
  json j{{"method", to_string(method)},
         {"learning_rate", rep.learning_rate},
         {"epochs_run", rep.epochs_run},
         {"best_epoch", rep.best_epoch},
         {"best_val_accuracy", rep.best_val_accuracy},
         {"skipped_examples", rep.skipped_examples},
         {"steps", rep.steps},
         {"ccp_iterations", rep.ccp_iterations},
         {"history", hist},
         {"w", vec_json(mr.model.w)},
         {"b", mr.model.b},
         {"eval_cost", cost_json(mr.eval_cost)},
         {"cost_params", rep.cost_params ? vec_json(*rep.cost_params) : json(nullptr)}};
  if (method == Method::Robust) {
    j["worst_case_train_loss"] = number(rep.worst_case_train_loss);
    json c = json::array();
    for (double x : rep.candidate_train_losses) c.push_back(number(x));
    j["candidate_train_losses"] = c;
  }
  return j;
}

void cmd_train(Run& run) {
  ConfigReader& r = run.reader;
  const DataSource src = read_data(run);
  const auto split_seed = static_cast<std::uint64_t>(r.integer("split.seed", 0));
  const Cost cost = read_cost(run);
  TrainSettings ts = read_train(run);
  const std::string mname = r.str("train.method", "serm");
  std::optional<Method> method;
  check(r, "train.method", [&] { method = method_from_string(mname); });
  MethodSetup setup = method ? read_method(run, *method, cost) : MethodSetup{};
  run.finish({"data.", "split.", "cost.", "train.", "objective.", "method."});

  const Prepared p = prepare(src, split_seed, std::nullopt);
  ts.cfg.validate(p.split.train.size());
  const MethodRun mr = fit_method(setup, p.split.train, p.split.val, cost, ts.cfg, ts.lr_grid);

  ModelFile mf{mr.model, p.standardizer, mr.eval_cost};
  if (setup.method == Method::Serm && setup.train_cost) mf.cost = *setup.train_cost;
  save_model(mf, run.file("model.txt"));

  json rep = report_json(mr, setup.method);
  const Metrics test = evaluate(mr.model, p.split.test, mr.eval_cost, ts.cfg.eval_response, eval_options(ts.cfg));
  rep["test"] = metrics_json(test);
  rep["timing"] = json{{"total_seconds", mr.report.total_seconds}, {"ccp_seconds", mr.report.ccp_seconds}};
  write_json(run.file("report.json"), rep);
  run.log << "trained " << to_string(setup.method) << ": ";
  if (setup.method != Method::Intercept)
    run.log << "val accuracy " << mr.report.best_val_accuracy << " (epoch " << mr.report.best_epoch << "), ";
  run.log << "test strategic accuracy " << test.strategic_accuracy << " -> " << (run.out / "model.txt").string()
          << '\n';
}

struct Loaded {
  ModelFile model;
  Prepared data;
  Cost cost;
  TrainConfig settings;
  std::string split_name;
  bool exact = false;
};

Loaded load_for_eval(Run& run, const std::string& model_path) {
  ConfigReader& r = run.reader;
  Loaded L;
  const std::string path = r.str("model", model_path);
  r.require(!path.empty(), "model: a model file is required (--model or model=...)");
  const DataSource src = read_data(run);
  const auto split_seed = static_cast<std::uint64_t>(r.integer("split.seed", 0));
  const Cost cfg_cost = read_cost(run);
  read_response(run, L.settings);
  L.split_name = r.str("eval.split", "test");
  r.require(L.split_name == "train" || L.split_name == "val" || L.split_name == "test" || L.split_name == "all",
            "eval.split must be train, val, test or all");
  const std::string which_cost = r.str("eval.cost", "model");
  r.require(which_cost == "model" || which_cost == "config", "eval.cost must be model or config");
  L.exact = r.flag("eval.exact", false);
  run.finish({"data.", "split.", "cost.", "eval."});

  L.model = load_model(path);
  L.cost = which_cost == "model" && L.model.cost ? *L.model.cost : cfg_cost;
  L.data = prepare(src, split_seed, L.model.standardizer);
  if (!L.model.standardizer && src.standardize)
    run.log << "note: model has no standardizer; evaluating on raw features\n";
  return L;
}

EvalOptions eval_opts(const Loaded& L) {
  EvalOptions o = eval_options(L.settings);
  o.exact_responses = L.exact;
  return o;
}

void cmd_evaluate(Run& run, const std::string& model_path) {
  Loaded L = load_for_eval(run, model_path);
  Dataset scratch;
  const Dataset& d = pick_split(L.data.split, L.split_name, scratch);
  const Metrics m = evaluate(L.model.model, d, L.cost, L.settings.eval_response, eval_opts(L));
  json j = metrics_json(m);
  j["split"] = L.split_name;
  j["n"] = d.size();
  j["cost"] = cost_json(L.cost);
  write_json(run.file("metrics.json"), j);
  run.log << L.split_name << ": strategic accuracy " << m.strategic_accuracy << ", clean accuracy "
          << m.clean_accuracy << " (" << m.n_evaluated << " evaluated, " << m.failures << " failed)\n";
}

void cmd_respond(Run& run, const std::string& model_path) {
  Loaded L = load_for_eval(run, model_path);
  Dataset scratch;
  const Dataset& d = pick_split(L.data.split, L.split_name, scratch);
  const auto rows = respond_rows(L.model.model, d, L.cost, L.settings.eval_response, eval_opts(L));
  auto f = open_out(run.file("respond.csv"));
  f << std::setprecision(17);
  const Eigen::Index k = rows.empty() ? 0 : rows.front().x.size();
  f << "index,label,ok";
  for (Eigen::Index j = 0; j < k; ++j) f << ",x_" << j + 1;
  for (Eigen::Index j = 0; j < k; ++j) f << ",xstar_" << j + 1;
  f << ",score_before,score_after,payoff\n";
  long moved = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    f << i << ',' << row.y << ',' << (row.ok ? 1 : 0);
    for (Eigen::Index j = 0; j < k; ++j) f << ',' << row.x(j);
    for (Eigen::Index j = 0; j < k; ++j) f << ',' << row.x_star(j);
    f << ',' << row.score_before << ',' << row.score_after << ',' << row.payoff << '\n';
    moved += (row.x_star - row.x).norm() > 1e-9;
  }
  run.log << rows.size() << " responses written, " << moved << " moved\n";
}

void cmd_sweep(Run& run) {
  ConfigReader& r = run.reader;
  SweepSpec spec;
  spec.data = read_data(run);
  spec.cost = read_cost(run);
  TrainSettings ts = read_train(run);
  spec.train = ts.cfg;
  spec.lr_grid = ts.lr_grid;
  spec.variable = r.str("sweep.variable", "lambda");
  spec.values = r.reals("sweep.values", {});
  spec.methods = read_methods(run, r.strings("sweep.methods", {"serm"}), spec.cost);
  spec.n_splits = static_cast<int>(r.integer("sweep.splits", 5));
  spec.seed = static_cast<std::uint64_t>(r.integer("sweep.seed", 0));
  spec.eval_tangents = r.flag("sweep.eval_tangents", spec.train.use_tangents);
  check(r, "sweep", [&] { spec.validate(); });
  run.finish({"data.", "cost.", "train.", "objective.", "method.", "sweep."});

  const auto rows = run_sweep(spec);
  auto f = open_out(run.file("sweep.csv"));
  write_sweep_csv(rows, spec.variable, f);
  long failed = 0;
  for (const auto& row : rows) failed += row.failed;
  run.log << rows.size() << " sweep rows written" << (failed ? ", " + std::to_string(failed) + " with failures" : "")
          << '\n';
}

void cmd_synth(Run& run) {
  const DataSource src = read_data(run);
  run.reader.require(src.synthetic.has_value(), "synth needs a synthetic data spec (data.synthetic)");
  run.finish({"data."});
  const Dataset d = src.load();
  write_csv(d, run.file("data.csv").string());
  run.log << d.size() << " rows written\n";
}

void cmd_bench(Run& run) {
  ConfigReader& r = run.reader;
  BenchSpec b;
  b.batch_sizes.clear();
  for (double x : r.reals("bench.batch_sizes", {8, 128})) {
    r.require(x >= 1 && x == std::floor(x), "bench.batch_sizes must be positive integers");
    b.batch_sizes.push_back(static_cast<int>(x));
  }
  b.epochs = static_cast<int>(r.integer("bench.epochs", b.epochs));
  b.repeats = static_cast<int>(r.integer("bench.repeats", b.repeats));
  b.n_train = r.integer("bench.n_train", b.n_train);
  b.n_val = r.integer("bench.n_val", b.n_val);
  b.dim = r.integer("bench.dim", b.dim);
  b.label_noise = r.real("bench.label_noise", b.label_noise);
  b.learning_rate = r.real("bench.lr", b.learning_rate);
  b.seed = static_cast<std::uint64_t>(r.integer("bench.seed", 0));
  b.cost = read_cost(run);
  run.finish({"cost.", "bench."});
  const auto rows = runtime_bench(b);
  auto f = open_out(run.file("bench.csv"));
  write_bench_csv(rows, f);
  for (const auto& row : rows)
    run.log << "batch " << row.batch_size << ": " << row.total_seconds << " s (" << std::lround(100 * row.ccp_share)
            << "% in CCP)\n";
}

void write_summaries(std::ostream& f, const std::vector<MethodSummary>& ms, const std::string& prefix) {
  f << std::setprecision(10);
  for (const auto& m : ms) {
    f << prefix << m.name << ',' << m.mean << ',' << m.sd << ',' << m.clean_mean << ',' << m.accuracy.size() << ',';
    for (size_t i = 0; i < m.accuracy.size(); ++i) f << (i ? ";" : "") << m.accuracy[i];
    f << '\n';
  }
}

void cmd_experiment(Run& run) {
  ConfigReader& r = run.reader;
  ExperimentOptions o;
  const std::string name = r.str("experiment.name", "");
  r.require(name == "flexible" || name == "robust" || name == "manifold" || name == "core" || name == "tradeoff",
            "experiment.name must be flexible, robust, manifold, core or tradeoff");
  o.n_seeds = static_cast<int>(r.integer("experiment.seeds", 5));
  o.seed = static_cast<std::uint64_t>(r.integer("experiment.seed", 0));
  o.n = r.integer("experiment.n", 1000);
  o.standardize = r.flag("experiment.standardize", false);
  const TrainSettings ts = read_train(run);
  o.train = ts.cfg;
  o.lr_grid = ts.lr_grid;
  const double grid = r.real("experiment.oracle_grid_step", 0.5);
  const auto scales = r.reals("experiment.scales", {0.5, 1, 2});
  const auto lambdas = r.reals("experiment.lambdas", {0, 0.01, 0.03, 0.1, 0.3, 1});
  r.require(o.n_seeds >= 1, "experiment.seeds must be >= 1");
  r.require(grid > 0, "experiment.oracle_grid_step must be > 0");
  run.finish({"train.", "objective.", "experiment."});
  o.log = [&](const std::string& s) { run.log << s << '\n'; };

  auto f = open_out(run.file("experiment.csv"));
  if (name == "core") {
    f << "scale,method,strategic_accuracy,sd,clean_accuracy,n,runs\n";
    for (const auto& row : core_gap_experiment(o, scales))
      write_summaries(f, {row.blind, row.serm}, format_real(row.scale) + ",");
  } else if (name == "tradeoff") {
    f << "regularizer,lambda,strategic_accuracy,social\n" << std::setprecision(10);
    for (const auto& p : regularization_tradeoff(o, lambdas))
      f << to_string(p.regularizer) << ',' << p.lambda << ',' << p.accuracy << ',' << p.social << '\n';
  } else {
    const ExperimentResult res = name == "flexible" ? flexible_experiment(o, grid)
                                 : name == "robust" ? robust_experiment(o)
                                                    : manifold_experiment(o);
    f << "method,strategic_accuracy,sd,clean_accuracy,n,runs\n";
    write_summaries(f, res.methods, "");
    for (const auto& m : res.methods)
      run.log << m.name << ": " << m.mean << " +- " << m.sd << '\n';
  }
}

// ---- plumbing ------------------------------------------------------------

json manifest_json(const Run& run, const std::vector<std::string>& args) {
  json cfg = json::object();
  for (const auto& [k, v] : run.reader.resolved().values) cfg[k] = v;
  return json{{"tool", "serm"}, {"format", kManifestFormat}, {"command", run.command},
              {"config", cfg},  {"outputs", run.outputs},  {"args", args}};
}

Config assemble(const Invocation& inv) {
  Config cfg;
  if (!inv.manifest_path.empty()) {
    std::ifstream in(inv.manifest_path);
    if (!in) throw InvalidConfig("cannot open manifest '" + inv.manifest_path + "'");
    json m;
    try {
      in >> m;
    } catch (const json::exception& e) {
      throw InvalidConfig("manifest '" + inv.manifest_path + "' is not valid JSON: " + e.what());
    }
    if (!m.contains("command") || !m.contains("config") || !m["config"].is_object())
      throw InvalidConfig("manifest '" + inv.manifest_path + "' lacks command/config");
    if (m["command"] != inv.command)
      throw InvalidConfig("manifest was written by '" + m["command"].get<std::string>() + "', not '" + inv.command +
                          "'");
    for (const auto& [k, v] : m["config"].items()) cfg.values[k] = v.get<std::string>();
  }
  if (!inv.config_path.empty()) {
    const Config file = Config::load(inv.config_path);
    for (const auto& [k, v] : file.values) cfg.values[k] = v;
  }
  std::vector<std::string> bad;
  for (const auto& s : inv.sets) {
    try {
      cfg.set(s);
    } catch (const InvalidConfig& e) {
      bad.push_back(e.what());
    }
  }
  if (!bad.empty()) {
    std::string msg = "invalid overrides:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw InvalidConfig(msg, bad);
  }
  if (!inv.out.empty()) cfg.values["out"] = inv.out;
  if (!inv.model.empty()) cfg.values["model"] = inv.model;
  return cfg;
}

int fail(std::ostream& err, const fs::path& out, int code, const std::string& kind, const std::string& message,
         const std::vector<std::string>& violations = {}) {
  json j{{"error", kind}, {"message", message}, {"exit_code", code}};
  if (!violations.empty()) j["violations"] = violations;
  err << j.dump() << '\n';
  if (!out.empty()) {
    std::error_code ec;
    fs::create_directories(out, ec);
    std::ofstream f(out / "error.json");
    if (f) f << j.dump(2) << '\n';
  }
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Strategic classification: train and evaluate models under strategic user response.", "serm"};
  app.require_subcommand(1);
  Invocation inv;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "Fit a model; writes model.txt and report.json"},
      {"evaluate", "Score a saved model; writes metrics.json"},
      {"respond", "Per-example responses to a saved model; writes respond.csv"},
      {"sweep", "Sweep gamma, scale or lambda over methods and splits; writes sweep.csv"},
      {"synth", "Generate a synthetic dataset; writes data.csv"},
      {"bench", "Training runtime by batch size; writes bench.csv"},
      {"experiment", "Run a built-in synthetic experiment; writes experiment.csv"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sc = app.add_subcommand(name, help);
    sc->add_option("-c,--config", inv.config_path, "key=value config file");
    sc->add_option("-s,--set", inv.sets, "override, key=value (repeatable)")->allow_extra_args(false);
    sc->add_option("-o,--out", inv.out, "output directory (config key: out)");
    sc->add_option("--manifest", inv.manifest_path, "replay the configuration recorded in a manifest.json");
    if (name == "evaluate" || name == "respond") sc->add_option("--model", inv.model, "model file (config key: model)");
    sc->callback([&inv, n = name] { inv.command = n; });
  }

  std::vector<std::string> argv_s{"serm"};
  argv_s.insert(argv_s.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_s) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    return fail(err, {}, kConfigError, "usage", e.what());
  }

  fs::path out_dir;
  try {
    Config cfg = assemble(inv);
    out_dir = cfg.has("out") ? cfg.values["out"] : "run";
    Run r(inv.command, cfg, out);
    r.out = out_dir;
    r.reader.str("out", "run");
    if (inv.command == "train") cmd_train(r);
    else if (inv.command == "evaluate") cmd_evaluate(r, "");
    else if (inv.command == "respond") cmd_respond(r, "");
    else if (inv.command == "sweep") cmd_sweep(r);
    else if (inv.command == "synth") cmd_synth(r);
    else if (inv.command == "bench") cmd_bench(r);
    else cmd_experiment(r);

    std::ofstream rc(r.out / "resolved.cfg");
    r.reader.resolved().write(rc);
    r.outputs.push_back("resolved.cfg");
    write_json(r.out / "manifest.json", manifest_json(r, args));
    return kOk;
  } catch (const InvalidConfig& e) {
    return fail(err, out_dir, kConfigError, "invalid_config", e.what(), e.violations());
  } catch (const InvalidInput& e) {
    return fail(err, out_dir, kInputError, "invalid_input", e.what());
  } catch (const SolverFailure& e) {
    return fail(err, out_dir, kSolverError, "solver_failure", e.what());
  } catch (const DegenerateJacobian& e) {
    return fail(err, out_dir, kSolverError, "degenerate_jacobian", e.what());
  } catch (const std::exception& e) {
    return fail(err, out_dir, kOther, "error", e.what());
  }
}

}  // namespace serm::cli
