#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "serm/evaluation.hpp"

using namespace serm;
using th::vec;

namespace {

SweepSpec small_sweep() {
  SweepSpec s;
  GaussianMixtureSpec g{vec({-0.5, 0}), vec({0.5, 0}), vec({0.0625, 0.0625}), vec({0.0625, 0.0625})};
  s.data.synthetic = SyntheticSpec{g, 200, 1, 0.0};
  s.data.standardize = false;
  s.methods = {MethodSetup::of(Method::Serm)};
  s.train.max_epochs = 3;
  s.train.patience = 1;
  s.train.batch_size = 32;
  s.lr_grid = {0.05};
  s.n_splits = 2;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("pinned responses: strategic accuracy equals clean accuracy") {
  const Dataset d = th::blobs(200, 0.3, 0.4, 41);
  const Scorer m = th::scorer({1.5, 0.2}, 0.1);
  const auto r = evaluate(m, d, Cost::quadratic(1e6), ResponseCfg::evaluation());
  CHECK(r.strategic_accuracy == r.clean_accuracy);
  CHECK(r.clean_accuracy == clean_accuracy(m, d));
  CHECK(r.n_evaluated == 200);
  CHECK(r.failures == 0);
}

TEST_CASE("strategic accuracy equals clean accuracy of the responded dataset") {
  const Dataset d = th::blobs(200, 0.3, 0.4, 42);
  const Scorer m = th::scorer({1.0, -0.5}, -0.2);
  for (const Cost& c : {Cost::quadratic(), Cost::weighted_quadratic(vec({0.5, 2})), Cost::mixture(0.5, vec({1, 0}))}) {
    const auto r = evaluate(m, d, c, ResponseCfg::evaluation());
    const Dataset moved = respond_dataset(m, d, c, ResponseCfg::evaluation());
    CHECK(r.strategic_accuracy == clean_accuracy(m, moved));
    const auto rows = respond_rows(m, d, c, ResponseCfg::evaluation());
    REQUIRE(rows.size() == 200);
    for (size_t i = 0; i < rows.size(); ++i) {
      REQUIRE((rows[i].x_star - moved.row(static_cast<Eigen::Index>(i))).norm() == 0.0);
      REQUIRE(rows[i].score_after == m.head(rows[i].x_star));
    }
  }
}

TEST_CASE("canonical scale: sign unchanged, responses match the unit-norm model") {
  const Scorer m = th::scorer({3.0, 4.0}, 2.5);
  const Scorer c = canonical(m);
  CHECK(c.w.norm() == doctest::Approx(1.0));
  CHECK(c.b == doctest::Approx(0.5));
  const Dataset d = th::blobs(100, 0.3, 0.4, 43);
  EvalOptions eo;
  eo.canonical_scale = true;
  const auto a = evaluate(m, d, Cost::quadratic(), ResponseCfg::evaluation(), eo);
  const auto b = evaluate(c, d, Cost::quadratic(), ResponseCfg::evaluation());
  CHECK(a.strategic_accuracy == b.strategic_accuracy);
  CHECK(a.clean_accuracy == clean_accuracy(m, d));
}

TEST_CASE("recourse rate: 1 when nobody is denied; grows with a cheaper cost") {
  const Dataset d = th::blobs(100, 0.3, 0.3, 44);
  const auto all_in = evaluate(th::scorer({0, 0}, 1.0), d, Cost::quadratic(), ResponseCfg::evaluation());
  CHECK(all_in.denied == 0);
  CHECK(all_in.recourse_rate == 1.0);
  const Scorer m = th::scorer({1, 0}, -0.2);
  const auto cheap = evaluate(m, d, Cost::quadratic(0.1), ResponseCfg::evaluation());
  const auto dear = evaluate(m, d, Cost::quadratic(10), ResponseCfg::evaluation());
  CHECK(cheap.denied > 0);
  CHECK(cheap.recourse_rate > dear.recourse_rate);
  CHECK(cheap.granted <= cheap.denied);
}

TEST_CASE("burden metric: mean over positives, NaN without a closed form") {
  Dataset d;
  d.X.resize(3, 2);
  d.X << -2, 0, 1, 0, -5, 0;
  d.y = vec({1, 1, -1});
  const auto r = evaluate(th::scorer({1, 0}, 0.0), d, Cost::quadratic(), ResponseCfg::evaluation());
  CHECK(r.mean_burden == doctest::Approx(2.0));
  const auto n = evaluate(th::scorer({1, 0}, 0.0), d, Cost::mixture(0.5, vec({1, 0})), ResponseCfg::evaluation());
  CHECK(std::isnan(n.mean_burden));
}

TEST_CASE("exact responses: everyone within reach crosses, nobody else moves") {
  const Dataset d = th::blobs(200, 0.5, 0.2, 45);
  const Scorer m = th::scorer({1, 0}, 0.0);
  EvalOptions exact;
  exact.exact_responses = true;
  // Crossing is worth 2, so a point moves iff t * f^2 < 2.
  for (double t : {1.0, 20.0}) {
    long correct = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const double f = m.head(d.row(i));
      const double pred = (f >= 0 || t * f * f < 2.0) ? 1.0 : -1.0;
      correct += pred == d.y(i);
    }
    const auto r = evaluate(m, d, Cost::quadratic(t), ResponseCfg::evaluation(), exact);
    CHECK(r.strategic_accuracy == doctest::Approx(double(correct) / 200.0));
  }
}

TEST_CASE("method names round trip") {
  for (Method m : {Method::Blind, Method::Serm, Method::Flexible, Method::Robust, Method::Intercept})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("oracle-ish"), InvalidConfig);
}

TEST_CASE("sweep: lambda {0} with a regularizer equals the unregularized pipeline") {
  SweepSpec plain = small_sweep();
  plain.variable = "lambda";
  plain.values = {0.0};
  SweepSpec burden = plain;
  burden.train.objective.regularizer = Regularizer::Burden;
  const auto a = run_sweep(plain), b = run_sweep(burden);
  REQUIRE(a.size() == 1);
  REQUIRE(b.size() == 1);
  CHECK(a[0].n_ok == 2);
  CHECK(a[0].metrics.mean.strategic_accuracy == b[0].metrics.mean.strategic_accuracy);
  CHECK(a[0].metrics.mean.mean_utility == b[0].metrics.mean.mean_utility);

  // The same pipeline written out by hand for both splits.
  const Dataset all = plain.data.load();
  std::vector<Metrics> runs;
  for (std::uint64_t s : {3u, 4u}) {
    const DataSplit sp = split(all, s);
    TrainConfig c = plain.train;
    c.seed = s;
    const auto run = fit_method(MethodSetup::of(Method::Serm), sp.train, sp.val, plain.cost, c, plain.lr_grid);
    runs.push_back(evaluate(run.model, sp.test, run.eval_cost, c.eval_response, eval_options(c)));
  }
  CHECK(summarize(runs).mean.strategic_accuracy == a[0].metrics.mean.strategic_accuracy);
}

TEST_CASE("sweep: one row per value and method, deterministic, csv shape") {
  SweepSpec s = small_sweep();
  s.variable = "scale";
  s.values = {0.5, 2.0};
  s.methods = {MethodSetup::of(Method::Serm), MethodSetup::of(Method::Blind)};
  const auto a = run_sweep(s), b = run_sweep(s);
  REQUIRE(a.size() == 4);
  CHECK(a[0].value == 0.5);
  CHECK(a[1].method == Method::Blind);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].metrics.mean.strategic_accuracy == b[i].metrics.mean.strategic_accuracy);
  std::ostringstream out;
  write_sweep_csv(a, s.variable, out);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 5);
  CHECK(out.str().rfind("scale,method,", 0) == 0);

  SweepSpec bad = s;
  bad.variable = "temperature";
  CHECK_THROWS_AS(run_sweep(bad), InvalidConfig);
}

TEST_CASE("summarize: mean and sample sd") {
  Metrics a, b;
  a.strategic_accuracy = 0.6;
  b.strategic_accuracy = 0.8;
  const auto s = summarize({a, b});
  CHECK(s.mean.strategic_accuracy == doctest::Approx(0.7));
  CHECK(s.sd.strategic_accuracy == doctest::Approx(0.1 * std::sqrt(2.0)));
}

TEST_CASE("bench: share in [0, 1], iteration counts deterministic") {
  BenchSpec spec;
  spec.batch_sizes = {8, 64};
  spec.epochs = 1;
  spec.repeats = 1;
  spec.n_train = 128;
  spec.n_val = 32;
  const auto a = runtime_bench(spec), b = runtime_bench(spec);
  REQUIRE(a.size() == 2);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].ccp_share >= 0.0);
    CHECK(a[i].ccp_share <= 1.0);
    CHECK(a[i].ccp_iterations == b[i].ccp_iterations);
    CHECK(a[i].steps == b[i].steps);
  }
  CHECK(a[0].steps == 16);
  CHECK(a[1].steps == 2);
  spec.batch_sizes.clear();
  CHECK_THROWS_AS(runtime_bench(spec), InvalidConfig);
}
