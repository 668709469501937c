#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "serm/dataset.hpp"
#include "serm/objectives.hpp"
#include "serm/trainer.hpp"

namespace serm {

// Payoffs under strategic response, hard sign with sign(0) = +1 and the
// exact cost.
struct Metrics {
  double strategic_accuracy = 0.0;
  double clean_accuracy = 0.0;
  double mean_utility = 0.0;
  double mean_burden = 0.0;  // over y = +1 examples; NaN when no closed form
  double recourse_rate = 1.0;  // granted / denied, 1 when nobody is denied
  long n_evaluated = 0;
  long failures = 0;
  long denied = 0;
  long granted = 0;
};

struct EvalOptions {
  bool use_tangents = false;
  // Hard-sign closed-form responses instead of CCP, for sensitivity checks.
  bool exact_responses = false;
  // Rescale (w, b) to unit |w| before responding. sign(f) is unchanged, but
  // the smoothed response is not scale invariant, so this pins tau to
  // feature-space units.
  bool canonical_scale = false;
};

// (w, b) / |w| when w != 0; the feature map is kept.
Scorer canonical(const Scorer& model);

// Responds every example (CCP at the given temperature) and scores the
// outcome. Failed responses are excluded and counted.
Metrics evaluate(const Scorer& model, const Dataset& data, const Cost& cost, const ResponseCfg& eval_response,
                 const EvalOptions& opts = {});

// The response-mapped dataset (rows replaced by x*), in representation space.
Dataset respond_dataset(const Scorer& model, const Dataset& data, const Cost& cost, const ResponseCfg& eval_response,
                        const EvalOptions& opts = {});

// Per-example response record, in representation space. Scores use the
// model as given; payoff is sign(f(x*)) - c(x, x*) with the exact cost.
struct ResponseRow {
  Eigen::VectorXd x, x_star;
  int y = 0;
  bool ok = true;
  double score_before = 0.0, score_after = 0.0, payoff = 0.0;
};

std::vector<ResponseRow> respond_rows(const Scorer& model, const Dataset& data, const Cost& cost,
                                      const ResponseCfg& eval_response, const EvalOptions& opts = {});

// Fraction of rows with sign(f(x)) == y.
double clean_accuracy(const Scorer& model, const Dataset& data);

// Evaluation options matching a training configuration.
EvalOptions eval_options(const TrainConfig& cfg);

enum class Method { Blind, Serm, Flexible, Robust, Intercept };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct MethodSetup {
  Method method = Method::Serm;
  std::optional<Cost> train_cost;  // Serm: assumed cost (default: the true cost)
  std::optional<CostBox> box;      // Flexible / Robust (default: around the true cost, radius 1)
  std::vector<Cost> candidates;    // Robust: explicit list instead of box corners
  std::optional<bool> use_tangents;  // training-time override of TrainConfig::use_tangents

  static MethodSetup of(Method m) {
    MethodSetup s;
    s.method = m;
    return s;
  }
};

struct MethodRun {
  Scorer model;
  Cost eval_cost;  // the cost users face at test time (learned v for Flexible)
  TrainReport report;
};

// Trains one method, tuning the learning rate on validation accuracy.
MethodRun fit_method(const MethodSetup& setup, const Dataset& train, const Dataset& val, const Cost& true_cost,
                     const TrainConfig& cfg, const std::vector<double>& lr_grid);

struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  std::string csv_path, label_column, positive_label = "1";
  bool standardize = true;
  bool balance = false;

  Dataset load() const;
};

struct SweepSpec {
  std::string variable = "lambda";  // gamma | scale | lambda
  std::vector<double> values;
  std::vector<MethodSetup> methods;
  DataSource data;
  Cost cost = Cost::quadratic();  // true cost; the swept variable is applied to it
  TrainConfig train;
  std::vector<double> lr_grid{1e-3, 1e-2, 1e-1};
  int n_splits = 5;
  std::uint64_t seed = 0;
  bool eval_tangents = false;

  void validate() const;
};

struct MetricsSummary {
  Metrics mean, sd;
};

struct SweepRow {
  double value = 0.0;
  Method method = Method::Serm;
  int n_ok = 0;
  MetricsSummary metrics;
  bool failed = false;
  std::string error;
};

// value x split x method, rows ordered by value then method.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& variable, std::ostream& out);

MetricsSummary summarize(const std::vector<Metrics>& runs);

struct BenchSpec {
  std::vector<int> batch_sizes{8, 128};
  int epochs = 10;
  int repeats = 3;  // the fastest repeat is reported
  Eigen::Index n_train = 750, n_val = 250;
  Eigen::Index dim = 5;
  double label_noise = 0.01;
  Cost cost = Cost::quadratic();
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

struct BenchRow {
  int batch_size = 0;
  double total_seconds = 0.0;
  double ccp_seconds = 0.0;
  double ccp_share = 0.0;
  long ccp_iterations = 0;
  long steps = 0;
  int epochs = 0;
};

// Fixed-epoch SERM runs (early stopping off) on a d-dimensional Gaussian
// mixture, one per batch size.
std::vector<BenchRow> runtime_bench(const BenchSpec& spec);
void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out);

}  // namespace serm
