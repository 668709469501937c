#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "serm/dataset.hpp"
#include "serm/objectives.hpp"

namespace serm {

struct AdamHyper {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;

  static AdamState zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }
};

// Bias-corrected Adam update in place. Throws SolverFailure on a non-finite
// gradient.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, const AdamHyper& hyper);

// Current parameters after every optimizer step; used by tests to observe
// the box projection.
struct StepInfo {
  int epoch = 0;
  long step = 0;
  const Scorer* model = nullptr;
  const Eigen::VectorXd* cost_params = nullptr;  // null unless costs are learned
};

struct TrainConfig {
  AdamHyper adam;
  int batch_size = 64;
  int max_epochs = 10;
  int patience = 2;
  ObjectiveConfig objective;
  ResponseCfg response = ResponseCfg::training();
  ResponseCfg eval_response = ResponseCfg::evaluation();
  std::uint64_t seed = 0;
  JacobianMode jacobian_mode = JacobianMode::FixedPoint;
  bool use_tangents = false;
  bool canonical_eval = false;  // validation responses at unit |w|
  double max_failure_rate = 0.01;  // per epoch; above this the run aborts
  std::function<void(const StepInfo&)> on_step;

  // Throws InvalidConfig listing every violated field.
  void validate(Eigen::Index train_size) const;
};

// l-infinity ball around `center`.
struct CostBox {
  Eigen::VectorXd center;
  double radius = 1.0;

  void validate() const;
  Eigen::VectorXd project(const Eigen::VectorXd& v) const;
  bool contains(const Eigen::VectorXd& v, double slack = 0.0) const;
  // The 2^p corners in binary order (bit j set -> center_j + radius).
  std::vector<Eigen::VectorXd> corners() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  long skipped = 0;
};

struct TrainReport {
  Scorer model;
  std::optional<Eigen::VectorXd> cost_params;  // learned v (flexible)
  std::vector<EpochRecord> history;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  double learning_rate = 0.0;
  long skipped_examples = 0;
  long steps = 0;
  long ccp_iterations = 0;
  double ccp_seconds = 0.0;
  double total_seconds = 0.0;
  // train_robust: max over candidates of the full-training-set loss of the
  // returned model, and the per-candidate values.
  double worst_case_train_loss = 0.0;
  std::vector<double> candidate_train_losses;
};

TrainReport train_serm(const Dataset& train, const Dataset& val, const Scorer& init, const Cost& cost,
                       const TrainConfig& cfg);

// Plain logistic regression on unmoved points; validation uses clean accuracy.
TrainReport train_blind(const Dataset& train, const Dataset& val, const Scorer& init, const TrainConfig& cfg);

// Joint (w, b, v) training; v starts at box.center and is clamped to the box
// after each step. `base` fixes the cost family, gamma and scale.
TrainReport train_flexible(const Dataset& train, const Dataset& val, const Scorer& init, const CostBox& box,
                           const Cost& base, const TrainConfig& cfg);

// Minmax over candidates; validation accuracy is the minimum over candidates.
TrainReport train_robust(const Dataset& train, const Dataset& val, const Scorer& init,
                         const std::vector<Cost>& candidates, const TrainConfig& cfg);

// One candidate per box corner with the base cost's family; p <= 10.
std::vector<Cost> box_corner_candidates(const Cost& base, const CostBox& box);

// Intercepts considered by intercept_baseline: midpoints of consecutive
// distinct sorted shifted scores, plus one below and one above the range.
std::vector<double> intercept_candidates(const Dataset& train, const Eigen::VectorXd& v, double scale = 1.0);

// w = v fixed; b maximizes strategic training accuracy when users respond to
// a pure linear cost scale * max(0, v.(x' - x)): anyone with
// -2 / scale < v.x + b < 0 moves to the boundary. Ties pick the smallest b.
Scorer intercept_baseline(const Dataset& train, const Eigen::VectorXd& v, double scale = 1.0);

// Runs `train_fn` once per learning rate and keeps the report with the
// highest best_val_accuracy (first on ties).
TrainReport tune_learning_rate(const std::function<TrainReport(const TrainConfig&)>& train_fn,
                               const TrainConfig& base, const std::vector<double>& grid = {1e-3, 1e-2, 1e-1});

}  // namespace serm
