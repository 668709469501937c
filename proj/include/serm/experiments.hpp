#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "serm/evaluation.hpp"

namespace serm {

// Shared protocol for the synthetic experiments. Each seed draws a fresh
// sample and a fresh 60/20/20 split.
struct ExperimentOptions {
  int n_seeds = 5;
  std::uint64_t seed = 0;
  Eigen::Index n = 1000;
  bool standardize = false;  // train-fitted z-score then 1/sqrt(d)
  std::vector<double> lr_grid{1e-3, 1e-2, 1e-1};
  TrainConfig train = default_train();
  std::function<void(const std::string&)> log;

  static TrainConfig default_train();
};

struct MethodSummary {
  std::string name;
  std::vector<double> accuracy;  // strategic test accuracy per seed
  std::vector<double> clean;     // clean test accuracy per seed
  std::vector<Eigen::VectorXd> cost_params;  // learned / chosen v per seed, when any
  double mean = 0.0, sd = 0.0;
  double clean_mean = 0.0;

  void finalize();
};

struct ExperimentResult {
  std::string name;
  std::vector<MethodSummary> methods;

  const MethodSummary& at(const std::string& method) const;
};

// Gaussian mixture with the given class means and per-coordinate standard
// deviations (balanced classes).
SyntheticSpec gaussian_spec(const Eigen::Vector2d& mean_pos, const Eigen::Vector2d& sd, Eigen::Index n,
                            std::uint64_t seed);

// Means [+-0.5, 0], sd (0.1, 1); mixture cost with gamma 0.005 around
// v0 = [0.5, 0.5] and a radius-2 box. Methods: flexible, naive (v0 fixed),
// oracle (best fixed v on a grid over the box, chosen on validation), blind.
ExperimentResult flexible_experiment(const ExperimentOptions& opts, double oracle_grid_step = 0.5);

// Means [+-0.6, 0], sd 0.1; true cost v* = (0.5, 0.5), estimate v0 = (2, 2),
// belief box radius 1.7 with candidates {v_min, v_max}. Methods: robust,
// naive (trained on v0), oracle (trained on v*), blind; all tested under v*.
ExperimentResult robust_experiment(const ExperimentOptions& opts);

// Parabola x2 = -x1^2, quadratic cost; users move along the tangent at test
// time. Methods: tangent-constrained SERM, naive (unconstrained SERM), blind.
ExperimentResult manifold_experiment(const ExperimentOptions& opts);

struct GapRow {
  double scale = 1.0;
  MethodSummary blind, serm;  // blind.clean is the non-strategic benchmark
};

// Means [+-0.5, 0], sd 0.25; quadratic cost scale * |x' - x|^2.
std::vector<GapRow> core_gap_experiment(const ExperimentOptions& opts, const std::vector<double>& scales = {0.5, 1, 2});

struct TradeoffPoint {
  Regularizer regularizer = Regularizer::None;
  double lambda = 0.0;
  double accuracy = 0.0;  // mean strategic test accuracy
  double social = 0.0;    // mean utility, mean burden or recourse rate
  std::vector<double> accuracy_runs, social_runs;
};

// Social metric matching a regularizer, and whether larger is better.
double social_metric(Regularizer r, const Metrics& m);
bool social_higher_is_better(Regularizer r);

// Core-gap data at scale 1; for each regularizer one point per lambda.
std::vector<TradeoffPoint> regularization_tradeoff(const ExperimentOptions& opts, const std::vector<double>& lambdas,
                                                   const std::vector<Regularizer>& regs = {
                                                       Regularizer::Utility, Regularizer::Burden,
                                                       Regularizer::Recourse});

}  // namespace serm
