#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "serm/cost.hpp"
#include "serm/dataset.hpp"
#include "serm/response.hpp"
#include "serm/scorer.hpp"

namespace serm {

using Scorer = LinearScorer<double>;
using Cost = CostSpec<double>;
using ResponseCfg = ResponseConfig<double>;
using Outcome = ResponseOutcome<double>;
using Jacobians = ResponseJacobians<double>;
using Tangent = TangentSpec<double>;

enum class Regularizer { None, Utility, Burden, Recourse };

const char* to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& s);

// loss + lambda * R, with R averaged over the batch. The loss is always the
// logistic surrogate log(1 + exp(-y f)).
struct ObjectiveConfig {
  Regularizer regularizer = Regularizer::None;
  double lambda = 0.0;
  // Recourse only: count just the users denied before responding.
  bool recourse_masked = false;

  void validate() const;
};

struct ParamGradient {
  Eigen::VectorXd w;
  double b = 0.0;
  Eigen::VectorXd v;  // empty unless cost gradients were requested

  static ParamGradient zeros(Eigen::Index k, Eigen::Index p) {
    return {Eigen::VectorXd::Zero(k), 0.0, Eigen::VectorXd::Zero(p)};
  }
  ParamGradient& operator+=(const ParamGradient& o);
  ParamGradient& operator*=(double s);
};

struct ObjectiveValue {
  double value = 0.0;
  ParamGradient grad;
};

enum class FailurePolicy { Throw, Skip };

struct ObjectiveOptions {
  JacobianMode jacobian_mode = JacobianMode::FixedPoint;
  bool use_tangents = false;      // restrict responses to batch.tangents
  bool cost_gradient = false;     // also differentiate w.r.t. cost parameters v
  FailurePolicy on_failure = FailurePolicy::Throw;
};

// Responses (and optionally Jacobians) for every row of a batch that is
// already in representation space.
struct BatchResponse {
  std::vector<Outcome> outcomes;
  std::vector<Jacobians> jacobians;  // empty when not requested
  std::vector<char> ok;
  int failures = 0;
  double ccp_seconds = 0.0;
  long ccp_iterations = 0;

  int successes() const { return static_cast<int>(ok.size()) - failures; }
};

BatchResponse respond_batch(const Dataset& batch, const Scorer& head, const Cost& cost, const ResponseCfg& cfg,
                            bool with_jacobians, const ObjectiveOptions& opts = {});

// Representation-space copy of a batch when the model carries a feature map.
Dataset to_representation(const Dataset& batch, const Scorer& model);

// Mean logistic loss of the responded points, gradients through the direct
// score path and the response path.
ObjectiveValue strategic_loss(const Dataset& batch, const Scorer& model, const Cost& cost, const ResponseCfg& cfg,
                              const ObjectiveOptions& opts = {});

// Minus the mean smoothed utility sigma(f(x*)) - cost(x, x*).
ObjectiveValue reg_utility(const Dataset& batch, const Scorer& model, const Cost& cost, const ResponseCfg& cfg,
                           const ObjectiveOptions& opts = {});

// Mean over the batch of the minimum cost a positive example pays to reach
// f >= 0 (closed form, (weighted) quadratic costs only). Zero when w = 0.
ObjectiveValue reg_burden(const Dataset& batch, const Scorer& model, const Cost& cost,
                          const ObjectiveOptions& opts = {});

// Mean of sigma(-f(x)) * sigma(-f(x*)).
ObjectiveValue reg_recourse(const Dataset& batch, const Scorer& model, const Cost& cost, const ResponseCfg& cfg,
                            bool masked = false, const ObjectiveOptions& opts = {});

// strategic_loss + lambda * regularizer, sharing one set of responses.
ObjectiveValue regularized_objective(const Dataset& batch, const Scorer& model, const Cost& cost,
                                     const ResponseCfg& cfg, const ObjectiveConfig& obj,
                                     const ObjectiveOptions& opts = {}, BatchResponse* responses_out = nullptr);

struct WorstCaseValue {
  double value = 0.0;
  std::size_t worst_index = 0;
  ParamGradient grad;
};

// Max over candidate costs of strategic_loss; ties go to the lowest index.
WorstCaseValue worst_case_loss(const Dataset& batch, const Scorer& model, const std::vector<Cost>& candidates,
                               const ResponseCfg& cfg, const ObjectiveOptions& opts = {});

// Closed-form burden of a single point (0 when f(x) >= 0).
double burden_of(const Eigen::VectorXd& x, const Scorer& head, const Cost& cost);

double logistic_loss(double margin);

}  // namespace serm
