#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace serm {

// Input whose shape or content violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Configuration value outside its allowed range. Validators that check many
// fields at once list each violation separately.
class InvalidConfig : public std::invalid_argument {
 public:
  explicit InvalidConfig(const std::string& what, std::vector<std::string> violations = {})
      : std::invalid_argument(what), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Iterative solver diverged or could not reach its tolerance.
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, std::vector<double> trace = {},
                std::ptrdiff_t example_index = -1)
      : std::runtime_error(what),
        trace_(std::move(trace)),
        example_index_(example_index) {}

  // Payoff (or step) history up to the failure.
  const std::vector<double>& trace() const { return trace_; }
  // Index of the offending example inside a batch, -1 when not batched.
  std::ptrdiff_t example_index() const { return example_index_; }

 private:
  std::vector<double> trace_;
  std::ptrdiff_t example_index_;
};

// Stationarity Hessian too ill-conditioned for implicit differentiation.
class DegenerateJacobian : public std::runtime_error {
 public:
  DegenerateJacobian(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

}  // namespace serm
