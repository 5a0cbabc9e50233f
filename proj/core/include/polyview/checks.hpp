#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "polyview/method.hpp"
#include "polyview/tinynn.hpp"

namespace polyview {

struct CheckOutcome {
  std::string name;
  bool passed;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckOutcome> checks;

  bool passed() const;
};

// oracles, grads, identities, invariants.
const std::vector<std::string>& check_suite_names();

// Runs one suite, streaming a PASS/FAIL line per check to `log` when given.
// Throws std::invalid_argument for an unknown suite name.
SuiteReport run_check_suite(std::string_view name, std::ostream* log = nullptr);

// Central differences of compute_loss(method, forward(params, views), tau)
// with respect to every parameter.
Eigen::VectorXd finite_difference_gradient(const MlpParams& params, const RowMatrix& views,
                                           Method method, double tau, double h = 1e-6);

inline constexpr double kGradientErrorFloor = 1e-3;

// max_j |a_j - n_j| / max(|a_j|, |n_j|, kGradientErrorFloor).
double gradient_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

}  // namespace polyview
