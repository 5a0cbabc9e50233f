#pragma once

#include <optional>

#include "polyview/method.hpp"

namespace polyview {

struct BoundReport {
  Method method;
  int k;
  int m;
  double loss;
  double bound;
  std::optional<double> true_mi;
  std::optional<double> gap;
};

// c(B, M) = log(K*M - M + 1).
double offset_c(int k, int m);

// Additive constant turning a batch-mean loss into an MI lower bound:
// offset_c for the poly-view objectives, log K for the pairwise ones.
double bound_offset(Method method, int k, int m);

double bound_from_loss(Method method, double loss, int k, int m);

// Signed; a negative value means the estimate overshot the true MI.
double mi_gap(double true_mi, double bound);

BoundReport make_report(Method method, int k, int m, double loss,
                        std::optional<double> true_mi = std::nullopt);

// Upper bound on Var[Multi-Crop] / Var[pair loss]: 2(2M-1) / (3M(M-1)).
double variance_bound_factor(int m);

enum class MultiplicityModel {
  Linear1,  // l*(M) = p* + (M-2)/M (1-p*)
  Linear2,  // l*(M) = 1 - (1-p*)/(M-1)
};

// Fixed-batch optimum M* of the converged Geometric bound.
double optimal_multiplicity(double batch_size, double p_star, MultiplicityModel model);

// Compute relative to a two-view run of 128 epochs.
double relative_compute(int m, double epochs);

}  // namespace polyview
