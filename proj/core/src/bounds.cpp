#include "polyview/bounds.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace polyview {

double offset_c(int k, int m) {
  if (k < 1) throw std::invalid_argument("offset_c needs K >= 1");
  if (m < 2) throw std::invalid_argument("offset_c needs M >= 2");
  // K*M - M + 1 = (K-1)*M + 1, exact in double for any int inputs.
  return std::log(static_cast<double>(k - 1) * m + 1.0);
}

double bound_offset(Method method, int k, int m) {
  if (uses_polyview_offset(method)) return offset_c(k, m);
  if (k < 1) throw std::invalid_argument("bound_offset needs K >= 1");
  return std::log(static_cast<double>(k));
}

double bound_from_loss(Method method, double loss, int k, int m) {
  return bound_offset(method, k, m) - loss;
}

double mi_gap(double true_mi, double bound) { return true_mi - bound; }

BoundReport make_report(Method method, int k, int m, double loss, std::optional<double> true_mi) {
  BoundReport r{method, k, m, loss, bound_from_loss(method, loss, k, m), true_mi, std::nullopt};
  if (true_mi) r.gap = mi_gap(*true_mi, r.bound);
  return r;
}

double variance_bound_factor(int m) {
  if (m < 2) throw std::invalid_argument("variance_bound_factor needs M >= 2");
  const double md = m;
  return 2.0 * (2.0 * md - 1.0) / (3.0 * md * (md - 1.0));
}

double optimal_multiplicity(double batch_size, double p_star, MultiplicityModel model) {
  if (!(batch_size >= 2.0)) throw std::invalid_argument("optimal_multiplicity needs B >= 2");
  if (!(p_star > 0.0 && p_star < 1.0)) {
    throw std::invalid_argument("p_star must lie in (0, 1), got " + std::to_string(p_star));
  }
  switch (model) {
    case MultiplicityModel::Linear1:
      return std::sqrt(2.0 * (batch_size + 1.0) * (1.0 - p_star));
    case MultiplicityModel::Linear2:
      return 1.0 + std::sqrt(batch_size * (1.0 - p_star));
  }
  throw std::invalid_argument("unknown multiplicity model");
}

double relative_compute(int m, double epochs) { return (m / 2.0) * (epochs / 128.0); }

}  // namespace polyview
