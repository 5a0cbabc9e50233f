#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "polyview/random.hpp"

namespace polyview {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Parameters of the M-view 1D Gaussian world: c ~ N(0, sigma0_sq) and each
// view x_alpha ~ N(c, sigma_sq).
class GaussianConfig {
 public:
  GaussianConfig(double sigma0_sq, double sigma_sq, int n_samples, int multiplicity,
                 std::uint64_t seed);

#ifdef POLYVIEW_TEST_FIXTURES
  // Permits sigma_sq == 0 and/or sigma0_sq == 0 for degeneracy tests.
  static GaussianConfig DegenerateFixture(double sigma0_sq, double sigma_sq, int n_samples,
                                          int multiplicity, std::uint64_t seed) {
    return GaussianConfig(sigma0_sq, sigma_sq, n_samples, multiplicity, seed, Unchecked{});
  }
#endif

  double sigma0_sq() const { return sigma0_sq_; }
  double sigma_sq() const { return sigma_sq_; }
  int n_samples() const { return n_samples_; }
  int multiplicity() const { return multiplicity_; }
  std::uint64_t seed() const { return seed_; }

 private:
  struct Unchecked {};
  GaussianConfig(double sigma0_sq, double sigma_sq, int n_samples, int multiplicity,
                 std::uint64_t seed, Unchecked);

  double sigma0_sq_;
  double sigma_sq_;
  int n_samples_;
  int multiplicity_;
  std::uint64_t seed_;
};

// One draw of K samples, each observed through M views. Latents are kept for
// diagnostics; no loss reads them.
struct ViewBatch {
  RowMatrix views;          // K x M
  Eigen::VectorXd latents;  // K

  int n_samples() const { return static_cast<int>(views.rows()); }
  int multiplicity() const { return static_cast<int>(views.cols()); }
};

ViewBatch sample_batch(const GaussianConfig& cfg, RandomStream& rng);

// Closed-form I(x_alpha; X_rest) in nats.
double true_one_vs_rest_mi(double sigma0_sq, double sigma_sq, int m);

// I(x_alpha; c) = lim_{M -> inf} of the one-vs-rest MI.
double mi_infomax_limit(double sigma0_sq, double sigma_sq);

inline constexpr int kGaussianKlMaxViews = 64;

// KL(N(0, Sigma_M) || N(0, Sigma~_M)) through Cholesky log-determinants and an
// explicit trace. Independent of true_one_vs_rest_mi; M <= kGaussianKlMaxViews.
double mi_via_gaussian_kl(double sigma0_sq, double sigma_sq, int m);

// Covariance of the joint over M views, and of the product of the marginal of
// view 0 with the joint of the remaining views.
Eigen::MatrixXd joint_view_covariance(double sigma0_sq, double sigma_sq, int m);
Eigen::MatrixXd split_view_covariance(double sigma0_sq, double sigma_sq, int m);

struct ConvergencePoint {
  int m;
  double mean_sq_gap;
  double std_error;
};

// Monte-Carlo E[(w(M) * sum_{beta != alpha} x_beta - c)^2] with the exact
// conditional-mean weight w(M) = sigma0^2 / (sigma^2 + (M-1) sigma0^2), using
// cfg.n_samples() draws per M.
std::vector<ConvergencePoint> conditional_convergence_probe(const GaussianConfig& cfg,
                                                            std::span<const int> m_values);

}  // namespace polyview
