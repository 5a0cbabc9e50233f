#include "polyview/gaussian_world.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

namespace polyview {

namespace {

void require_positive_noise(double sigma_sq) {
  if (!(sigma_sq > 0.0)) {
    throw std::invalid_argument("sigma_sq must be > 0, got " + std::to_string(sigma_sq));
  }
}

void require_views(int m) {
  if (m < 2) throw std::invalid_argument("multiplicity must be >= 2, got " + std::to_string(m));
}

double log_det_spd(const Eigen::MatrixXd& a, const Eigen::LLT<Eigen::MatrixXd>& llt) {
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("covariance is not numerically positive definite");
  }
  double acc = 0.0;
  const Eigen::MatrixXd& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < a.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

}  // namespace

GaussianConfig::GaussianConfig(double sigma0_sq, double sigma_sq, int n_samples,
                               int multiplicity, std::uint64_t seed)
    : GaussianConfig(sigma0_sq, sigma_sq, n_samples, multiplicity, seed, Unchecked{}) {
  if (!(sigma0_sq > 0.0)) throw std::invalid_argument("sigma0_sq must be > 0");
  require_positive_noise(sigma_sq);
}

GaussianConfig::GaussianConfig(double sigma0_sq, double sigma_sq, int n_samples,
                               int multiplicity, std::uint64_t seed, Unchecked)
    : sigma0_sq_(sigma0_sq),
      sigma_sq_(sigma_sq),
      n_samples_(n_samples),
      multiplicity_(multiplicity),
      seed_(seed) {
  if (!(sigma0_sq >= 0.0) || !(sigma_sq >= 0.0)) {
    throw std::invalid_argument("variances must be non-negative");
  }
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  require_views(multiplicity);
}

ViewBatch sample_batch(const GaussianConfig& cfg, RandomStream& rng) {
  const int k = cfg.n_samples();
  const int m = cfg.multiplicity();
  const double latent_sd = std::sqrt(cfg.sigma0_sq());
  const double noise_sd = std::sqrt(cfg.sigma_sq());
  std::normal_distribution<double> normal(0.0, 1.0);

  ViewBatch batch{RowMatrix(k, m), Eigen::VectorXd(k)};
  for (int i = 0; i < k; ++i) {
    const double c = latent_sd * normal(rng);
    batch.latents(i) = c;
    for (int a = 0; a < m; ++a) batch.views(i, a) = c + noise_sd * normal(rng);
  }
  return batch;
}

double true_one_vs_rest_mi(double sigma0_sq, double sigma_sq, int m) {
  require_positive_noise(sigma_sq);
  require_views(m);
  if (sigma0_sq < 0.0) throw std::invalid_argument("sigma0_sq must be >= 0");
  const double snr = sigma0_sq / sigma_sq;
  const double shrink = sigma0_sq / (sigma_sq + m * sigma0_sq);
  // log1p keeps the M -> inf limit accurate to ~1e-16.
  return 0.5 * (std::log1p(snr) + std::log1p(-shrink));
}

double mi_infomax_limit(double sigma0_sq, double sigma_sq) {
  require_positive_noise(sigma_sq);
  if (sigma0_sq < 0.0) throw std::invalid_argument("sigma0_sq must be >= 0");
  return 0.5 * std::log1p(sigma0_sq / sigma_sq);
}

Eigen::MatrixXd joint_view_covariance(double sigma0_sq, double sigma_sq, int m) {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(m, m, sigma0_sq);
  cov.diagonal().array() += sigma_sq;
  return cov;
}

Eigen::MatrixXd split_view_covariance(double sigma0_sq, double sigma_sq, int m) {
  Eigen::MatrixXd cov = joint_view_covariance(sigma0_sq, sigma_sq, m);
  cov.row(0).tail(m - 1).setZero();
  cov.col(0).tail(m - 1).setZero();
  return cov;
}

double mi_via_gaussian_kl(double sigma0_sq, double sigma_sq, int m) {
  require_positive_noise(sigma_sq);
  require_views(m);
  if (m > kGaussianKlMaxViews) {
    throw std::invalid_argument("mi_via_gaussian_kl supports at most " +
                                std::to_string(kGaussianKlMaxViews) + " views");
  }
  if (sigma0_sq < 0.0) throw std::invalid_argument("sigma0_sq must be >= 0");

  const Eigen::MatrixXd joint = joint_view_covariance(sigma0_sq, sigma_sq, m);
  const Eigen::MatrixXd split = split_view_covariance(sigma0_sq, sigma_sq, m);
  const Eigen::LLT<Eigen::MatrixXd> joint_llt(joint);
  const Eigen::LLT<Eigen::MatrixXd> split_llt(split);
  const double log_det_joint = log_det_spd(joint, joint_llt);
  const double log_det_split = log_det_spd(split, split_llt);
  const double trace = split_llt.solve(joint).trace();
  // Zero means on both sides, so the Mahalanobis term vanishes.
  return 0.5 * (trace - m + log_det_split - log_det_joint);
}

std::vector<ConvergencePoint> conditional_convergence_probe(const GaussianConfig& cfg,
                                                            std::span<const int> m_values) {
  if (m_values.empty()) throw std::invalid_argument("m_values must not be empty");
  std::vector<ConvergencePoint> out;
  out.reserve(m_values.size());
  for (int m : m_values) {
    require_views(m);
    const double weight = cfg.sigma0_sq() == 0.0 && cfg.sigma_sq() == 0.0
                              ? 0.0
                              : cfg.sigma0_sq() / (cfg.sigma_sq() + (m - 1) * cfg.sigma0_sq());
    RandomStream rng(cfg.seed(), streams::Probe(static_cast<std::uint64_t>(m)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double latent_sd = std::sqrt(cfg.sigma0_sq());
    const double noise_sd = std::sqrt(cfg.sigma_sq());

    // Welford accumulation of the squared residual.
    double mean = 0.0;
    double m2 = 0.0;
    const int n = cfg.n_samples();
    for (int i = 0; i < n; ++i) {
      const double c = latent_sd * normal(rng);
      double rest_sum = 0.0;
      // View 0 is the held-out view; only the M-1 others enter the estimate.
      (void)normal(rng);
      for (int b = 1; b < m; ++b) rest_sum += c + noise_sd * normal(rng);
      const double r = weight * rest_sum - c;
      const double sq = r * r;
      const double delta = sq - mean;
      mean += delta / (i + 1);
      m2 += delta * (sq - mean);
    }
    const double var = n > 1 ? m2 / (n - 1) : 0.0;
    out.push_back({m, mean, std::sqrt(var / n)});
  }
  return out;
}

}  // namespace polyview
