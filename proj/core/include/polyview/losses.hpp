#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "polyview/gaussian_world.hpp"
#include "polyview/method.hpp"

namespace polyview {

// K x M unit-norm embeddings of dimension d, stored sample-major: row
// i * M + alpha holds view alpha of sample i.
class EmbeddingBatch {
 public:
  static constexpr double kNormTolerance = 1e-12;

  // Takes ownership of already-normalized rows; throws if any row is off the
  // unit sphere by more than kNormTolerance.
  EmbeddingBatch(int n_samples, int multiplicity, RowMatrix rows);

  // Normalizes every row of `raw` first.
  static EmbeddingBatch FromRaw(int n_samples, int multiplicity, const RowMatrix& raw);

  int n_samples() const { return n_samples_; }
  int multiplicity() const { return multiplicity_; }
  int dim() const { return static_cast<int>(rows_.cols()); }
  int total_views() const { return n_samples_ * multiplicity_; }

  Eigen::Index index(int sample, int view) const {
    return static_cast<Eigen::Index>(sample) * multiplicity_ + view;
  }
  auto view(int sample, int v) const { return rows_.row(index(sample, v)); }
  const RowMatrix& rows() const { return rows_; }

  // The batch restricted to the given views, in the given order.
  EmbeddingBatch select_views(const std::vector<int>& views) const;

 private:
  int n_samples_;
  int multiplicity_;
  RowMatrix rows_;
};

// s[j, alpha, nu, k] = <anchor[j, alpha], target[k, nu]> / tau.
class ScoreTensor {
 public:
  ScoreTensor(int n_samples, int multiplicity, double tau, RowMatrix scores)
      : n_samples_(n_samples), multiplicity_(multiplicity), tau_(tau), s_(std::move(scores)) {}

  double operator()(int j, int alpha, int nu, int k) const {
    return s_(static_cast<Eigen::Index>(j) * multiplicity_ + alpha,
              static_cast<Eigen::Index>(k) * multiplicity_ + nu);
  }
  int n_samples() const { return n_samples_; }
  int multiplicity() const { return multiplicity_; }
  double tau() const { return tau_; }
  const RowMatrix& matrix() const { return s_; }

 private:
  int n_samples_;
  int multiplicity_;
  double tau_;
  RowMatrix s_;
};

// K x M x K mask; 1 marks a candidate removed from the softmax for target
// view beta: exactly the (i, nu, i) entries with nu != beta.
class SelfMask {
 public:
  SelfMask(int beta, int n_samples, int multiplicity);

  bool operator()(int i, int nu, int k) const {
    return bits_[(static_cast<std::size_t>(i) * multiplicity_ + nu) * n_samples_ + k] != 0;
  }
  int beta() const { return beta_; }
  std::size_t count() const;

 private:
  int beta_;
  int n_samples_;
  int multiplicity_;
  std::vector<std::uint8_t> bits_;
};

struct LossResult {
  double total = 0.0;          // mean of per_sample, in nats
  Eigen::VectorXd per_sample;  // length K
};

struct LossGradient {
  LossResult loss;
  RowMatrix d_embeddings;  // dL/dz, same layout as EmbeddingBatch::rows()
};

inline constexpr double kNormalizeEpsilon = 1e-30;
// Rest-set means shorter than this are treated as antipodal cancellation.
inline constexpr double kRestSetEpsilon = 1e-10;

Eigen::VectorXd l2_normalize(const Eigen::Ref<const Eigen::VectorXd>& v);

ScoreTensor score_tensor(const EmbeddingBatch& anchor, const EmbeddingBatch& target, double tau);
SelfMask self_mask(int beta, int n_samples, int multiplicity);

// Directed two-view InfoNCE: K-way softmax of anchor view alpha over view
// beta of every sample.
LossResult loss_pair_infonce(const EmbeddingBatch& z, int alpha, int beta, double tau);

// Mean of loss_pair_infonce over all M(M-1) ordered view pairs.
LossResult loss_multicrop(const EmbeddingBatch& z, double tau);

// K x (M-1) likelihoods l_{i,alpha,beta}; column order is beta ascending
// with alpha skipped. Computed directly from score_tensor and self_mask.
RowMatrix pvc_likelihoods(const EmbeddingBatch& z, double tau, int alpha);

LossResult loss_arithmetic_pvc(const EmbeddingBatch& z, double tau);
LossResult loss_geometric_pvc(const EmbeddingBatch& z, double tau);

// Q[i] = normalize(mean_{beta != alpha} z[i, beta]), K x d.
RowMatrix rest_set_statistic(const EmbeddingBatch& z, int alpha);

LossResult loss_suffstats(const EmbeddingBatch& z, double tau);

LossResult compute_loss(Method method, const EmbeddingBatch& z, double tau);

// Loss plus its exact gradient with respect to the unit-norm embeddings.
LossGradient compute_loss_and_gradient(Method method, const EmbeddingBatch& z, double tau);

}  // namespace polyview
