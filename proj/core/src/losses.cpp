#include "polyview/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace polyview {

namespace {

using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

void require_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0, got " + std::to_string(tau));
}

void require_view(int v, int m, const char* name) {
  if (v < 0 || v >= m) {
    throw std::out_of_range(std::string(name) + " = " + std::to_string(v) + " outside [0, " +
                            std::to_string(m) + ")");
  }
}

// Sample-major (i * M + alpha) <-> view-major (alpha * K + i). The kernels run
// view-major so that every candidate set over samples is a contiguous segment.
RowMatrix to_view_major(const RowMatrix& rows, int k, int m) {
  RowMatrix out(rows.rows(), rows.cols());
  for (int i = 0; i < k; ++i) {
    for (int a = 0; a < m; ++a) out.row(static_cast<Eigen::Index>(a) * k + i) = rows.row(i * m + a);
  }
  return out;
}

RowMatrix to_sample_major(const RowMatrix& rows, int k, int m) {
  RowMatrix out(rows.rows(), rows.cols());
  for (int i = 0; i < k; ++i) {
    for (int a = 0; a < m; ++a) out.row(i * m + a) = rows.row(static_cast<Eigen::Index>(a) * k + i);
  }
  return out;
}

// Streams the anchor x target score matrix through fixed-size row blocks.
// row_fn(r, s) receives the score row of anchor r, returns that row's loss,
// and (when gradients are wanted) overwrites s with d(row loss)/d(s).
template <typename RowFn>
void sweep_rows(const RowMatrix& anchors, const RowMatrix& targets, double tau, bool want_grad,
                double grad_weight, RowFn&& row_fn, Eigen::VectorXd& row_losses,
                RowMatrix* d_anchors, RowMatrix* d_targets) {
  constexpr Eigen::Index kBlockRows = 64;
  const Eigen::Index n_rows = anchors.rows();
  row_losses.resize(n_rows);
  RowMatrix block;
  for (Eigen::Index r0 = 0; r0 < n_rows; r0 += kBlockRows) {
    const Eigen::Index n = std::min(kBlockRows, n_rows - r0);
    block.noalias() = anchors.middleRows(r0, n) * targets.transpose();
    block /= tau;
    for (Eigen::Index t = 0; t < n; ++t) {
      Eigen::Ref<RowVector> row = block.row(t);
      row_losses(r0 + t) = row_fn(r0 + t, row);
    }
    if (want_grad) {
      const double scale = grad_weight / tau;
      d_anchors->middleRows(r0, n).noalias() += scale * (block * targets);
      d_targets->noalias() += scale * (block.transpose() * anchors.middleRows(r0, n));
    }
  }
}

// Log-sum-exp over a score row with the M same-sample entries (nu * K + i)
// excluded. On return (when K > 1) row holds exp(s - max) with zeros at the
// excluded entries, and *sum the sum of that row.
double masked_negative_lse(Eigen::Ref<RowVector> row, int k, int m, int i, double* sum) {
  for (int nu = 0; nu < m; ++nu) row(static_cast<Eigen::Index>(nu) * k + i) = kNegInf;
  if (k == 1) {
    *sum = 0.0;
    return kNegInf;
  }
  const double mx = row.maxCoeff();
  row = (row.array() - mx).exp();
  *sum = row.sum();
  return mx + std::log(*sum);
}

enum class PvcAggregate { Arithmetic, Geometric };

struct KernelOutput {
  Eigen::VectorXd row_losses;  // view-major, length K*M
  RowMatrix d_anchor;          // view-major
  RowMatrix d_target;
};

KernelOutput run_pvc(const RowMatrix& zv, int k, int m, double tau, PvcAggregate agg,
                     bool want_grad) {
  KernelOutput out;
  if (want_grad) {
    out.d_anchor = RowMatrix::Zero(zv.rows(), zv.cols());
    out.d_target = RowMatrix::Zero(zv.rows(), zv.cols());
  }
  std::vector<double> pos(m);
  std::vector<double> log_l(m);
  std::vector<double> one_minus_l(m);
  const double log_rest = std::log(static_cast<double>(m - 1));

  auto row_fn = [&](Eigen::Index r, Eigen::Ref<RowVector> s) {
    const int a = static_cast<int>(r / k);
    const int i = static_cast<int>(r % k);
    for (int nu = 0; nu < m; ++nu) pos[nu] = s(static_cast<Eigen::Index>(nu) * k + i);
    double sum = 0.0;
    const double neg = masked_negative_lse(s, k, m, i, &sum);

    for (int b = 0; b < m; ++b) {
      if (b == a) continue;
      const double denom = log_add_exp(pos[b], neg);
      log_l[b] = pos[b] - denom;
      one_minus_l[b] = neg == kNegInf ? 0.0 : std::exp(neg - denom);
    }

    double loss = 0.0;
    double g_neg = 0.0;
    std::vector<double>& g_pos = pos;  // reused once the scores are consumed
    if (agg == PvcAggregate::Geometric) {
      for (int b = 0; b < m; ++b) {
        if (b == a) continue;
        loss -= log_l[b];
        g_pos[b] = -one_minus_l[b] / (m - 1);
        g_neg += one_minus_l[b];
      }
      loss /= (m - 1);
      g_neg /= (m - 1);
    } else {
      double mx = kNegInf;
      for (int b = 0; b < m; ++b) {
        if (b != a) mx = std::max(mx, log_l[b]);
      }
      double acc = 0.0;
      for (int b = 0; b < m; ++b) {
        if (b != a) acc += std::exp(log_l[b] - mx);
      }
      const double lse = mx + std::log(acc);
      loss = log_rest - lse;
      for (int b = 0; b < m; ++b) {
        if (b == a) continue;
        const double weight = std::exp(log_l[b] - lse);
        g_pos[b] = -weight * one_minus_l[b];
        g_neg += weight * one_minus_l[b];
      }
    }

    if (want_grad) {
      if (sum > 0.0) s *= g_neg / sum;
      for (int nu = 0; nu < m; ++nu) {
        s(static_cast<Eigen::Index>(nu) * k + i) = nu == a ? 0.0 : g_pos[nu];
      }
    }
    return loss;
  };

  sweep_rows(zv, zv, tau, want_grad, 1.0 / (static_cast<double>(k) * m), row_fn, out.row_losses,
             &out.d_anchor, &out.d_target);
  return out;
}

KernelOutput run_multicrop(const RowMatrix& zv, int k, int m, double tau, bool want_grad) {
  KernelOutput out;
  if (want_grad) {
    out.d_anchor = RowMatrix::Zero(zv.rows(), zv.cols());
    out.d_target = RowMatrix::Zero(zv.rows(), zv.cols());
  }
  auto row_fn = [&](Eigen::Index r, Eigen::Ref<RowVector> s) {
    const int a = static_cast<int>(r / k);
    const int i = static_cast<int>(r % k);
    double loss = 0.0;
    for (int b = 0; b < m; ++b) {
      auto seg = s.segment(static_cast<Eigen::Index>(b) * k, k);
      if (b == a) {
        if (want_grad) seg.setZero();
        continue;
      }
      const double positive = seg(i);
      const double mx = seg.maxCoeff();
      seg = (seg.array() - mx).exp();
      const double sum = seg.sum();
      loss += mx + std::log(sum) - positive;
      if (want_grad) {
        seg /= sum;
        seg(i) -= 1.0;
        seg /= (m - 1);
      }
    }
    return loss / (m - 1);
  };
  sweep_rows(zv, zv, tau, want_grad, 1.0 / (static_cast<double>(k) * m), row_fn, out.row_losses,
             &out.d_anchor, &out.d_target);
  return out;
}

KernelOutput run_suffstats(const RowMatrix& zv, const RowMatrix& qv, int k, int m, double tau,
                           bool want_grad) {
  KernelOutput out;
  if (want_grad) {
    out.d_anchor = RowMatrix::Zero(zv.rows(), zv.cols());
    out.d_target = RowMatrix::Zero(qv.rows(), qv.cols());
  }
  auto row_fn = [&](Eigen::Index r, Eigen::Ref<RowVector> s) {
    const int a = static_cast<int>(r / k);
    const int i = static_cast<int>(r % k);
    const double positive = s(static_cast<Eigen::Index>(a) * k + i);
    double sum = 0.0;
    const double neg = masked_negative_lse(s, k, m, i, &sum);
    const double denom = log_add_exp(positive, neg);
    const double one_minus_l = neg == kNegInf ? 0.0 : std::exp(neg - denom);
    if (want_grad) {
      if (sum > 0.0) s *= one_minus_l / sum;
      for (int nu = 0; nu < m; ++nu) s(static_cast<Eigen::Index>(nu) * k + i) = 0.0;
      s(static_cast<Eigen::Index>(a) * k + i) = -one_minus_l;
    }
    return denom - positive;
  };
  sweep_rows(zv, qv, tau, want_grad, 1.0 / (static_cast<double>(k) * m), row_fn, out.row_losses,
             &out.d_anchor, &out.d_target);
  return out;
}

LossResult reduce_view_major(const Eigen::VectorXd& row_losses, int k, int m) {
  LossResult result;
  result.per_sample = Eigen::VectorXd::Zero(k);
  for (int i = 0; i < k; ++i) {
    double acc = 0.0;
    for (int a = 0; a < m; ++a) acc += row_losses(static_cast<Eigen::Index>(a) * k + i);
    result.per_sample(i) = acc / m;
  }
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += result.per_sample(i);
  result.total = total / k;
  return result;
}

// Unnormalized rest-set means u[k, nu], view-major, following the
// zero-then-rescale-then-average construction.
RowMatrix rest_set_means(const RowMatrix& zv, int k, int m) {
  const double rescale = static_cast<double>(m) / (m - 1);
  RowMatrix u = RowMatrix::Zero(zv.rows(), zv.cols());
  for (int nu = 0; nu < m; ++nu) {
    auto dst = u.middleRows(static_cast<Eigen::Index>(nu) * k, k);
    for (int b = 0; b < m; ++b) {
      if (b == nu) continue;
      dst += rescale * zv.middleRows(static_cast<Eigen::Index>(b) * k, k);
    }
    dst /= m;
  }
  return u;
}

RowMatrix normalize_rows(const RowMatrix& u, Eigen::VectorXd* norms, double eps,
                         const char* what) {
  RowMatrix q(u.rows(), u.cols());
  norms->resize(u.rows());
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double n = u.row(r).norm();
    if (!(n > eps)) throw std::domain_error(std::string(what) + " has (near-)zero norm");
    (*norms)(r) = n;
    q.row(r) = u.row(r) / n;
  }
  return q;
}

LossGradient evaluate(Method method, const EmbeddingBatch& z, double tau, bool want_grad) {
  require_tau(tau);
  const int k = z.n_samples();
  const int m = z.multiplicity();
  const RowMatrix zv = to_view_major(z.rows(), k, m);

  KernelOutput out;
  RowMatrix dzv;
  switch (method) {
    case Method::InfoNCE:
      if (m != 2) throw std::invalid_argument("InfoNCE requires M = 2, got " + std::to_string(m));
      [[fallthrough]];
    case Method::MultiCrop:
      out = run_multicrop(zv, k, m, tau, want_grad);
      if (want_grad) dzv = out.d_anchor + out.d_target;
      break;
    case Method::ArithmeticPVC:
    case Method::GeometricPVC:
      out = run_pvc(zv, k, m, tau,
                    method == Method::ArithmeticPVC ? PvcAggregate::Arithmetic
                                                    : PvcAggregate::Geometric,
                    want_grad);
      if (want_grad) dzv = out.d_anchor + out.d_target;
      break;
    case Method::SuffStats: {
      const RowMatrix u = rest_set_means(zv, k, m);
      Eigen::VectorXd norms;
      const RowMatrix qv = normalize_rows(u, &norms, kRestSetEpsilon, "rest-set mean");
      out = run_suffstats(zv, qv, k, m, tau, want_grad);
      if (want_grad) {
        dzv = out.d_anchor;
        // Through the normalization of u, then through the rest-set mean.
        RowMatrix du(qv.rows(), qv.cols());
        for (Eigen::Index r = 0; r < qv.rows(); ++r) {
          const double radial = qv.row(r).dot(out.d_target.row(r));
          du.row(r) = (out.d_target.row(r) - radial * qv.row(r)) / norms(r);
        }
        for (int nu = 0; nu < m; ++nu) {
          for (int b = 0; b < m; ++b) {
            if (b == nu) continue;
            dzv.middleRows(static_cast<Eigen::Index>(b) * k, k) +=
                du.middleRows(static_cast<Eigen::Index>(nu) * k, k) / (m - 1);
          }
        }
      }
      break;
    }
  }

  LossGradient result;
  result.loss = reduce_view_major(out.row_losses, k, m);
  if (want_grad) result.d_embeddings = to_sample_major(dzv, k, m);
  return result;
}

}  // namespace

EmbeddingBatch::EmbeddingBatch(int n_samples, int multiplicity, RowMatrix rows)
    : n_samples_(n_samples), multiplicity_(multiplicity), rows_(std::move(rows)) {
  if (n_samples_ < 2) throw std::invalid_argument("EmbeddingBatch needs K >= 2");
  if (multiplicity_ < 2) throw std::invalid_argument("EmbeddingBatch needs M >= 2");
  if (rows_.rows() != static_cast<Eigen::Index>(n_samples_) * multiplicity_ || rows_.cols() < 1) {
    throw std::invalid_argument("EmbeddingBatch rows do not match K * M x d");
  }
  for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
    const double n = rows_.row(r).norm();
    if (!(std::abs(n - 1.0) <= kNormTolerance)) {
      throw std::invalid_argument("EmbeddingBatch row " + std::to_string(r) +
                                  " is not unit norm");
    }
  }
}

EmbeddingBatch EmbeddingBatch::FromRaw(int n_samples, int multiplicity, const RowMatrix& raw) {
  RowMatrix rows(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    rows.row(r) = l2_normalize(raw.row(r).transpose()).transpose();
  }
  return EmbeddingBatch(n_samples, multiplicity, std::move(rows));
}

EmbeddingBatch EmbeddingBatch::select_views(const std::vector<int>& views) const {
  const int m = static_cast<int>(views.size());
  RowMatrix rows(static_cast<Eigen::Index>(n_samples_) * m, dim());
  for (int i = 0; i < n_samples_; ++i) {
    for (int a = 0; a < m; ++a) {
      require_view(views[a], multiplicity_, "view");
      rows.row(i * m + a) = view(i, views[a]);
    }
  }
  return EmbeddingBatch(n_samples_, m, std::move(rows));
}

SelfMask::SelfMask(int beta, int n_samples, int multiplicity)
    : beta_(beta),
      n_samples_(n_samples),
      multiplicity_(multiplicity),
      bits_(static_cast<std::size_t>(n_samples) * multiplicity * n_samples, 0) {
  if (n_samples < 1 || multiplicity < 1) throw std::invalid_argument("empty mask shape");
  require_view(beta, multiplicity, "beta");
  for (int i = 0; i < n_samples; ++i) {
    for (int nu = 0; nu < multiplicity; ++nu) {
      if (nu != beta) bits_[(static_cast<std::size_t>(i) * multiplicity + nu) * n_samples + i] = 1;
    }
  }
}

std::size_t SelfMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Eigen::VectorXd l2_normalize(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double n = v.norm();
  if (!(n > kNormalizeEpsilon) || !std::isfinite(n)) {
    throw std::domain_error("cannot normalize a zero, subnormal or non-finite vector");
  }
  return v / n;
}

ScoreTensor score_tensor(const EmbeddingBatch& anchor, const EmbeddingBatch& target, double tau) {
  require_tau(tau);
  if (anchor.n_samples() != target.n_samples() || anchor.multiplicity() != target.multiplicity() ||
      anchor.dim() != target.dim()) {
    throw std::invalid_argument("score_tensor: anchor and target shapes differ");
  }
  const Eigen::Index b = anchor.total_views();
  const int d = anchor.dim();
  RowMatrix s(b, b);
  for (Eigen::Index r = 0; r < b; ++r) {
    for (Eigen::Index c = 0; c < b; ++c) {
      double acc = 0.0;
      for (int t = 0; t < d; ++t) acc += anchor.rows()(r, t) * target.rows()(c, t);
      s(r, c) = acc / tau;
    }
  }
  return ScoreTensor(anchor.n_samples(), anchor.multiplicity(), tau, std::move(s));
}

SelfMask self_mask(int beta, int n_samples, int multiplicity) {
  return SelfMask(beta, n_samples, multiplicity);
}

LossResult loss_pair_infonce(const EmbeddingBatch& z, int alpha, int beta, double tau) {
  require_tau(tau);
  const int k = z.n_samples();
  const int m = z.multiplicity();
  require_view(alpha, m, "alpha");
  require_view(beta, m, "beta");
  if (alpha == beta) throw std::invalid_argument("loss_pair_infonce needs alpha != beta");

  RowMatrix anchors(k, z.dim());
  RowMatrix targets(k, z.dim());
  for (int i = 0; i < k; ++i) {
    anchors.row(i) = z.view(i, alpha);
    targets.row(i) = z.view(i, beta);
  }
  auto row_fn = [](Eigen::Index r, Eigen::Ref<RowVector> s) {
    const double positive = s(r);
    const double mx = s.maxCoeff();
    const double sum = (s.array() - mx).exp().sum();
    return mx + std::log(sum) - positive;
  };
  LossResult result;
  sweep_rows(anchors, targets, tau, false, 0.0, row_fn, result.per_sample, nullptr, nullptr);
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += result.per_sample(i);
  result.total = total / k;
  return result;
}

LossResult loss_multicrop(const EmbeddingBatch& z, double tau) {
  return evaluate(Method::MultiCrop, z, tau, false).loss;
}

RowMatrix pvc_likelihoods(const EmbeddingBatch& z, double tau, int alpha) {
  const int k = z.n_samples();
  const int m = z.multiplicity();
  require_view(alpha, m, "alpha");
  const ScoreTensor s = score_tensor(z, z, tau);
  RowMatrix out(k, m - 1);
  int col = 0;
  for (int beta = 0; beta < m; ++beta) {
    if (beta == alpha) continue;
    const SelfMask mask = self_mask(beta, k, m);
    for (int i = 0; i < k; ++i) {
      double mx = kNegInf;
      for (int nu = 0; nu < m; ++nu) {
        for (int j = 0; j < k; ++j) {
          if (!mask(i, nu, j)) mx = std::max(mx, s(i, alpha, nu, j));
        }
      }
      double acc = 0.0;
      for (int nu = 0; nu < m; ++nu) {
        for (int j = 0; j < k; ++j) {
          if (!mask(i, nu, j)) acc += std::exp(s(i, alpha, nu, j) - mx);
        }
      }
      out(i, col) = std::exp(s(i, alpha, beta, i) - (mx + std::log(acc)));
    }
    ++col;
  }
  return out;
}

LossResult loss_arithmetic_pvc(const EmbeddingBatch& z, double tau) {
  return evaluate(Method::ArithmeticPVC, z, tau, false).loss;
}

LossResult loss_geometric_pvc(const EmbeddingBatch& z, double tau) {
  return evaluate(Method::GeometricPVC, z, tau, false).loss;
}

RowMatrix rest_set_statistic(const EmbeddingBatch& z, int alpha) {
  const int k = z.n_samples();
  const int m = z.multiplicity();
  require_view(alpha, m, "alpha");
  const RowMatrix zv = to_view_major(z.rows(), k, m);
  const RowMatrix u = rest_set_means(zv, k, m).middleRows(static_cast<Eigen::Index>(alpha) * k, k);
  Eigen::VectorXd norms;
  return normalize_rows(u, &norms, kRestSetEpsilon, "rest-set mean");
}

LossResult loss_suffstats(const EmbeddingBatch& z, double tau) {
  return evaluate(Method::SuffStats, z, tau, false).loss;
}

LossResult compute_loss(Method method, const EmbeddingBatch& z, double tau) {
  return evaluate(method, z, tau, false).loss;
}

LossGradient compute_loss_and_gradient(Method method, const EmbeddingBatch& z, double tau) {
  return evaluate(method, z, tau, true);
}

}  // namespace polyview
