#include "polyview/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "polyview/bounds.hpp"
#include "polyview/gaussian_world.hpp"
#include "polyview/harness.hpp"
#include "polyview/losses.hpp"
#include "polyview/random.hpp"

namespace polyview {

namespace {

// Stream indices private to the check suites.
constexpr std::uint64_t kCheckSeed = 20240917;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

class Suite {
 public:
  explicit Suite(std::string name, std::ostream* log) : log_(log) { report_.suite = std::move(name); }

  void add(std::string name, bool passed, std::string detail) {
    if (log_) *log_ << (passed ? "PASS " : "FAIL ") << report_.suite << '/' << name << "  " << detail << '\n';
    report_.checks.push_back({std::move(name), passed, std::move(detail)});
  }

  // Check that `err` stays below `tol`; reports the worst value seen.
  void within(std::string name, double err, double tol) {
    add(std::move(name), err < tol, "max error " + fmt(err) + " (tol " + fmt(tol) + ")");
  }

  SuiteReport take() { return std::move(report_); }

 private:
  std::ostream* log_;
  SuiteReport report_;
};

EmbeddingBatch random_embeddings(RandomStream& rng, int k, int m, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix raw(k * m, d);
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (Eigen::Index c = 0; c < raw.cols(); ++c) raw(r, c) = normal(rng);
  }
  return EmbeddingBatch::FromRaw(k, m, raw);
}

EmbeddingBatch collapsed_embeddings(int k, int m, int d) {
  RowMatrix rows = RowMatrix::Zero(k * m, d);
  rows.col(0).setOnes();
  return EmbeddingBatch(k, m, std::move(rows));
}

double all_losses_max_diff(const EmbeddingBatch& a, const EmbeddingBatch& b, double tau) {
  double worst = 0.0;
  for (Method method : kAllMethods) {
    if (method == Method::InfoNCE && a.multiplicity() != 2) continue;
    worst = std::max(worst, std::abs(compute_loss(method, a, tau).total -
                                     compute_loss(method, b, tau).total));
  }
  return worst;
}

SuiteReport oracles(std::ostream* log) {
  Suite s("oracles", log);

  double worst = 0.0;
  for (double v0 : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    for (double v : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      for (int m = 2; m <= 16; ++m) {
        worst = std::max(worst, std::abs(true_one_vs_rest_mi(v0, v, m) - mi_via_gaussian_kl(v0, v, m)));
      }
    }
  }
  s.within("gaussian_mi_closed_form_vs_kl", worst, 1e-9);

  const auto zeros = Philox4x32::Encrypt({0, 0, 0, 0}, {0, 0});
  const auto ones = Philox4x32::Encrypt({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u});
  const bool kat = zeros == Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u} &&
                   ones == Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu};
  s.add("philox_known_answers", kat, kat ? "2 vectors" : "mismatch");

  // Geometric and arithmetic losses rebuilt from the literal mask-based
  // likelihoods, against the fused kernels.
  RandomStream rng(kCheckSeed, 1);
  double geo_err = 0.0;
  double ari_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 4;
    const int m = 2 + trial % 3;
    const double tau = 0.2 + 0.1 * trial;
    const EmbeddingBatch z = random_embeddings(rng, k, m, 5);
    double geo = 0.0;
    double ari = 0.0;
    for (int a = 0; a < m; ++a) {
      const RowMatrix l = pvc_likelihoods(z, tau, a);
      for (int i = 0; i < k; ++i) {
        geo += -l.row(i).array().log().mean();
        ari += -std::log(l.row(i).mean());
      }
    }
    geo /= k * m;
    ari /= k * m;
    geo_err = std::max(geo_err, std::abs(geo - loss_geometric_pvc(z, tau).total));
    ari_err = std::max(ari_err, std::abs(ari - loss_arithmetic_pvc(z, tau).total));
  }
  s.within("geometric_vs_masked_likelihoods", geo_err, 1e-12);
  s.within("arithmetic_vs_masked_likelihoods", ari_err, 1e-12);

  // Multi-Crop as the mean of explicitly summed pairwise softmaxes.
  double mc_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 5;
    const int m = 2 + trial % 4;
    const double tau = 0.3 + 0.05 * trial;
    const EmbeddingBatch z = random_embeddings(rng, k, m, 4);
    const ScoreTensor st = score_tensor(z, z, tau);
    double acc = 0.0;
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        if (a == b) continue;
        for (int i = 0; i < k; ++i) {
          double denom = 0.0;
          for (int j = 0; j < k; ++j) denom += std::exp(st(i, a, b, j));
          acc += std::log(denom) - st(i, a, b, i);
        }
      }
    }
    acc /= static_cast<double>(k) * m * (m - 1);
    mc_err = std::max(mc_err, std::abs(acc - loss_multicrop(z, tau).total));
  }
  s.within("multicrop_vs_explicit_softmax", mc_err, 1e-12);

  // Rest-set statistic as zero-rescale-average-normalize.
  double q_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 2 + trial % 3;
    const int m = 2 + trial % 4;
    const EmbeddingBatch z = random_embeddings(rng, k, m, 6);
    for (int a = 0; a < m; ++a) {
      const RowMatrix q = rest_set_statistic(z, a);
      for (int i = 0; i < k; ++i) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(z.dim());
        for (int b = 0; b < m; ++b) {
          if (b != a) u += z.view(i, b).transpose() * (static_cast<double>(m) / (m - 1));
        }
        u /= m;
        q_err = std::max(q_err, (q.row(i).transpose() - u / u.norm()).cwiseAbs().maxCoeff());
      }
    }
  }
  s.within("rest_set_statistic_vs_rescaled_mean", q_err, 1e-12);

  return s.take();
}

SuiteReport grads(std::ostream* log) {
  Suite s("grads", log);
  const int shapes[3][2] = {{2, 2}, {4, 3}, {3, 4}};
  for (Method method : kAllMethods) {
    double worst = 0.0;
    for (const auto& shape : shapes) {
      const int k = shape[0];
      const int m = method == Method::InfoNCE ? 2 : shape[1];
      for (int b = 0; b < 10; ++b) {
        const std::uint64_t seed = kCheckSeed + 100 * b + k * 10 + m;
        RandomStream init(seed, streams::kInit);
        const MlpParams params = init_params(init);
        RandomStream data(seed, streams::Study(0));
        const ViewBatch batch = sample_batch(GaussianConfig(1.0, 0.25, k, m, seed), data);
        const double tau = 0.5;
        const BackwardResult analytic = backward(params, batch.views, method, tau);
        const Eigen::VectorXd numeric = finite_difference_gradient(params, batch.views, method, tau);
        worst = std::max(worst, gradient_relative_error(analytic.grad.values(), numeric));
      }
    }
    s.within(std::string(to_string(method)) + "_random_batches", worst, 1e-5);
  }

  // Collapsed head: zero w2 makes every embedding normalize(b2).
  for (Method method : kAllMethods) {
    RandomStream init(kCheckSeed, streams::kInit);
    MlpParams params = init_params(init);
    params.w2().setZero();
    const int m = method == Method::InfoNCE ? 2 : 3;
    RandomStream data(kCheckSeed, streams::Study(1));
    const ViewBatch batch = sample_batch(GaussianConfig(1.0, 0.25, 4, m, kCheckSeed), data);
    const BackwardResult analytic = backward(params, batch.views, method, 0.5);
    const Eigen::VectorXd numeric = finite_difference_gradient(params, batch.views, method, 0.5);
    s.within(std::string(to_string(method)) + "_collapsed_head",
             gradient_relative_error(analytic.grad.values(), numeric), 1e-5);
  }
  return s.take();
}

SuiteReport identities(std::ostream* log) {
  Suite s("identities", log);
  RandomStream rng(kCheckSeed, 2);
  double ag = 0.0;
  double sg = 0.0;
  double im = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 7;
    const double tau = 0.1 + 0.02 * trial;
    const EmbeddingBatch z = random_embeddings(rng, k, 2, 6);
    const double geo = loss_geometric_pvc(z, tau).total;
    ag = std::max(ag, std::abs(loss_arithmetic_pvc(z, tau).total - geo));
    sg = std::max(sg, std::abs(loss_suffstats(z, tau).total - geo));
    im = std::max(im, std::abs(compute_loss(Method::InfoNCE, z, tau).total -
                               loss_multicrop(z, tau).total));
  }
  s.within("arithmetic_eq_geometric_at_m2", ag, 1e-12);
  s.within("suffstats_eq_geometric_at_m2", sg, 1e-12);
  s.within("infonce_eq_multicrop_at_m2", im, 1e-12);

  double sentinel = 0.0;
  double bound = 0.0;
  for (int k : {2, 3, 16, 1024}) {
    for (int m : {2, 3, 4, 10}) {
      const EmbeddingBatch z = collapsed_embeddings(k, m, 3);
      for (Method method : kAllMethods) {
        if (method == Method::InfoNCE && m != 2) continue;
        const double loss = compute_loss(method, z, 0.5).total;
        sentinel = std::max(sentinel, std::abs(loss - bound_offset(method, k, m)));
        bound = std::max(bound, std::abs(bound_from_loss(method, loss, k, m)));
      }
    }
  }
  s.within("collapsed_loss_equals_offset", sentinel, 1e-12);
  s.within("collapsed_bound_is_zero", bound, 1e-12);

  double limit = std::abs(true_one_vs_rest_mi(1.0, 1.0, 1000000) - mi_infomax_limit(1.0, 1.0));
  s.within("mi_large_m_limit", limit, 1e-6);
  s.within("variance_factor_m2_is_one", std::abs(variance_bound_factor(2) - 1.0), 1e-15);
  return s.take();
}

SuiteReport invariants(std::ostream* log) {
  Suite s("invariants", log);
  RandomStream rng(kCheckSeed, 3);

  int strict = 0;
  bool ordered = true;
  const int n_jensen = 200;
  for (int trial = 0; trial < n_jensen; ++trial) {
    const EmbeddingBatch z = random_embeddings(rng, 3 + trial % 6, 3 + trial % 4, 5);
    const double tau = 0.2 + 0.01 * (trial % 50);
    const double ari = loss_arithmetic_pvc(z, tau).total;
    const double geo = loss_geometric_pvc(z, tau).total;
    ordered = ordered && ari <= geo;
    strict += ari < geo;
  }
  s.add("arithmetic_le_geometric", ordered && strict > 0.99 * n_jensen,
        std::to_string(strict) + "/" + std::to_string(n_jensen) + " strict");

  double perm = 0.0;
  double mixed_perm = 0.0;
  double orth = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 2 + trial % 5;
    const int m = trial % 2 == 0 ? 2 : 2 + trial % 4;
    const int d = 6;
    const double tau = 0.3 + 0.02 * trial;
    const EmbeddingBatch z = random_embeddings(rng, k, m, d);

    std::vector<int> order(m);
    for (int v = 0; v < m; ++v) order[v] = v;
    std::shuffle(order.begin(), order.end(), rng);
    perm = std::max(perm, all_losses_max_diff(z, z.select_views(order), tau));

    // Independent permutations per sample keep every poly-view candidate set
    // intact; the pairwise objectives only see a shared relabeling.
    RowMatrix shuffled = z.rows();
    for (int i = 0; i < k; ++i) {
      std::shuffle(order.begin(), order.end(), rng);
      for (int v = 0; v < m; ++v) shuffled.row(z.index(i, v)) = z.view(i, order[v]);
    }
    const EmbeddingBatch mixed(k, m, std::move(shuffled));
    for (Method method : {Method::ArithmeticPVC, Method::GeometricPVC, Method::SuffStats}) {
      mixed_perm = std::max(mixed_perm, std::abs(compute_loss(method, z, tau).total -
                                                 compute_loss(method, mixed, tau).total));
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd h(d);
    for (int c = 0; c < d; ++c) h(c) = normal(rng);
    h.normalize();
    const Eigen::MatrixXd reflect = Eigen::MatrixXd::Identity(d, d) - 2.0 * h * h.transpose();
    RowMatrix rotated = z.rows() * reflect;
    for (Eigen::Index r = 0; r < rotated.rows(); ++r) rotated.row(r).normalize();
    orth = std::max(orth, all_losses_max_diff(z, EmbeddingBatch(k, m, std::move(rotated)), tau));
  }
  s.within("shared_view_permutation_invariance", perm, 1e-12);
  s.within("per_sample_view_permutation_invariance_polyview", mixed_perm, 1e-12);
  s.within("orthogonal_invariance", orth, 1e-12);

  bool bounded = true;
  bool likelihood_range = true;
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 2 + trial % 6;
    const int m = 2 + trial % 4;
    const EmbeddingBatch z = random_embeddings(rng, k, m, 4);
    const double tau = 0.1 + 0.05 * trial;
    for (Method method : kAllMethods) {
      if (method == Method::InfoNCE && m != 2) continue;
      const LossResult loss = compute_loss(method, z, tau);
      bounded = bounded && (loss.per_sample.array() >= 0.0).all() &&
                bound_from_loss(method, loss.total, k, m) <= bound_offset(method, k, m);
    }
    for (int a = 0; a < m; ++a) {
      const RowMatrix l = pvc_likelihoods(z, tau, a);
      likelihood_range = likelihood_range && (l.array() > 0.0).all() && (l.array() <= 1.0).all();
    }
  }
  s.add("losses_nonnegative_and_bound_below_offset", bounded, "");
  s.add("likelihoods_in_unit_interval", likelihood_range, "");

  bool decreasing = true;
  for (int m = 2; m < 64; ++m) {
    decreasing = decreasing && variance_bound_factor(m + 1) < variance_bound_factor(m);
  }
  s.add("variance_factor_strictly_decreasing", decreasing, "M in [2, 64]");

  bool mi_increasing = true;
  for (int m = 2; m < 64; ++m) {
    mi_increasing = mi_increasing && true_one_vs_rest_mi(1.0, 0.25, m + 1) > true_one_vs_rest_mi(1.0, 0.25, m) &&
                    true_one_vs_rest_mi(1.0, 0.25, m + 1) < mi_infomax_limit(1.0, 0.25);
  }
  s.add("true_mi_increasing_below_limit", mi_increasing, "M in [2, 64]");

  // Short training runs: the signed gap must not go persistently negative.
  bool gap_ok = true;
  std::string gap_detail;
  for (Method method : {Method::MultiCrop, Method::GeometricPVC, Method::SuffStats}) {
    RunSpec spec;
    spec.method = method;
    spec.m = 4;
    spec.k = 64;
    spec.train.epochs = 20;
    spec.train.learning_rate = 5e-3;
    spec.record_stride = 10;
    spec.eval_batches = 8;
    spec.seed = kCheckSeed;
    const RunRecord rec = run_training(spec);
    for (const RunRow& row : rec.rows) {
      if (row.gap < -3.0 * row.eval_stderr) {
        gap_ok = false;
        gap_detail += std::string(to_string(method)) + "@" + std::to_string(row.epoch) + " ";
      }
    }
    gap_ok = gap_ok && rec.status == RunStatus::Ok;
  }
  s.add("training_gap_not_negative", gap_ok, gap_detail);
  return s.take();
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.passed; });
}

const std::vector<std::string>& check_suite_names() {
  static const std::vector<std::string> names = {"oracles", "grads", "identities", "invariants"};
  return names;
}

SuiteReport run_check_suite(std::string_view name, std::ostream* log) {
  if (name == "oracles") return oracles(log);
  if (name == "grads") return grads(log);
  if (name == "identities") return identities(log);
  if (name == "invariants") return invariants(log);
  throw std::invalid_argument("unknown suite: " + std::string(name));
}

Eigen::VectorXd finite_difference_gradient(const MlpParams& params, const RowMatrix& views,
                                           Method method, double tau, double h) {
  Eigen::VectorXd grad(params.size());
  MlpParams probe = params;
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    const double base = params.values()(j);
    probe.values()(j) = base + h;
    const double up = compute_loss(method, forward(probe, views), tau).total;
    probe.values()(j) = base - h;
    const double down = compute_loss(method, forward(probe, views), tau).total;
    probe.values()(j) = base;
    grad(j) = (up - down) / (2.0 * h);
  }
  return grad;
}

double gradient_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("gradient size mismatch");
  double worst = 0.0;
  for (Eigen::Index j = 0; j < analytic.size(); ++j) {
    const double scale = std::max({std::abs(analytic(j)), std::abs(numeric(j)), kGradientErrorFloor});
    worst = std::max(worst, std::abs(analytic(j) - numeric(j)) / scale);
  }
  return worst;
}

}  // namespace polyview
