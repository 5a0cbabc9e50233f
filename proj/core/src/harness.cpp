#include "polyview/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "polyview/bounds.hpp"
#include "polyview/gaussian_world.hpp"
#include "polyview/losses.hpp"
#include "polyview/random.hpp"
#include "polyview/record_io.hpp"

namespace polyview {

namespace {

struct MeanStderr {
  double mean;
  double stderr_;
};

MeanStderr mean_stderr(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = xs.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

double sample_variance(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

GaussianConfig world_of(const RunSpec& spec) {
  return GaussianConfig(spec.sigma0_sq, spec.sigma_sq, spec.k, spec.m, spec.seed);
}

MlpParams frozen_encoder(const RunSpec& spec) {
  RandomStream rng(spec.seed, streams::kInit);
  return init_params(rng);
}

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace

void RunSpec::validate() const {
  if (k < 2) throw std::invalid_argument("RunSpec: k must be >= 2");
  if (m < 2) throw std::invalid_argument("RunSpec: m must be >= 2");
  if (method == Method::InfoNCE && m != 2) {
    throw std::invalid_argument("RunSpec: infonce requires m = 2");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("RunSpec: tau must be > 0");
  if (eval_batches < 1) throw std::invalid_argument("RunSpec: eval_batches must be >= 1");
  if (record_stride < 1) throw std::invalid_argument("RunSpec: record_stride must be >= 1");
  train.validate();
  (void)world_of(*this);
}

RunRecord run_training(const RunSpec& spec) {
  spec.validate();
  const GaussianConfig world = world_of(spec);
  const double true_mi = true_one_vs_rest_mi(spec.sigma0_sq, spec.sigma_sq, spec.m);
  const double offset = bound_offset(spec.method, spec.k, spec.m);

  RunRecord record{spec, {}, RunStatus::Ok, {}, frozen_encoder(spec)};
  MlpParams& params = record.final_params;
  AdamWState state = AdamWState::ZerosLike(params);

  auto evaluate = [&](int epoch, std::optional<double> train_loss) {
    std::vector<double> losses;
    losses.reserve(spec.eval_batches);
    for (int b = 0; b < spec.eval_batches; ++b) {
      RandomStream rng(spec.seed, streams::Eval(epoch, b));
      const ViewBatch batch = sample_batch(world, rng);
      losses.push_back(compute_loss(spec.method, forward(params, batch.views), spec.tau).total);
      if (!std::isfinite(losses.back())) {
        throw NumericalFailure("non-finite eval loss at epoch " + std::to_string(epoch));
      }
    }
    const MeanStderr eval = mean_stderr(losses);
    RunRow row{spec.method, spec.m,  spec.k,      spec.seed,    epoch, train_loss,
               eval.mean,   eval.stderr_, 0.0, true_mi, 0.0, std::nullopt};
    row.bound = offset - row.eval_loss;
    row.gap = mi_gap(true_mi, row.bound);
    if (row.bound > 0.0) row.relative_mi = true_mi / row.bound;
    record.rows.push_back(row);
  };

  try {
    evaluate(0, std::nullopt);
    for (int epoch = 1; epoch <= spec.train.epochs; ++epoch) {
      RandomStream rng(spec.seed, streams::Train(spec.fixed_dataset ? 1 : epoch));
      const ViewBatch batch = sample_batch(world, rng);
      const BackwardResult step = backward(params, batch.views, spec.method, spec.tau);
      if (!std::isfinite(step.loss.total) || !step.grad.values().allFinite()) {
        throw NumericalFailure("non-finite training loss or gradient at epoch " +
                               std::to_string(epoch));
      }
      adamw_step(params, step.grad, state, spec.train);
      if (epoch % spec.record_stride == 0 || epoch == spec.train.epochs) {
        evaluate(epoch, step.loss.total);
      }
    }
  } catch (const NumericalFailure& e) {
    record.status = RunStatus::NumericalFailure;
    record.diagnostic = e.what();
  } catch (const std::domain_error& e) {
    record.status = RunStatus::NumericalFailure;
    record.diagnostic = e.what();
  }
  return record;
}

void SweepSpec::validate() const {
  if (methods.empty() || m_values.empty() || seeds.empty()) {
    throw std::invalid_argument("SweepSpec: methods, m_values and seeds must be non-empty");
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("SweepSpec: seeds must be distinct");
  }
  if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size() ||
      std::set<int>(m_values.begin(), m_values.end()).size() != m_values.size()) {
    throw std::invalid_argument("SweepSpec: methods and m_values must be distinct");
  }
  if (jobs < 1) throw std::invalid_argument("SweepSpec: jobs must be >= 1");
  for (const RunSpec& r : expand()) r.validate();
}

std::vector<RunSpec> SweepSpec::expand() const {
  std::vector<RunSpec> out;
  for (Method method : methods) {
    for (int m : m_values) {
      for (std::uint64_t seed : seeds) {
        RunSpec r;
        r.method = method;
        r.m = m;
        r.k = k;
        r.sigma0_sq = sigma0_sq;
        r.sigma_sq = sigma_sq;
        r.tau = tau;
        r.train = train;
        r.seed = seed;
        r.eval_batches = eval_batches;
        r.record_stride = record_stride;
        r.fixed_dataset = fixed_dataset;
        out.push_back(r);
      }
    }
  }
  return out;
}

std::string record_file_name(const RunSpec& spec) {
  return std::string(to_string(spec.method)) + "_m" + std::to_string(spec.m) + "_seed" +
         std::to_string(spec.seed) + ".csv";
}

SweepResult run_sweep(const SweepSpec& sweep, const std::filesystem::path& out_dir) {
  sweep.validate();
  std::filesystem::create_directories(out_dir);
  const std::vector<RunSpec> runs = sweep.expand();

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  SweepResult result;
  auto worker = [&] {
    for (std::size_t idx = next++; idx < runs.size(); idx = next++) {
      const RunSpec& spec = runs[idx];
      const std::filesystem::path path = out_dir / record_file_name(spec);
      std::string failure;
      try {
        const RunRecord record = run_training(spec);
        save_record_csv(record, path);
        if (record.status != RunStatus::Ok) failure = record.diagnostic;
      } catch (const std::exception& e) {
        failure = e.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      if (std::filesystem::exists(path)) result.files.push_back(path);
      if (!failure.empty()) result.failures.push_back(record_file_name(spec) + ": " + failure);
    }
  };

  const int n_workers = std::min<int>(sweep.jobs, static_cast<int>(runs.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::sort(result.files.begin(), result.files.end());
  std::sort(result.failures.begin(), result.failures.end());

  std::ofstream manifest(out_dir / "manifest.json");
  manifest << "{\n  \"config\": " << sweep_config_json(sweep) << ",\n"
           << "  \"eval_protocol\": \"mean loss over eval_batches fresh held-out batches per "
              "recorded epoch\",\n"
           << "  \"runs\": " << runs.size() << ",\n  \"failures\": [";
  for (std::size_t i = 0; i < result.failures.size(); ++i) {
    std::string escaped;
    for (char c : result.failures[i]) {
      if (c == '"' || c == '\\') escaped += '\\';
      escaped += c;
    }
    manifest << (i ? ", " : "") << '"' << escaped << '"';
  }
  manifest << "]\n}\n";
  return result;
}

std::vector<SummaryRow> aggregate(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("aggregate: not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  if (files.empty()) throw std::invalid_argument("aggregate: no record files in " + dir.string());
  std::sort(files.begin(), files.end());

  struct Group {
    double true_mi = 0.0;
    std::vector<double> bound, gap, relative;
  };
  auto method_rank = [](Method m) {
    return std::find(kAllMethods.begin(), kAllMethods.end(), m) - kAllMethods.begin();
  };
  std::map<std::pair<long, int>, Group> groups;
  for (const auto& path : files) {
    const std::vector<RunRow> rows = load_record_csv(path);
    if (rows.empty()) continue;
    const RunRow& last = *std::max_element(
        rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) { return a.epoch < b.epoch; });
    Group& g = groups[{static_cast<long>(method_rank(last.method)), last.m}];
    g.true_mi = last.true_mi;
    g.bound.push_back(last.bound);
    g.gap.push_back(last.gap);
    if (last.relative_mi) g.relative.push_back(*last.relative_mi);
  }

  auto stat = [](const std::vector<double>& xs) {
    SummaryStat s;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= s.n;
    if (s.n > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - s.mean) * (x - s.mean);
      s.std = std::sqrt(ss / (s.n - 1));
    }
    return s;
  };

  std::vector<SummaryRow> out;
  for (const auto& [key, g] : groups) {
    SummaryRow row{kAllMethods[key.first], key.second, static_cast<int>(g.bound.size()), g.true_mi,
                   stat(g.bound), stat(g.gap), stat(g.relative), g.bound.size() == 1};
    out.push_back(row);
  }
  return out;
}

VarianceReport variance_study(const RunSpec& spec, int n_batches) {
  spec.validate();
  if (n_batches < kMinVarianceBatches) {
    throw std::invalid_argument("variance_study needs at least " +
                                std::to_string(kMinVarianceBatches) + " batches");
  }
  const GaussianConfig world = world_of(spec);
  const MlpParams encoder = frozen_encoder(spec);

  std::vector<double> var_multicrop(n_batches);
  std::vector<double> var_pair(n_batches);
  for (int b = 0; b < n_batches; ++b) {
    RandomStream rng(spec.seed, streams::Study(b));
    const ViewBatch batch = sample_batch(world, rng);
    const EmbeddingBatch z = forward(encoder, batch.views);
    var_multicrop[b] = sample_variance(loss_multicrop(z, spec.tau).per_sample);
    var_pair[b] = sample_variance(loss_multicrop(z.select_views({0, 1}), spec.tau).per_sample);
  }

  auto ratio_of = [&](const std::vector<int>& idx) {
    double num = 0.0;
    double den = 0.0;
    for (int i : idx) {
      num += var_multicrop[i];
      den += var_pair[i];
    }
    return num / den;
  };
  std::vector<int> all(n_batches);
  for (int i = 0; i < n_batches; ++i) all[i] = i;

  constexpr int kResamples = 2000;
  RandomStream boot(spec.seed, streams::Study(std::uint64_t{1} << 32));
  std::uniform_int_distribution<int> pick(0, n_batches - 1);
  std::vector<double> ratios(kResamples);
  std::vector<int> idx(n_batches);
  for (int r = 0; r < kResamples; ++r) {
    for (int& i : idx) i = pick(boot);
    ratios[r] = ratio_of(idx);
  }
  std::sort(ratios.begin(), ratios.end());
  auto quantile = [&](double q) {
    const double pos = q * (kResamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min<std::size_t>(lo + 1, kResamples - 1);
    return ratios[lo] + (pos - lo) * (ratios[hi] - ratios[lo]);
  };

  VarianceReport report;
  report.m = spec.m;
  report.n_batches = n_batches;
  report.multicrop_variance = mean_stderr(var_multicrop).mean;
  report.pair_variance = mean_stderr(var_pair).mean;
  report.ratio = ratio_of(all);
  report.ratio_ci_low = quantile(0.005);
  report.ratio_ci_high = quantile(0.995);
  report.theoretical_factor = variance_bound_factor(spec.m);
  return report;
}

ValidityReport validity_study(const RunSpec& spec, const std::optional<MlpParams>& encoder) {
  spec.validate();
  if (!uses_polyview_offset(spec.method)) {
    throw std::invalid_argument("validity_study applies to arithmetic, geometric and suffstats");
  }
  const GaussianConfig world = world_of(spec);
  const MlpParams params = encoder ? *encoder : frozen_encoder(spec);
  const double mi_m = true_one_vs_rest_mi(spec.sigma0_sq, spec.sigma_sq, spec.m);
  const double mi_2 = true_one_vs_rest_mi(spec.sigma0_sq, spec.sigma_sq, 2);

  std::vector<double> gaps_m, gaps_pair, diffs;
  for (int b = 0; b < spec.eval_batches; ++b) {
    RandomStream rng(spec.seed, streams::Study(b));
    const ViewBatch batch = sample_batch(world, rng);
    const EmbeddingBatch z = forward(params, batch.views);
    const double loss_m = compute_loss(spec.method, z, spec.tau).total;
    const double gap_m = mi_gap(mi_m, bound_from_loss(spec.method, loss_m, spec.k, spec.m));

    double pair_acc = 0.0;
    int n_pairs = 0;
    for (int a = 0; a < spec.m; ++a) {
      for (int c = a + 1; c < spec.m; ++c) {
        const double loss_2 = compute_loss(spec.method, z.select_views({a, c}), spec.tau).total;
        pair_acc += mi_gap(mi_2, bound_from_loss(spec.method, loss_2, spec.k, 2));
        ++n_pairs;
      }
    }
    const double gap_pair = pair_acc / n_pairs;
    gaps_m.push_back(gap_m);
    gaps_pair.push_back(gap_pair);
    diffs.push_back(gap_m - gap_pair);
  }
  const MeanStderr gm = mean_stderr(gaps_m);
  const MeanStderr gp = mean_stderr(gaps_pair);
  const MeanStderr d = mean_stderr(diffs);
  return {spec.method, spec.m,       spec.eval_batches, gm.mean, gm.stderr_, gp.mean, gp.stderr_,
          d.mean,      d.stderr_, d.mean <= 3.0 * d.stderr_};
}

}  // namespace polyview
