#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "polyview/method.hpp"
#include "polyview/tinynn.hpp"

namespace polyview {

// One training run in the Gaussian world.
struct RunSpec {
  Method method = Method::GeometricPVC;
  int m = 2;
  int k = 1024;
  double sigma0_sq = 1.0;
  double sigma_sq = 0.25;
  double tau = 0.5;
  TrainConfig train;
  std::uint64_t seed = 0;
  int eval_batches = 16;
  // Held-out evaluation happens at epoch 0, every record_stride epochs, and
  // at the final epoch.
  int record_stride = 1;
  // Reuse a single training batch for every step instead of resampling.
  bool fixed_dataset = false;

  void validate() const;
};

struct RunRow {
  Method method;
  int m;
  int k;
  std::uint64_t seed;
  int epoch;
  std::optional<double> train_loss;  // absent before the first step
  double eval_loss;
  double eval_stderr;  // over eval batches; kept in memory only
  double bound;
  double true_mi;
  double gap;
  std::optional<double> relative_mi;  // absent when bound <= 0
};

enum class RunStatus { Ok, NumericalFailure };

struct RunRecord {
  RunSpec spec;
  std::vector<RunRow> rows;
  RunStatus status = RunStatus::Ok;
  std::string diagnostic;
  MlpParams final_params;
};

// Deterministic in spec: every draw comes from (spec.seed, stream) pairs.
RunRecord run_training(const RunSpec& spec);

struct SweepSpec {
  std::vector<Method> methods;
  std::vector<int> m_values;
  std::vector<std::uint64_t> seeds;
  int k = 1024;
  double sigma0_sq = 1.0;
  double sigma_sq = 0.25;
  double tau = 0.5;
  TrainConfig train;
  int eval_batches = 16;
  int record_stride = 1;
  bool fixed_dataset = false;
  int jobs = 1;

  void validate() const;
  std::vector<RunSpec> expand() const;
};

struct SweepResult {
  std::vector<std::filesystem::path> files;  // sorted
  std::vector<std::string> failures;
};

// One CSV per (method, M, seed) under out_dir plus manifest.json. Runs are
// spread over `jobs` worker threads; failures are recorded and the sweep
// continues.
SweepResult run_sweep(const SweepSpec& sweep, const std::filesystem::path& out_dir);

std::string record_file_name(const RunSpec& spec);

struct SummaryStat {
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
};

struct SummaryRow {
  Method method;
  int m;
  int runs;
  double true_mi;
  SummaryStat bound;
  SummaryStat gap;
  SummaryStat relative_mi;  // n counts runs with a defined value
  bool single_run;          // std is reported as 0 and carries no information
};

// Final-epoch statistics per (method, M) over every *.csv in dir.
std::vector<SummaryRow> aggregate(const std::filesystem::path& dir);

struct VarianceReport {
  int m;
  int n_batches;
  double multicrop_variance;  // mean within-batch variance of per-sample losses
  double pair_variance;
  double ratio;
  double ratio_ci_low;  // 99% bootstrap interval over batches
  double ratio_ci_high;
  double theoretical_factor;
};

inline constexpr int kMinVarianceBatches = 32;

// Frozen encoder from init_params(spec.seed); the pair objective is the
// symmetric two-view loss on views (0, 1).
VarianceReport variance_study(const RunSpec& spec, int n_batches);

struct ValidityReport {
  Method method;
  int m;
  int n_batches;
  double gap_m;
  double gap_m_stderr;
  double mean_pair_gap;
  double mean_pair_gap_stderr;
  double difference;  // gap_m - mean_pair_gap, averaged over batches
  double difference_stderr;
  bool holds;  // difference <= 3 * difference_stderr
};

// Compares the M-view gap with the mean over view pairs of the two-view gap on
// spec.eval_batches fresh batches, using `encoder` (frozen init when omitted).
ValidityReport validity_study(const RunSpec& spec, const std::optional<MlpParams>& encoder = {});

}  // namespace polyview
