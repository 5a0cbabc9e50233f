#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "polyview/bounds.hpp"
#include "polyview/checks.hpp"
#include "polyview/gaussian_world.hpp"
#include "polyview/harness.hpp"
#include "polyview/record_io.hpp"

namespace {

using namespace polyview;

enum Exit : int { kOk = 0, kUsage = 1, kNumerical = 2, kSuiteFailure = 3 };

struct Options {
  // gaussian-mi
  double sigma0_sq = 1.0;
  double sigma_sq = 0.25;
  int m_max = 16;
  // train / studies
  std::string method = "geometric";
  RunSpec run;
  std::string out;
  // sweep / report
  std::string config;
  std::string in;
  int jobs = 0;
  // variance
  int batches = 256;
  // check
  std::string suite;
};

int cmd_gaussian_mi(const Options& o) {
  std::printf("m,true_mi,kl_mi,abs_diff,infomax_limit\n");
  const double limit = mi_infomax_limit(o.sigma0_sq, o.sigma_sq);
  for (int m = 2; m <= o.m_max; ++m) {
    const double closed = true_one_vs_rest_mi(o.sigma0_sq, o.sigma_sq, m);
    if (m <= kGaussianKlMaxViews) {
      const double kl = mi_via_gaussian_kl(o.sigma0_sq, o.sigma_sq, m);
      std::printf("%d,%s,%s,%s,%s\n", m, format_double(closed).c_str(), format_double(kl).c_str(),
                  format_double(std::abs(closed - kl)).c_str(), format_double(limit).c_str());
    } else {
      std::printf("%d,%s,NA,NA,%s\n", m, format_double(closed).c_str(), format_double(limit).c_str());
    }
  }
  return kOk;
}

int cmd_train(Options o) {
  o.run.method = parse_method(o.method);
  const RunRecord record = run_training(o.run);
  save_record_csv(record, o.out);
  if (record.status != RunStatus::Ok) {
    std::cerr << "numerical failure: " << record.diagnostic << '\n';
    return kNumerical;
  }
  const RunRow& last = record.rows.back();
  std::cout << "epoch " << last.epoch << " eval_loss " << format_double(last.eval_loss) << " bound "
            << format_double(last.bound) << " true_mi " << format_double(last.true_mi) << " gap "
            << format_double(last.gap) << '\n';
  return kOk;
}

int cmd_sweep(const Options& o) {
  SweepSpec sweep = load_sweep_config(o.config);
  if (o.jobs > 0) sweep.jobs = o.jobs;
  const SweepResult result = run_sweep(sweep, o.out);
  std::cout << result.files.size() << " record files written to " << o.out << '\n';
  for (const auto& f : result.failures) std::cerr << "failed: " << f << '\n';
  return result.failures.empty() ? kOk : kNumerical;
}

int cmd_report(const Options& o) {
  const std::vector<SummaryRow> rows = aggregate(o.in);
  std::ofstream csv(o.out);
  if (!csv) throw std::runtime_error("cannot write " + o.out);
  write_summary_csv(rows, csv);
  std::filesystem::path table = o.out;
  table.replace_extension(".dat");
  std::ofstream dat(table);
  if (!dat) throw std::runtime_error("cannot write " + table.string());
  write_summary_table(rows, dat);
  write_summary_csv(rows, std::cout);
  return kOk;
}

int cmd_variance(Options o) {
  o.run.method = Method::MultiCrop;
  const VarianceReport r = variance_study(o.run, o.batches);
  std::cout << "m " << r.m << "\nbatches " << r.n_batches << "\nmulticrop_variance "
            << format_double(r.multicrop_variance) << "\npair_variance "
            << format_double(r.pair_variance) << "\nratio " << format_double(r.ratio)
            << "\nratio_ci99 " << format_double(r.ratio_ci_low) << ' '
            << format_double(r.ratio_ci_high) << "\ntheoretical_factor "
            << format_double(r.theoretical_factor) << '\n';
  return kOk;
}

int cmd_validity(Options o) {
  o.run.method = parse_method(o.method);
  const ValidityReport r = validity_study(o.run);
  std::cout << "method " << to_string(r.method) << "\nm " << r.m << "\nbatches " << r.n_batches
            << "\ngap_m " << format_double(r.gap_m) << " +- " << format_double(r.gap_m_stderr)
            << "\nmean_pair_gap " << format_double(r.mean_pair_gap) << " +- "
            << format_double(r.mean_pair_gap_stderr) << "\ndifference "
            << format_double(r.difference) << " +- " << format_double(r.difference_stderr)
            << "\nholds " << (r.holds ? "yes" : "no") << '\n';
  return kOk;
}

int cmd_check(const Options& o) {
  const SuiteReport report = run_check_suite(o.suite, &std::cout);
  std::cout << report.suite << ": " << (report.passed() ? "PASS" : "FAIL") << '\n';
  return report.passed() ? kOk : kSuiteFailure;
}

void add_run_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--k", o.run.k, "Samples per batch")->capture_default_str();
  cmd->add_option("--tau", o.run.tau, "Temperature")->capture_default_str();
  cmd->add_option("--seed", o.run.seed, "Seed")->capture_default_str();
  cmd->add_option("--sigma0-sq", o.run.sigma0_sq, "Latent variance")->capture_default_str();
  cmd->add_option("--sigma-sq", o.run.sigma_sq, "View noise variance")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poly-view contrastive learning lab"};
  app.require_subcommand(1);
  Options o;
  int (*handler)(const Options&) = nullptr;

  auto* mi = app.add_subcommand("gaussian-mi", "Closed-form vs matrix-KL one-vs-rest MI table");
  mi->add_option("--sigma0-sq", o.sigma0_sq)->capture_default_str();
  mi->add_option("--sigma-sq", o.sigma_sq)->capture_default_str();
  mi->add_option("--m-max", o.m_max)->capture_default_str()->check(CLI::Range(2, 1 << 24));
  mi->callback([&] { handler = cmd_gaussian_mi; });

  auto* train = app.add_subcommand("train", "Train one run and write its record CSV");
  train->add_option("--method", o.method)->required();
  train->add_option("--m", o.run.m)->required();
  train->add_option("--epochs", o.run.train.epochs)->capture_default_str();
  train->add_option("--out", o.out)->required();
  train->add_option("--eval-batches", o.run.eval_batches)->capture_default_str();
  train->add_option("--record-stride", o.run.record_stride)->capture_default_str();
  train->add_option("--lr", o.run.train.learning_rate)->capture_default_str();
  train->add_option("--weight-decay", o.run.train.weight_decay)->capture_default_str();
  train->add_flag("--fixed-dataset", o.run.fixed_dataset);
  add_run_options(train, o);
  train->callback([&] { handler = [](const Options& x) { return cmd_train(x); }; });

  auto* sweep = app.add_subcommand("sweep", "Run a sweep described by a JSON config");
  sweep->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  sweep->add_option("--jobs", o.jobs, "Worker threads (overrides the config)");
  sweep->add_option("--out", o.out)->required();
  sweep->callback([&] { handler = cmd_sweep; });

  auto* report = app.add_subcommand("report", "Aggregate a sweep directory");
  report->add_option("--in", o.in)->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", o.out, "Summary CSV; a gnuplot table goes next to it as .dat")
      ->required();
  report->callback([&] { handler = cmd_report; });

  auto* variance = app.add_subcommand("variance", "Multi-Crop vs pair per-sample loss variance");
  variance->add_option("--m", o.run.m)->required();
  variance->add_option("--batches", o.batches)->capture_default_str();
  add_run_options(variance, o);
  variance->callback([&] { handler = [](const Options& x) { return cmd_variance(x); }; });

  auto* validity = app.add_subcommand("validity", "M-view gap vs mean two-view gap");
  validity->add_option("--method", o.method)->required();
  validity->add_option("--m", o.run.m)->required();
  validity->add_option("--batches", o.run.eval_batches)->capture_default_str();
  add_run_options(validity, o);
  validity->callback([&] { handler = [](const Options& x) { return cmd_validity(x); }; });

  auto* check = app.add_subcommand("check", "Run a property suite");
  check->add_option("--suite", o.suite)->required()->check(CLI::IsMember(check_suite_names()));
  check->callback([&] { handler = cmd_check; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return handler(o);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
}
