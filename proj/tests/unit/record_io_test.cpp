#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "polyview/harness.hpp"
#include "polyview/record_io.hpp"

namespace polyview {
namespace {

RunRecord SmallRecord(int epochs) {
  RunSpec s;
  s.method = Method::ArithmeticPVC;
  s.m = 3;
  s.k = 16;
  s.train.epochs = epochs;
  s.eval_batches = 2;
  s.seed = 11;
  return run_training(s);
}

TEST(FormatDouble, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::nextafter(1.0, 2.0)}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "NA");
}

TEST(RecordCsv, HeaderIsExact) {
  const std::string text = record_csv(SmallRecord(0));
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "method,m,k,seed,epoch,train_loss,eval_loss,bound,true_mi,gap,relative_mi");
}

TEST(RecordCsv, UntrainedRowMarksTrainLossMissing) {
  const std::string text = record_csv(SmallRecord(0));
  std::istringstream in(text);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(row.rfind("arithmetic,3,16,11,0,NA,", 0), 0u) << row;
}

TEST(RecordCsv, RoundTripsEveryField) {
  const RunRecord r = SmallRecord(3);
  std::istringstream in(record_csv(r));
  const std::vector<RunRow> back = read_record_csv(in);
  ASSERT_EQ(back.size(), r.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const RunRow& a = r.rows[i];
    const RunRow& b = back[i];
    EXPECT_EQ(a.method, b.method);
    EXPECT_EQ(a.m, b.m);
    EXPECT_EQ(a.k, b.k);
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(a.epoch, b.epoch);
    EXPECT_EQ(a.train_loss, b.train_loss);
    EXPECT_EQ(a.eval_loss, b.eval_loss);
    EXPECT_EQ(a.bound, b.bound);
    EXPECT_EQ(a.true_mi, b.true_mi);
    EXPECT_EQ(a.gap, b.gap);
    EXPECT_EQ(a.relative_mi, b.relative_mi);
    EXPECT_TRUE(std::isnan(b.eval_stderr));
  }
}

TEST(RecordCsv, RejectsWrongHeaderAndShortRows) {
  std::istringstream bad_header("method,m\n");
  EXPECT_THROW(read_record_csv(bad_header), std::invalid_argument);
  std::istringstream short_row(std::string(kRecordCsvHeader) + "\ngeometric,2,4\n");
  EXPECT_THROW(read_record_csv(short_row), std::invalid_argument);
}

TEST(SweepConfig, ParsesEveryKey) {
  const SweepSpec s = parse_sweep_config(R"({
    "methods": ["geometric", "suffstats"], "m_values": [2, 4], "seeds": [1, 2, 3],
    "k": 64, "sigma0_sq": 2.0, "sigma_sq": 0.5, "tau": 0.25,
    "train": {"learning_rate": 1e-3, "weight_decay": 0.0, "beta1": 0.8, "beta2": 0.99,
              "epsilon": 1e-7, "epochs": 7},
    "eval_batches": 3, "record_stride": 2, "fixed_dataset": true, "jobs": 2})");
  EXPECT_EQ(s.methods, (std::vector<Method>{Method::GeometricPVC, Method::SuffStats}));
  EXPECT_EQ(s.m_values, (std::vector<int>{2, 4}));
  EXPECT_EQ(s.seeds.size(), 3u);
  EXPECT_EQ(s.k, 64);
  EXPECT_EQ(s.sigma0_sq, 2.0);
  EXPECT_EQ(s.sigma_sq, 0.5);
  EXPECT_EQ(s.tau, 0.25);
  EXPECT_EQ(s.train.learning_rate, 1e-3);
  EXPECT_EQ(s.train.weight_decay, 0.0);
  EXPECT_EQ(s.train.beta1, 0.8);
  EXPECT_EQ(s.train.beta2, 0.99);
  EXPECT_EQ(s.train.epsilon, 1e-7);
  EXPECT_EQ(s.train.epochs, 7);
  EXPECT_EQ(s.eval_batches, 3);
  EXPECT_EQ(s.record_stride, 2);
  EXPECT_TRUE(s.fixed_dataset);
  EXPECT_EQ(s.jobs, 2);
}

TEST(SweepConfig, AbsentKeysKeepDefaults) {
  const SweepSpec s =
      parse_sweep_config(R"({"methods": ["multicrop"], "m_values": [2], "seeds": [0]})");
  const SweepSpec d;
  EXPECT_EQ(s.k, d.k);
  EXPECT_EQ(s.tau, d.tau);
  EXPECT_EQ(s.train.learning_rate, d.train.learning_rate);
  EXPECT_EQ(s.train.epochs, d.train.epochs);
}

TEST(SweepConfig, RejectsUnknownKeysAndBadValues) {
  const std::string base = R"("methods": ["geometric"], "m_values": [2], "seeds": [0])";
  EXPECT_THROW(parse_sweep_config("{" + base + R"(, "batch": 8})"), std::invalid_argument);
  EXPECT_THROW(parse_sweep_config("{" + base + R"(, "train": {"lr": 1}})"), std::invalid_argument);
  EXPECT_THROW(parse_sweep_config(R"({"methods": ["simclr"], "m_values": [2], "seeds": [0]})"),
               std::invalid_argument);
  EXPECT_THROW(parse_sweep_config("{" + base + R"(, "k": "many"})"), std::invalid_argument);
  EXPECT_THROW(parse_sweep_config("{" + base + R"(, "k": 1})"), std::invalid_argument);
  EXPECT_THROW(parse_sweep_config("not json"), std::invalid_argument);
}

TEST(SweepConfig, JsonRoundTrip) {
  SweepSpec s;
  s.methods = {Method::MultiCrop, Method::ArithmeticPVC};
  s.m_values = {2, 8};
  s.seeds = {4, 5};
  s.k = 128;
  s.tau = 0.1;
  s.train.learning_rate = 3e-4;
  s.record_stride = 5;
  const SweepSpec back = parse_sweep_config(sweep_config_json(s));
  EXPECT_EQ(sweep_config_json(back), sweep_config_json(s));
  EXPECT_EQ(back.methods, s.methods);
  EXPECT_EQ(back.train.learning_rate, s.train.learning_rate);
}

TEST(Summary, HeaderAndFlags) {
  SummaryRow row{Method::SuffStats, 4, 1, 0.67, {0.5, 0.0, 1}, {0.17, 0.0, 1}, {0.0, 0.0, 0}, true};
  std::ostringstream out;
  write_summary_csv({row}, out);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(header, kSummaryCsvHeader);
  EXPECT_NE(line.find("suffstats,4,1,"), std::string::npos);
  EXPECT_NE(line.find("NA,NA,single_run"), std::string::npos) << line;
}

TEST(Summary, TableHasOneBlockPerMethod) {
  SummaryRow a{Method::GeometricPVC, 2, 2, 0.5, {0.4, 0.01, 2}, {0.1, 0.01, 2}, {1.2, 0.1, 2}, false};
  SummaryRow b = a;
  b.m = 4;
  SummaryRow c = a;
  c.method = Method::MultiCrop;
  std::ostringstream out;
  write_summary_table({a, b, c}, out);
  const std::string text = out.str();
  EXPECT_EQ(text[0], '#');
  const auto split = text.find("\n\n\n# ");
  ASSERT_NE(split, std::string::npos);
  EXPECT_EQ(text.find("\n\n\n# ", split + 1), std::string::npos);
}

}  // namespace
}  // namespace polyview
