#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "polyview/harness.hpp"

namespace polyview {

inline constexpr std::string_view kRecordCsvHeader =
    "method,m,k,seed,epoch,train_loss,eval_loss,bound,true_mi,gap,relative_mi";
inline constexpr std::string_view kMissingToken = "NA";

// 17 significant digits; round-trips every finite double.
std::string format_double(double v);

void write_record_csv(const RunRecord& record, std::ostream& out);
std::string record_csv(const RunRecord& record);
void save_record_csv(const RunRecord& record, const std::filesystem::path& path);

// Parses a record file. eval_stderr is not serialized and comes back as NaN.
std::vector<RunRow> read_record_csv(std::istream& in);
std::vector<RunRow> load_record_csv(const std::filesystem::path& path);

// Sweep configuration as JSON, mirroring SweepSpec field for field. Unknown
// keys are rejected; absent keys keep their defaults.
SweepSpec parse_sweep_config(std::string_view json_text);
SweepSpec load_sweep_config(const std::filesystem::path& path);
std::string sweep_config_json(const SweepSpec& sweep);

inline constexpr std::string_view kSummaryCsvHeader =
    "method,m,runs,true_mi,bound_mean,bound_std,gap_mean,gap_std,relative_mi_mean,"
    "relative_mi_std,flag";

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);
// Whitespace-separated columns with a '#' header line, one block per method
// separated by blank lines (gnuplot `index` friendly).
void write_summary_table(const std::vector<SummaryRow>& rows, std::ostream& out);

}  // namespace polyview
