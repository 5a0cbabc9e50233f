#include "polyview/record_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace polyview {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad number in record: '" + s + "'");
  }
  if (used != s.size()) throw std::invalid_argument("bad number in record: '" + s + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad integer in record: '" + s + "'");
  }
  return v;
}

std::optional<double> parse_optional(const std::string& s) {
  if (s == kMissingToken) return std::nullopt;
  return parse_double(s);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string(kMissingToken);
}

json train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay},
          {"beta1", t.beta1},                 {"beta2", t.beta2},
          {"epsilon", t.epsilon},             {"epochs", t.epochs}};
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown key in " + where + ": " + key);
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad value for ") + key + ": " + e.what());
  }
}

void write_summary_fields(std::ostream& out, const SummaryRow& r, char sep) {
  out << to_string(r.method) << sep << r.m << sep << r.runs << sep << format_double(r.true_mi)
      << sep << format_double(r.bound.mean) << sep << format_double(r.bound.std) << sep
      << format_double(r.gap.mean) << sep << format_double(r.gap.std) << sep;
  if (r.relative_mi.n > 0) {
    out << format_double(r.relative_mi.mean) << sep << format_double(r.relative_mi.std);
  } else {
    out << kMissingToken << sep << kMissingToken;
  }
  out << sep << (r.single_run ? "single_run" : "ok");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return std::string(kMissingToken);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_record_csv(const RunRecord& record, std::ostream& out) {
  out << kRecordCsvHeader << '\n';
  for (const RunRow& r : record.rows) {
    out << to_string(r.method) << ',' << r.m << ',' << r.k << ',' << r.seed << ',' << r.epoch << ','
        << format_optional(r.train_loss) << ',' << format_double(r.eval_loss) << ','
        << format_double(r.bound) << ',' << format_double(r.true_mi) << ','
        << format_double(r.gap) << ',' << format_optional(r.relative_mi) << '\n';
  }
}

std::string record_csv(const RunRecord& record) {
  std::ostringstream out;
  write_record_csv(record, out);
  return out.str();
}

void save_record_csv(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_record_csv(record, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<RunRow> read_record_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty record file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordCsvHeader) throw std::invalid_argument("unexpected record header: " + line);
  std::vector<RunRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    if (f.size() != 11) throw std::invalid_argument("record row has wrong field count: " + line);
    RunRow r{parse_method(f[0]),
             parse_int<int>(f[1]),
             parse_int<int>(f[2]),
             parse_int<std::uint64_t>(f[3]),
             parse_int<int>(f[4]),
             parse_optional(f[5]),
             parse_double(f[6]),
             std::numeric_limits<double>::quiet_NaN(),
             parse_double(f[7]),
             parse_double(f[8]),
             parse_double(f[9]),
             parse_optional(f[10])};
    rows.push_back(r);
  }
  return rows;
}

std::vector<RunRow> load_record_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_record_csv(in);
}

SweepSpec parse_sweep_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("sweep config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("sweep config must be a JSON object");
  reject_unknown(doc,
                 {"methods", "m_values", "seeds", "k", "sigma0_sq", "sigma_sq", "tau", "train",
                  "eval_batches", "record_stride", "fixed_dataset", "jobs"},
                 "sweep config");

  SweepSpec s;
  std::vector<std::string> names;
  read_field(doc, "methods", names);
  for (const auto& n : names) s.methods.push_back(parse_method(n));
  read_field(doc, "m_values", s.m_values);
  read_field(doc, "seeds", s.seeds);
  read_field(doc, "k", s.k);
  read_field(doc, "sigma0_sq", s.sigma0_sq);
  read_field(doc, "sigma_sq", s.sigma_sq);
  read_field(doc, "tau", s.tau);
  read_field(doc, "eval_batches", s.eval_batches);
  read_field(doc, "record_stride", s.record_stride);
  read_field(doc, "fixed_dataset", s.fixed_dataset);
  read_field(doc, "jobs", s.jobs);
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    if (!t.is_object()) throw std::invalid_argument("train must be a JSON object");
    reject_unknown(t, {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon", "epochs"},
                   "train");
    read_field(t, "learning_rate", s.train.learning_rate);
    read_field(t, "weight_decay", s.train.weight_decay);
    read_field(t, "beta1", s.train.beta1);
    read_field(t, "beta2", s.train.beta2);
    read_field(t, "epsilon", s.train.epsilon);
    read_field(t, "epochs", s.train.epochs);
  }
  s.validate();
  return s;
}

SweepSpec load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sweep_config(buf.str());
}

std::string sweep_config_json(const SweepSpec& s) {
  std::vector<std::string> names;
  for (Method m : s.methods) names.emplace_back(to_string(m));
  json doc = {{"methods", names},
              {"m_values", s.m_values},
              {"seeds", s.seeds},
              {"k", s.k},
              {"sigma0_sq", s.sigma0_sq},
              {"sigma_sq", s.sigma_sq},
              {"tau", s.tau},
              {"train", train_json(s.train)},
              {"eval_batches", s.eval_batches},
              {"record_stride", s.record_stride},
              {"fixed_dataset", s.fixed_dataset},
              {"jobs", s.jobs}};
  return doc.dump();
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << kSummaryCsvHeader << '\n';
  for (const SummaryRow& r : rows) {
    write_summary_fields(out, r, ',');
    out << '\n';
  }
}

void write_summary_table(const std::vector<SummaryRow>& rows, std::ostream& out) {
  std::string header(kSummaryCsvHeader);
  for (char& c : header) {
    if (c == ',') c = ' ';
  }
  bool first = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == 0 || rows[i].method != rows[i - 1].method) {
      if (!first) out << "\n\n";
      out << "# " << header << '\n';
      first = false;
    }
    write_summary_fields(out, rows[i], ' ');
    out << '\n';
  }
}

}  // namespace polyview
