#ifndef MULTIANS_HARNESS_HPP_
#define MULTIANS_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "multians/calib.hpp"
#include "multians/csv.hpp"
#include "multians/reward.hpp"
#include "multians/tagparse.hpp"

namespace multians::harness {

// Bad or unreadable input data (CLI exit code 1).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or flags (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Generation {
  std::string text;
  std::uint64_t token_count = 0;
};

// One line of a generation dump.
struct DumpRecord {
  std::string id;
  std::string method;
  tagparse::AnswerMode mode = tagparse::AnswerMode::kMulti;
  bool calibrated = false;
  int k = 1;
  std::vector<Generation> generations;
  std::vector<std::string> gold_answers;
  GoldRegime n_regime = GoldRegime::kMultiGold;
  // Correctness predicate; only "exact" (canonicalized exact match) ships.
  std::string matcher = "exact";

  // Schema each generation is parsed with: multi(k) or single.
  tagparse::TagSchema generation_schema() const;
  calib::SetSource source() const;
};

struct LineError {
  std::size_t line;
  std::string message;
};

struct IngestResult {
  std::vector<DumpRecord> records;
  std::vector<LineError> errors;
};

// Throws InputError (with the line number) on schema or invariant violations.
DumpRecord parse_record_line(std::string_view line);

IngestResult ingest(std::istream& in);
// Throws InputError when the file is unreadable or holds no valid record.
IngestResult ingest(const std::filesystem::path& path);

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t bins = 10;
  std::size_t ngram_n = 4;
  bool lenient_confidence = false;
  std::filesystem::path out_dir = ".";

  void Check() const;  // throws ConfigError
};

// ---- score ----------------------------------------------------------------

struct ScoreRow {
  std::string id;
  std::string method;
  std::size_t generation = 0;
  reward::RewardMode mode = reward::RewardMode::kRlvrSingle;
  int k = 1;
  reward::RewardBreakdown reward;
  std::vector<tagparse::ViolationCode> codes;
  std::size_t warnings = 0;
};

struct ScoreSummaryRow {
  std::string method;
  std::size_t n_rows = 0;
  double mean_correctness_sum = 0.0;
  double mean_brier_penalty = 0.0;
  double mean_format_multiplier = 0.0;
  double mean_total = 0.0;
};

struct ScoreReport {
  std::vector<ScoreRow> rows;
  std::vector<ScoreSummaryRow> summary;

  csv::Table rows_table() const;
  csv::Table summary_table() const;
  void write(const std::filesystem::path& out_dir) const;  // scores.csv, score_summary.csv
};

ScoreReport cmd_score(const std::vector<DumpRecord>& records, const RunConfig& config);

// ---- evaluate -------------------------------------------------------------

// Generations with any of these defects cannot be scored: their slots count
// as wrong with confidence 0. MISSING_THINK and TRAILING_CONTENT do not block.
bool blocks_scoring(tagparse::ViolationCode code);

calib::SetRecord build_set_record(const DumpRecord& record, const RunConfig& config);

struct EvaluateGroup {
  std::string method;
  calib::MetricsReport report;
  std::vector<calib::SetRecord> records;
};

struct EvaluateReport {
  std::vector<EvaluateGroup> groups;  // sorted by (method, source)
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  std::size_t bins = 10;

  csv::Table metrics_table() const;
  csv::Table records_table() const;
  csv::Table points_table() const;
  csv::Table reliability_table() const;
  csv::Table efficiency_table() const;
  // metrics.csv, records.csv, points.csv, reliability.csv, efficiency.csv
  void write(const std::filesystem::path& out_dir) const;
};

EvaluateReport cmd_evaluate(const std::vector<DumpRecord>& records, const RunConfig& config);

// ---- overlap --------------------------------------------------------------

struct OverlapRow {
  std::string method;
  std::string id;
  std::size_t n_generations = 0;
  double overlap = 0.0;
};

struct OverlapReport {
  std::vector<OverlapRow> rows;
  std::map<std::string, std::pair<std::size_t, double>> per_method;  // (groups, mean)
  std::size_t n = 4;

  void write(const std::filesystem::path& out_dir) const;  // overlap.csv, overlap_summary.csv
};

// Throws InputError when no single-mode record has >= 2 generations.
OverlapReport cmd_overlap(const std::vector<DumpRecord>& records, const RunConfig& config);

// ---- simulate -------------------------------------------------------------

struct SimulateResult {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> summary;  // human-readable lines
};

// Reads the experiment config (JSON) and runs the named experiments. Throws
// ConfigError on invalid configs; training aborts surface as runtime_error.
SimulateResult cmd_simulate(const std::filesystem::path& config_path, const RunConfig& config);
SimulateResult cmd_simulate_text(std::string_view config_json, const RunConfig& config);

}  // namespace multians::harness

#endif  // MULTIANS_HARNESS_HPP_
