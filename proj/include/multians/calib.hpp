#ifndef MULTIANS_CALIB_HPP_
#define MULTIANS_CALIB_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "multians/tagparse.hpp"
#include "multians/verify.hpp"

namespace multians::calib {

// How an evaluation set of K answers was produced.
enum class SetSource { kMultiOneGeneration, kSingleKSamples };

std::string_view to_string(SetSource source);
std::optional<SetSource> parse_set_source(std::string_view text);

enum class SelectionRule { kFirst, kUniformRandom };

struct SetRecord {
  std::string id;
  std::vector<std::string> answers;
  std::optional<std::vector<double>> confidences;
  verify::CorrectnessVector correctness;
  std::uint64_t token_total = 0;
  SetSource source = SetSource::kMultiOneGeneration;
  GoldRegime regime = GoldRegime::kMultiGold;
  // Slots whose generation could not be scored; they are already recorded as
  // wrong with confidence 0 and are excluded from uniqueness.
  std::vector<bool> invalid;

  std::size_t k() const { return answers.size(); }
  bool any_invalid() const;
  void Check() const;
};

struct CalibrationPoint {
  double confidence;
  bool correct;
};

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_conf;
  std::optional<double> mean_acc;
};

struct CalibrationMetrics {
  double brier_top1 = 0.0;
  double brier_pooled = 0.0;
  double ece_top1 = 0.0;
  double ece_pooled = 0.0;
  double set_ece = 0.0;
};

struct MetricsReport {
  SetSource source = SetSource::kMultiOneGeneration;
  std::size_t n_records = 0;
  std::size_t n_invalid = 0;
  double coverage_mean = 0.0;
  double correct_count = 0.0;
  double pass1 = 0.0;
  double pass_at_k = 0.0;
  double uniqueness_mean = 0.0;
  double avg_token_total = 0.0;
  // Absent unless every record carries confidences.
  std::optional<CalibrationMetrics> calibration;
};

// Raised when pooled or set-level calibration is compared across sources.
class ComparabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Coverage {
  double coverage_mean;
  double correct_count;
};

// All operations below throw std::invalid_argument on empty input.
Coverage coverage(std::span<const SetRecord> records);

// Index the uniform-random rule picks for one record; a pure function of
// (seed, id, k) so reports are bitwise reproducible.
std::size_t random_selection_index(std::uint64_t seed, std::string_view id, std::size_t k);
std::size_t selection_index(const SetRecord& record, SelectionRule rule, std::uint64_t seed);
SelectionRule default_rule(SetSource source);

double pass1(std::span<const SetRecord> records, SelectionRule rule, std::uint64_t seed);
double pass_at_k(std::span<const SetRecord> records);

double brier(std::span<const CalibrationPoint> points);

// Equal-width bins over [0,1]; left-closed, right-open, last bin closed.
std::size_t bin_index(double confidence, std::size_t m);
double ece(std::span<const CalibrationPoint> points, std::size_t m = 10);
std::vector<CalibrationBin> reliability_curve(std::span<const CalibrationPoint> points,
                                              std::size_t m = 10);

double set_confidence(const SetRecord& record, GoldRegime regime);
double set_confidence(std::span<const double> confidences, GoldRegime regime);
double set_ece(std::span<const SetRecord> records, GoldRegime regime, std::size_t m = 10);
// Same, with each record's own regime.
double set_ece(std::span<const SetRecord> records, std::size_t m = 10);

std::vector<CalibrationPoint> pooled_points(std::span<const SetRecord> records);
std::vector<CalibrationPoint> top1_points(std::span<const SetRecord> records, SelectionRule rule,
                                          std::uint64_t seed);
std::vector<CalibrationPoint> set_points(std::span<const SetRecord> records);

// Mean pairwise Jaccard similarity of whitespace-token n-gram sets, lowercased.
double ngram_overlap(std::span<const std::string> texts, std::size_t n);

double token_efficiency(std::span<const SetRecord> multi_records,
                        std::span<const SetRecord> single_records);

struct SummarizeOptions {
  std::uint64_t seed = 0;
  std::size_t bins = 10;
};

// Full report for records that share one source; pass@1 uses the source's rule.
MetricsReport summarize(std::span<const SetRecord> records, const SummarizeOptions& options = {});

enum class CalibrationMetric { kBrierTop1, kEceTop1, kBrierPooled, kEcePooled, kSetEce };

// Returns (a, b) values of the metric. Throws ComparabilityError for pooled or
// set-level metrics when the reports come from different set sources.
std::pair<double, double> compare_calibration(const MetricsReport& a, const MetricsReport& b,
                                              CalibrationMetric metric);

}  // namespace multians::calib

#endif  // MULTIANS_CALIB_HPP_
