#include "multians/calib.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "multians/textutil.hpp"

namespace multians::calib {
namespace {

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::set<std::string> ngram_set(std::string_view text, std::size_t n) {
  std::vector<std::string> tokens;
  for (std::string_view tok : split_whitespace(text)) {
    std::string lowered(tok);
    for (char& c : lowered) c = ascii_lower(c);
    tokens.push_back(std::move(lowered));
  }
  std::set<std::string> grams;
  if (tokens.size() < n) return grams;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string gram = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      gram.push_back('\x1f');
      gram += tokens[i + j];
    }
    grams.insert(std::move(gram));
  }
  return grams;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const std::string& g : a) common += b.count(g);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

bool is_top1_metric(CalibrationMetric metric) {
  return metric == CalibrationMetric::kBrierTop1 || metric == CalibrationMetric::kEceTop1;
}

double pick(const CalibrationMetrics& m, CalibrationMetric metric) {
  switch (metric) {
    case CalibrationMetric::kBrierTop1: return m.brier_top1;
    case CalibrationMetric::kEceTop1: return m.ece_top1;
    case CalibrationMetric::kBrierPooled: return m.brier_pooled;
    case CalibrationMetric::kEcePooled: return m.ece_pooled;
    case CalibrationMetric::kSetEce: return m.set_ece;
  }
  return 0.0;
}

}  // namespace

std::string_view to_string(SetSource source) {
  return source == SetSource::kMultiOneGeneration ? "multi_one_generation" : "single_k_samples";
}

std::optional<SetSource> parse_set_source(std::string_view text) {
  if (text == "multi_one_generation") return SetSource::kMultiOneGeneration;
  if (text == "single_k_samples") return SetSource::kSingleKSamples;
  return std::nullopt;
}

bool SetRecord::any_invalid() const {
  return std::find(invalid.begin(), invalid.end(), true) != invalid.end();
}

void SetRecord::Check() const {
  if (answers.empty()) throw std::invalid_argument("SetRecord " + id + ": no answers");
  if (correctness.size() != answers.size()) {
    throw std::invalid_argument("SetRecord " + id + ": correctness length mismatch");
  }
  if (confidences && confidences->size() != answers.size()) {
    throw std::invalid_argument("SetRecord " + id + ": confidence length mismatch");
  }
  if (!invalid.empty() && invalid.size() != answers.size()) {
    throw std::invalid_argument("SetRecord " + id + ": invalid-mask length mismatch");
  }
}

Coverage coverage(std::span<const SetRecord> records) {
  require_nonempty(records.size(), "coverage");
  double normalized = 0.0;
  double raw = 0.0;
  for (const SetRecord& r : records) {
    r.Check();
    const double hits = static_cast<double>(r.correctness.count());
    raw += hits;
    normalized += hits / static_cast<double>(r.k());
  }
  const double n = static_cast<double>(records.size());
  return Coverage{normalized / n, raw / n};
}

std::size_t random_selection_index(std::uint64_t seed, std::string_view id, std::size_t k) {
  if (k == 0) throw std::invalid_argument("random_selection_index: k = 0");
  const std::uint64_t x = splitmix64(splitmix64(seed) ^ fnv1a(id));
  return static_cast<std::size_t>((static_cast<unsigned __int128>(x) * k) >> 64);
}

SelectionRule default_rule(SetSource source) {
  return source == SetSource::kMultiOneGeneration ? SelectionRule::kFirst
                                                  : SelectionRule::kUniformRandom;
}

std::size_t selection_index(const SetRecord& record, SelectionRule rule, std::uint64_t seed) {
  if (rule == SelectionRule::kFirst) return 0;
  return random_selection_index(seed, record.id, record.k());
}

double pass1(std::span<const SetRecord> records, SelectionRule rule, std::uint64_t seed) {
  require_nonempty(records.size(), "pass1");
  std::size_t hits = 0;
  for (const SetRecord& r : records) {
    r.Check();
    if (r.correctness.bits[selection_index(r, rule, seed)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double pass_at_k(std::span<const SetRecord> records) {
  require_nonempty(records.size(), "pass_at_k");
  std::size_t hits = 0;
  for (const SetRecord& r : records) hits += r.correctness.any() ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double brier(std::span<const CalibrationPoint> points) {
  require_nonempty(points.size(), "brier");
  double sum = 0.0;
  for (const CalibrationPoint& p : points) {
    const double gap = p.confidence - (p.correct ? 1.0 : 0.0);
    sum += gap * gap;
  }
  return sum / static_cast<double>(points.size());
}

std::size_t bin_index(double confidence, std::size_t m) {
  if (m == 0) throw std::invalid_argument("bin count must be >= 1");
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw std::invalid_argument("confidence outside [0,1]");
  }
  const auto idx = static_cast<std::size_t>(confidence * static_cast<double>(m));
  return std::min(idx, m - 1);
}

std::vector<CalibrationBin> reliability_curve(std::span<const CalibrationPoint> points,
                                              std::size_t m) {
  require_nonempty(points.size(), "reliability_curve");
  std::vector<double> conf_sum(m, 0.0);
  std::vector<double> acc_sum(m, 0.0);
  std::vector<std::size_t> counts(m, 0);
  for (const CalibrationPoint& p : points) {
    const std::size_t b = bin_index(p.confidence, m);
    conf_sum[b] += p.confidence;
    acc_sum[b] += p.correct ? 1.0 : 0.0;
    ++counts[b];
  }
  std::vector<CalibrationBin> bins(m);
  for (std::size_t b = 0; b < m; ++b) {
    bins[b].lo = static_cast<double>(b) / static_cast<double>(m);
    bins[b].hi = static_cast<double>(b + 1) / static_cast<double>(m);
    bins[b].count = counts[b];
    if (counts[b] > 0) {
      bins[b].mean_conf = conf_sum[b] / static_cast<double>(counts[b]);
      bins[b].mean_acc = acc_sum[b] / static_cast<double>(counts[b]);
    }
  }
  return bins;
}

double ece(std::span<const CalibrationPoint> points, std::size_t m) {
  const std::vector<CalibrationBin> bins = reliability_curve(points, m);
  const double total = static_cast<double>(points.size());
  double out = 0.0;
  for (const CalibrationBin& b : bins) {
    if (b.count == 0) continue;
    out += static_cast<double>(b.count) / total * std::abs(*b.mean_acc - *b.mean_conf);
  }
  return out;
}

double set_confidence(std::span<const double> confidences, GoldRegime regime) {
  require_nonempty(confidences.size(), "set_confidence");
  if (regime == GoldRegime::kSingleGold) {
    double sum = 0.0;
    for (double q : confidences) sum += q;
    return std::min(1.0, sum);
  }
  double miss = 1.0;
  for (double q : confidences) miss *= 1.0 - q;
  return 1.0 - miss;
}

double set_confidence(const SetRecord& record, GoldRegime regime) {
  if (!record.confidences) {
    throw std::invalid_argument("set_confidence: record " + record.id + " has no confidences");
  }
  return set_confidence(*record.confidences, regime);
}

std::vector<CalibrationPoint> set_points(std::span<const SetRecord> records) {
  std::vector<CalibrationPoint> points;
  points.reserve(records.size());
  for (const SetRecord& r : records) {
    points.push_back({set_confidence(r, r.regime), r.correctness.any()});
  }
  return points;
}

double set_ece(std::span<const SetRecord> records, GoldRegime regime, std::size_t m) {
  require_nonempty(records.size(), "set_ece");
  std::vector<CalibrationPoint> points;
  points.reserve(records.size());
  for (const SetRecord& r : records) {
    points.push_back({set_confidence(r, regime), r.correctness.any()});
  }
  return ece(points, m);
}

double set_ece(std::span<const SetRecord> records, std::size_t m) {
  require_nonempty(records.size(), "set_ece");
  return ece(set_points(records), m);
}

std::vector<CalibrationPoint> pooled_points(std::span<const SetRecord> records) {
  std::vector<CalibrationPoint> points;
  for (const SetRecord& r : records) {
    r.Check();
    if (!r.confidences) {
      throw std::invalid_argument("pooled_points: record " + r.id + " has no confidences");
    }
    for (std::size_t i = 0; i < r.k(); ++i) {
      points.push_back({(*r.confidences)[i], static_cast<bool>(r.correctness.bits[i])});
    }
  }
  return points;
}

std::vector<CalibrationPoint> top1_points(std::span<const SetRecord> records, SelectionRule rule,
                                          std::uint64_t seed) {
  std::vector<CalibrationPoint> points;
  points.reserve(records.size());
  for (const SetRecord& r : records) {
    r.Check();
    if (!r.confidences) {
      throw std::invalid_argument("top1_points: record " + r.id + " has no confidences");
    }
    const std::size_t i = selection_index(r, rule, seed);
    points.push_back({(*r.confidences)[i], static_cast<bool>(r.correctness.bits[i])});
  }
  return points;
}

double ngram_overlap(std::span<const std::string> texts, std::size_t n) {
  if (texts.size() < 2) throw std::invalid_argument("ngram_overlap: need at least 2 texts");
  if (n == 0) throw std::invalid_argument("ngram_overlap: n must be >= 1");
  std::vector<std::set<std::string>> sets;
  sets.reserve(texts.size());
  for (const std::string& t : texts) sets.push_back(ngram_set(t, n));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      sum += jaccard(sets[i], sets[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double token_efficiency(std::span<const SetRecord> multi_records,
                        std::span<const SetRecord> single_records) {
  require_nonempty(multi_records.size(), "token_efficiency (multi)");
  require_nonempty(single_records.size(), "token_efficiency (single)");
  auto mean_tokens = [](std::span<const SetRecord> rs) {
    double sum = 0.0;
    for (const SetRecord& r : rs) sum += static_cast<double>(r.token_total);
    return sum / static_cast<double>(rs.size());
  };
  const double denom = mean_tokens(single_records);
  if (denom == 0.0) throw std::invalid_argument("token_efficiency: single-sample mean is zero");
  return mean_tokens(multi_records) / denom;
}

MetricsReport summarize(std::span<const SetRecord> records, const SummarizeOptions& options) {
  require_nonempty(records.size(), "summarize");
  MetricsReport report;
  report.source = records.front().source;
  report.n_records = records.size();
  double unique_sum = 0.0;
  double token_sum = 0.0;
  bool calibrated = true;
  for (const SetRecord& r : records) {
    r.Check();
    if (r.source != report.source) {
      throw std::invalid_argument("summarize: records mix set sources");
    }
    if (r.any_invalid()) ++report.n_invalid;
    std::vector<std::string> valid;
    for (std::size_t i = 0; i < r.k(); ++i) {
      if (r.invalid.empty() || !r.invalid[i]) valid.push_back(r.answers[i]);
    }
    unique_sum += static_cast<double>(verify::unique_count(valid));
    token_sum += static_cast<double>(r.token_total);
    calibrated = calibrated && r.confidences.has_value();
  }
  const double n = static_cast<double>(records.size());
  const Coverage cov = coverage(records);
  const SelectionRule rule = default_rule(report.source);
  report.coverage_mean = cov.coverage_mean;
  report.correct_count = cov.correct_count;
  report.pass1 = pass1(records, rule, options.seed);
  report.pass_at_k = pass_at_k(records);
  report.uniqueness_mean = unique_sum / n;
  report.avg_token_total = token_sum / n;
  if (calibrated) {
    CalibrationMetrics m;
    const auto top1 = top1_points(records, rule, options.seed);
    const auto pooled = pooled_points(records);
    m.brier_top1 = brier(top1);
    m.ece_top1 = ece(top1, options.bins);
    m.brier_pooled = brier(pooled);
    m.ece_pooled = ece(pooled, options.bins);
    m.set_ece = set_ece(records, options.bins);
    report.calibration = m;
  }
  return report;
}

std::pair<double, double> compare_calibration(const MetricsReport& a, const MetricsReport& b,
                                              CalibrationMetric metric) {
  if (!a.calibration || !b.calibration) {
    throw std::invalid_argument("compare_calibration: report lacks calibration metrics");
  }
  if (!is_top1_metric(metric) && a.source != b.source) {
    throw ComparabilityError(
        "pooled and set-level calibration are not comparable across " +
        std::string(to_string(a.source)) + " and " + std::string(to_string(b.source)) +
        " sets; compare top-1 metrics instead");
  }
  return {pick(*a.calibration, metric), pick(*b.calibration, metric)};
}

}  // namespace multians::calib
