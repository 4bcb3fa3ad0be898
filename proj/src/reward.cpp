#include "multians/reward.hpp"

#include <stdexcept>
#include <vector>

namespace multians::reward {
namespace {

void check_confidence(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("confidence outside [0,1]");
}

}  // namespace

std::string_view to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::kRlvrSingle: return "rlvr_single";
    case RewardMode::kRlvrMulti: return "rlvr_multi";
    case RewardMode::kRlcrSingle: return "rlcr_single";
    case RewardMode::kRlcrMulti: return "rlcr_multi";
  }
  return "unknown";
}

std::optional<RewardMode> parse_reward_mode(std::string_view text) {
  for (RewardMode m : {RewardMode::kRlvrSingle, RewardMode::kRlvrMulti, RewardMode::kRlcrSingle,
                       RewardMode::kRlcrMulti}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

bool is_calibrated(RewardMode mode) {
  return mode == RewardMode::kRlcrSingle || mode == RewardMode::kRlcrMulti;
}

bool is_multi(RewardMode mode) {
  return mode == RewardMode::kRlvrMulti || mode == RewardMode::kRlcrMulti;
}

RewardMode mode_for(const tagparse::TagSchema& schema) {
  const bool multi = schema.answer_mode == tagparse::AnswerMode::kMulti;
  if (schema.calibrated) return multi ? RewardMode::kRlcrMulti : RewardMode::kRlcrSingle;
  return multi ? RewardMode::kRlvrMulti : RewardMode::kRlvrSingle;
}

int r_correct(std::string_view answer, const verify::GoldSpec& gold) {
  return verify::exact_match(answer, gold) ? 1 : 0;
}

double r_rlcr_single(std::string_view answer, double q, const verify::GoldSpec& gold) {
  check_confidence(q);
  const double c = r_correct(answer, gold);
  return c - (q - c) * (q - c);
}

int r_rlvr_multi(std::span<const std::string> answers, const verify::GoldSpec& gold) {
  return static_cast<int>(verify::verify_set(answers, gold).count());
}

double multi_brier(std::span<const double> confidences,
                   const verify::CorrectnessVector& correct) {
  if (confidences.size() != correct.size()) {
    throw std::invalid_argument("multi_brier: confidence and answer counts differ");
  }
  if (confidences.empty()) throw std::invalid_argument("multi_brier: empty answer set");
  double sum = 0.0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    check_confidence(confidences[i]);
    const double gap = confidences[i] - (correct.bits[i] ? 1.0 : 0.0);
    sum += gap * gap;
  }
  return sum / static_cast<double>(confidences.size());
}

double multi_brier(std::span<const std::string> answers, std::span<const double> confidences,
                   const verify::GoldSpec& gold) {
  if (answers.size() != confidences.size()) {
    throw std::invalid_argument("multi_brier: confidence and answer counts differ");
  }
  return multi_brier(confidences, verify::verify_set(answers, gold));
}

double r_rlcr_multi(std::span<const std::string> answers, std::span<const double> confidences,
                    const verify::GoldSpec& gold) {
  const verify::CorrectnessVector correct = verify::verify_set(answers, gold);
  return static_cast<double>(correct.count()) - multi_brier(confidences, correct);
}

RewardBreakdown breakdown_from_bits(const verify::CorrectnessVector& correct,
                                    std::span<const double> confidences, RewardMode mode,
                                    double format_bonus) {
  RewardBreakdown out;
  out.correctness_sum = static_cast<double>(correct.count());
  if (is_calibrated(mode)) out.brier_penalty = multi_brier(confidences, correct);
  out.format_multiplier = 1;
  out.total = out.correctness_sum - out.brier_penalty + format_bonus;
  return out;
}

RewardBreakdown apply_format_gate(RewardBreakdown breakdown,
                                  const tagparse::FormatVerdict& verdict) {
  if (verdict.ok) {
    breakdown.format_multiplier = 1;
    return breakdown;
  }
  breakdown.format_multiplier = 0;
  breakdown.total = 0.0;
  return breakdown;
}

ScoredGeneration score(const tagparse::ParsedOutput& parsed, const tagparse::TagSchema& schema,
                       const verify::GoldSpec& gold, const ScoreOptions& options) {
  ScoredGeneration out;
  out.verdict = tagparse::validate_format(parsed, schema);
  out.correctness = verify::verify_set(parsed.answers, gold, options.matcher);
  const RewardMode mode = mode_for(schema);

  RewardBreakdown ungated;
  ungated.correctness_sum = static_cast<double>(out.correctness.count());
  if (is_calibrated(mode) && !parsed.answers.empty()) {
    std::vector<double> q(parsed.answers.size(), 0.0);
    if (parsed.confidences) {
      for (std::size_t i = 0; i < q.size() && i < parsed.confidences->size(); ++i) {
        q[i] = (*parsed.confidences)[i].value_or(0.0);
      }
    }
    ungated.brier_penalty = multi_brier(q, out.correctness);
  }
  ungated.total = ungated.correctness_sum - ungated.brier_penalty;
  if (out.verdict.ok) ungated.total += options.format_bonus;
  out.reward = apply_format_gate(ungated, out.verdict);
  return out;
}

}  // namespace multians::reward
