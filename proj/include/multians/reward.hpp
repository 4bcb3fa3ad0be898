#ifndef MULTIANS_REWARD_HPP_
#define MULTIANS_REWARD_HPP_

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "multians/tagparse.hpp"
#include "multians/verify.hpp"

namespace multians::reward {

enum class RewardMode { kRlvrSingle, kRlvrMulti, kRlcrSingle, kRlcrMulti };

std::string_view to_string(RewardMode mode);
std::optional<RewardMode> parse_reward_mode(std::string_view text);
bool is_calibrated(RewardMode mode);
bool is_multi(RewardMode mode);
RewardMode mode_for(const tagparse::TagSchema& schema);

struct RewardBreakdown {
  double correctness_sum = 0.0;
  double brier_penalty = 0.0;
  int format_multiplier = 1;
  double total = 0.0;
};

int r_correct(std::string_view answer, const verify::GoldSpec& gold);

// 1[correct] - (q - 1[correct])^2. Throws std::invalid_argument unless q in [0,1].
double r_rlcr_single(std::string_view answer, double q, const verify::GoldSpec& gold);

int r_rlvr_multi(std::span<const std::string> answers, const verify::GoldSpec& gold);

// Mean squared gap between confidences and per-answer correctness.
double multi_brier(std::span<const std::string> answers, std::span<const double> confidences,
                   const verify::GoldSpec& gold);
double multi_brier(std::span<const double> confidences, const verify::CorrectnessVector& correct);

double r_rlcr_multi(std::span<const std::string> answers, std::span<const double> confidences,
                    const verify::GoldSpec& gold);

// Ungated breakdown from a correctness vector. Confidences are ignored when
// the mode is uncalibrated.
RewardBreakdown breakdown_from_bits(const verify::CorrectnessVector& correct,
                                    std::span<const double> confidences, RewardMode mode,
                                    double format_bonus = 0.0);

// Zeroes the total on a failed verdict; the ungated components are kept.
RewardBreakdown apply_format_gate(RewardBreakdown breakdown,
                                  const tagparse::FormatVerdict& verdict);

struct ScoreOptions {
  // Added to the ungated total of well-formed outputs. Zero keeps the gate
  // purely multiplicative.
  double format_bonus = 0.0;
  verify::Matcher matcher = verify::exact_match;
};

struct ScoredGeneration {
  tagparse::FormatVerdict verdict;
  verify::CorrectnessVector correctness;
  RewardBreakdown reward;
};

// parse output -> verdict -> correctness -> gated reward. Unusable confidence
// slots count as 0 in the (gated, diagnostic-only) Brier term.
ScoredGeneration score(const tagparse::ParsedOutput& parsed, const tagparse::TagSchema& schema,
                       const verify::GoldSpec& gold, const ScoreOptions& options = {});

}  // namespace multians::reward

#endif  // MULTIANS_REWARD_HPP_
