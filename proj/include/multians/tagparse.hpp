#ifndef MULTIANS_TAGPARSE_HPP_
#define MULTIANS_TAGPARSE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace multians {

// Whether the dataset assigns one gold answer (N = 1) or several (N > 1).
// Decides the confidence-sum rule at format time and the set-confidence rule
// at evaluation time.
enum class GoldRegime { kSingleGold, kMultiGold };

std::string_view to_string(GoldRegime regime);
std::optional<GoldRegime> parse_gold_regime(std::string_view text);

namespace tagparse {

enum class AnswerMode { kSingle, kMulti };

std::string_view to_string(AnswerMode mode);
std::optional<AnswerMode> parse_answer_mode(std::string_view text);

struct RawGeneration {
  std::string text;
  std::uint64_t token_count = 0;
};

struct TagSchema {
  AnswerMode answer_mode = AnswerMode::kSingle;
  bool calibrated = false;
  int k = 1;
  GoldRegime n_regime = GoldRegime::kSingleGold;

  static TagSchema Single(bool calibrated, GoldRegime regime = GoldRegime::kSingleGold);
  static TagSchema Multi(int k, bool calibrated, GoldRegime regime);

  // Throws std::invalid_argument when single mode is paired with k != 1 or k < 1.
  void Check() const;
};

enum class ViolationCode : std::uint8_t {
  kMissingTag,
  kTagOrder,
  kWrongCount,
  kConfNotNumeric,
  kConfOutOfRange,
  kConfSumExceedsOne,
  kDuplicateAnswer,
  kTrailingContent,
  kMissingThink,
};

// Stable identifiers used in every report ("MISSING_TAG", ...).
std::string_view to_string(ViolationCode code);
std::optional<ViolationCode> parse_violation_code(std::string_view text);

struct Violation {
  ViolationCode code;
  // 1-based candidate slot the defect refers to, when there is one.
  std::optional<int> slot;
  std::string detail;
};

struct ParseOptions {
  // Rescale confidences in (1, 100] as percentages instead of flagging them.
  bool lenient_confidence = false;
};

struct ParsedOutput {
  std::optional<std::string> think;
  // Document order. Exactly k entries when violations is empty.
  std::vector<std::string> answers;
  // Engaged iff the schema is calibrated. An empty slot marks a confidence
  // that was present but unusable (non-numeric or out of range).
  std::optional<std::vector<std::optional<double>>> confidences;
  std::optional<std::string> analysis;
  std::vector<Violation> violations;
  std::vector<std::string> warnings;

  bool has(ViolationCode code) const;
  // All confidences present and usable, one per answer.
  std::optional<std::vector<double>> usable_confidences() const;
};

// Total: malformed input is described by violations, never thrown. Only an
// inconsistent schema throws.
ParsedOutput parse(std::string_view text, const TagSchema& schema,
                   const ParseOptions& options = {});
inline ParsedOutput parse(const RawGeneration& raw, const TagSchema& schema,
                          const ParseOptions& options = {}) {
  return parse(raw.text, schema, options);
}

// Lowercase, trim, collapse whitespace runs, strip trailing .,;:!?
std::string canonicalize(std::string_view text);

struct FormatVerdict {
  bool ok = true;
  std::vector<ViolationCode> codes;
};

inline constexpr double kConfidenceSumTolerance = 1e-9;

FormatVerdict validate_format(const ParsedOutput& parsed, const TagSchema& schema);

// Renders answers (and confidences, when calibrated) with the prompt's output
// template. parse() on the result recovers the same values.
std::string render(std::span<const std::string> answers,
                   std::span<const double> confidences, const TagSchema& schema,
                   std::string_view think = "reasoning");

}  // namespace tagparse
}  // namespace multians

#endif  // MULTIANS_TAGPARSE_HPP_
