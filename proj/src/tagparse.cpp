#include "multians/tagparse.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "multians/textutil.hpp"

namespace multians {

std::string_view to_string(GoldRegime regime) {
  return regime == GoldRegime::kSingleGold ? "single_gold" : "multi_gold";
}

std::optional<GoldRegime> parse_gold_regime(std::string_view text) {
  if (text == "single_gold") return GoldRegime::kSingleGold;
  if (text == "multi_gold") return GoldRegime::kMultiGold;
  return std::nullopt;
}

namespace tagparse {
namespace {

constexpr std::array<std::string_view, 9> kViolationNames = {
    "MISSING_TAG",       "TAG_ORDER",        "WRONG_COUNT",
    "CONF_NOT_NUMERIC",  "CONF_OUT_OF_RANGE", "CONF_SUM_EXCEEDS_ONE",
    "DUPLICATE_ANSWER",  "TRAILING_CONTENT", "MISSING_THINK"};

enum class TagKind { kThink, kAnswer, kConfidence, kAnalysis };

struct Tag {
  TagKind kind;
  std::optional<int> index;
  bool closing;
  std::size_t begin;  // position of '<'
  std::size_t end;    // one past '>'
};

struct Element {
  TagKind kind;
  std::optional<int> index;
  std::size_t open_begin;
  std::size_t content_begin;
  std::size_t content_end;
  std::size_t close_end;
};

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Tag names are case-sensitive. <a{i}>/<conf{i}> are accepted as short forms of
// <answer{i}>/<confidence{i}>; the short forms always carry an index.
std::optional<TagKind> classify(std::string_view name, bool indexed) {
  if (name == "think" && !indexed) return TagKind::kThink;
  if (name == "analysis" && !indexed) return TagKind::kAnalysis;
  if (name == "answer") return TagKind::kAnswer;
  if (name == "confidence") return TagKind::kConfidence;
  if (name == "a" && indexed) return TagKind::kAnswer;
  if (name == "conf" && indexed) return TagKind::kConfidence;
  return std::nullopt;
}

std::vector<Tag> scan_tags(std::string_view text) {
  std::vector<Tag> tags;
  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string_view::npos) {
    std::size_t i = pos + 1;
    bool closing = false;
    if (i < text.size() && text[i] == '/') {
      closing = true;
      ++i;
    }
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t name_begin = i;
    while (i < text.size() && is_alpha(text[i])) ++i;
    const std::string_view name = text.substr(name_begin, i - name_begin);
    const std::size_t digits_begin = i;
    while (i < text.size() && is_digit(text[i])) ++i;
    const std::string_view digits = text.substr(digits_begin, i - digits_begin);
    while (i < text.size() && is_space(text[i])) ++i;
    if (name.empty() || i >= text.size() || text[i] != '>') {
      ++pos;
      continue;
    }
    std::optional<int> index;
    if (!digits.empty()) {
      int value = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
      if (ec != std::errc() || ptr != digits.data() + digits.size()) {
        ++pos;
        continue;
      }
      index = value;
    }
    if (auto kind = classify(name, index.has_value())) {
      tags.push_back(Tag{*kind, index, closing, pos, i + 1});
    }
    pos = i + 1;
  }
  return tags;
}

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string slot_tag_name(TagKind kind, std::optional<int> index) {
  std::string name = kind == TagKind::kAnswer ? "answer" : "confidence";
  if (index) name += std::to_string(*index);
  return "<" + name + ">";
}

struct Expected {
  TagKind kind;
  std::optional<int> index;
};

std::vector<Expected> expected_sequence(const TagSchema& schema) {
  std::vector<Expected> seq;
  if (schema.answer_mode == AnswerMode::kSingle) {
    seq.push_back({TagKind::kAnswer, std::nullopt});
    if (schema.calibrated) seq.push_back({TagKind::kConfidence, std::nullopt});
    return seq;
  }
  for (int i = 1; i <= schema.k; ++i) {
    seq.push_back({TagKind::kAnswer, i});
    if (schema.calibrated) seq.push_back({TagKind::kConfidence, i});
  }
  return seq;
}

// Strictly parses a confidence value; the whole trimmed content must be a number.
std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace

std::string_view to_string(AnswerMode mode) {
  return mode == AnswerMode::kSingle ? "single" : "multi";
}

std::optional<AnswerMode> parse_answer_mode(std::string_view text) {
  if (text == "single") return AnswerMode::kSingle;
  if (text == "multi") return AnswerMode::kMulti;
  return std::nullopt;
}

TagSchema TagSchema::Single(bool calibrated, GoldRegime regime) {
  return TagSchema{AnswerMode::kSingle, calibrated, 1, regime};
}

TagSchema TagSchema::Multi(int k, bool calibrated, GoldRegime regime) {
  TagSchema schema{AnswerMode::kMulti, calibrated, k, regime};
  schema.Check();
  return schema;
}

void TagSchema::Check() const {
  if (k < 1) throw std::invalid_argument("TagSchema: k must be >= 1");
  if (answer_mode == AnswerMode::kSingle && k != 1) {
    throw std::invalid_argument("TagSchema: single answer mode requires k = 1");
  }
}

std::string_view to_string(ViolationCode code) {
  return kViolationNames[static_cast<std::size_t>(code)];
}

std::optional<ViolationCode> parse_violation_code(std::string_view text) {
  for (std::size_t i = 0; i < kViolationNames.size(); ++i) {
    if (kViolationNames[i] == text) return static_cast<ViolationCode>(i);
  }
  return std::nullopt;
}

bool ParsedOutput::has(ViolationCode code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const Violation& v) { return v.code == code; });
}

std::optional<std::vector<double>> ParsedOutput::usable_confidences() const {
  if (!confidences || confidences->size() != answers.size()) return std::nullopt;
  std::vector<double> out;
  out.reserve(confidences->size());
  for (const auto& q : *confidences) {
    if (!q) return std::nullopt;
    out.push_back(*q);
  }
  return out;
}

ParsedOutput parse(std::string_view text, const TagSchema& schema,
                   const ParseOptions& options) {
  schema.Check();
  ParsedOutput out;
  const std::vector<Tag> tags = scan_tags(text);

  auto add = [&out](ViolationCode code, std::optional<int> slot, std::string detail) {
    out.violations.push_back(Violation{code, slot, std::move(detail)});
  };

  // <think>. A completion may start inside the block when the chat template
  // already emitted the opening tag, so a bare </think> closes an implicit one.
  std::size_t body_begin = 0;
  std::size_t last_end = 0;
  bool saw_element = false;
  {
    auto close = std::find_if(tags.begin(), tags.end(), [](const Tag& t) {
      return t.kind == TagKind::kThink && t.closing;
    });
    auto open = std::find_if(tags.begin(), tags.end(), [](const Tag& t) {
      return t.kind == TagKind::kThink && !t.closing;
    });
    if (close != tags.end()) {
      const std::size_t content_begin =
          (open != tags.end() && open->begin < close->begin) ? open->end : 0;
      out.think = std::string(trim_view(text.substr(content_begin, close->begin - content_begin)));
      body_begin = close->end;
      last_end = close->end;
      saw_element = true;
    } else if (open != tags.end()) {
      add(ViolationCode::kMissingThink, std::nullopt, "unterminated <think> block");
      body_begin = open->end;
    } else {
      add(ViolationCode::kMissingThink, std::nullopt, "no <think> block");
    }
  }

  // Pair each opening tag in the body with the next matching closing tag.
  std::vector<Element> elements;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const Tag& open = tags[i];
    if (open.closing || open.kind == TagKind::kThink || open.begin < body_begin) continue;
    auto close = std::find_if(tags.begin() + static_cast<std::ptrdiff_t>(i) + 1, tags.end(),
                              [&open](const Tag& t) {
                                return t.closing && t.kind == open.kind && t.index == open.index;
                              });
    if (close == tags.end()) {
      if (open.kind != TagKind::kAnalysis) {
        add(ViolationCode::kMissingTag, open.index,
            "unterminated " + slot_tag_name(open.kind, open.index));
      }
      continue;
    }
    elements.push_back(Element{open.kind, open.index, open.begin, open.end, close->begin,
                               close->end});
  }

  std::vector<const Element*> answer_elems;
  std::vector<const Element*> conf_elems;
  for (const Element& e : elements) {
    const std::string_view content =
        trim_view(text.substr(e.content_begin, e.content_end - e.content_begin));
    switch (e.kind) {
      case TagKind::kAnswer:
        answer_elems.push_back(&e);
        out.answers.emplace_back(content);
        break;
      case TagKind::kConfidence:
        conf_elems.push_back(&e);
        break;
      case TagKind::kAnalysis:
        if (!out.analysis) out.analysis = std::string(content);
        break;
      case TagKind::kThink:
        break;
    }
    last_end = std::max(last_end, e.close_end);
    saw_element = true;
  }

  if (schema.calibrated) {
    out.confidences.emplace();
    int slot = 0;
    for (const Element* e : conf_elems) {
      ++slot;
      const std::string_view content =
          trim_view(text.substr(e->content_begin, e->content_end - e->content_begin));
      std::optional<double> value = parse_number(content);
      if (!value) {
        add(ViolationCode::kConfNotNumeric, slot, "confidence '" + std::string(content) + "'");
        out.confidences->push_back(std::nullopt);
        continue;
      }
      double q = *value;
      if (q < 0.0 || q > 1.0) {
        if (options.lenient_confidence && q > 1.0 && q <= 100.0) {
          out.warnings.push_back("confidence " + std::string(content) + " in slot " +
                                 std::to_string(slot) + " rescaled from percent");
          q /= 100.0;
        } else {
          add(ViolationCode::kConfOutOfRange, slot,
              "confidence " + std::string(content) + " outside [0,1]");
          out.confidences->push_back(std::nullopt);
          continue;
        }
      }
      out.confidences->push_back(q);
    }
  }

  if (static_cast<int>(answer_elems.size()) != schema.k) {
    add(ViolationCode::kWrongCount, std::nullopt,
        "expected " + std::to_string(schema.k) + " answers, found " +
            std::to_string(answer_elems.size()));
  }
  if (schema.calibrated && static_cast<int>(conf_elems.size()) != schema.k) {
    add(ViolationCode::kWrongCount, std::nullopt,
        "expected " + std::to_string(schema.k) + " confidences, found " +
            std::to_string(conf_elems.size()));
  }

  // Every expected tag must be present, and the present ones must appear in
  // template order.
  const std::vector<Expected> expected = expected_sequence(schema);
  std::vector<bool> used(expected.size(), false);
  std::vector<std::size_t> order;
  for (const Element& e : elements) {
    if (e.kind != TagKind::kAnswer && e.kind != TagKind::kConfidence) continue;
    if (!schema.calibrated && e.kind == TagKind::kConfidence) continue;
    for (std::size_t j = 0; j < expected.size(); ++j) {
      if (!used[j] && expected[j].kind == e.kind && expected[j].index == e.index) {
        used[j] = true;
        order.push_back(j);
        break;
      }
    }
  }
  for (std::size_t j = 0; j < expected.size(); ++j) {
    if (!used[j]) {
      add(ViolationCode::kMissingTag, expected[j].index,
          "missing " + slot_tag_name(expected[j].kind, expected[j].index));
    }
  }
  if (!std::is_sorted(order.begin(), order.end())) {
    add(ViolationCode::kTagOrder, std::nullopt, "tags out of template order");
  }

  if (saw_element) {
    const std::string_view rest = trim_view(text.substr(std::min(last_end, text.size())));
    if (!rest.empty()) {
      add(ViolationCode::kTrailingContent, std::nullopt,
          std::to_string(rest.size()) + " bytes after the last tag");
    }
  }
  return out;
}

std::string canonicalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(ascii_lower(c));
  }
  while (!out.empty()) {
    const char c = out.back();
    if (c == ' ' || c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?') {
      out.pop_back();
    } else {
      break;
    }
  }
  return out;
}

FormatVerdict validate_format(const ParsedOutput& parsed, const TagSchema& schema) {
  schema.Check();
  FormatVerdict verdict;
  auto add_code = [&verdict](ViolationCode code) {
    if (std::find(verdict.codes.begin(), verdict.codes.end(), code) == verdict.codes.end()) {
      verdict.codes.push_back(code);
    }
  };
  for (const Violation& v : parsed.violations) add_code(v.code);

  std::unordered_set<std::string> seen;
  for (const std::string& answer : parsed.answers) {
    if (!seen.insert(canonicalize(answer)).second) {
      add_code(ViolationCode::kDuplicateAnswer);
      break;
    }
  }

  if (schema.calibrated && schema.n_regime == GoldRegime::kSingleGold && parsed.confidences) {
    double sum = 0.0;
    for (const auto& q : *parsed.confidences) {
      if (q) sum += *q;
    }
    if (sum > 1.0 + kConfidenceSumTolerance) add_code(ViolationCode::kConfSumExceedsOne);
  }
  verdict.ok = verdict.codes.empty();
  return verdict;
}

std::string render(std::span<const std::string> answers, std::span<const double> confidences,
                   const TagSchema& schema, std::string_view think) {
  schema.Check();
  if (static_cast<int>(answers.size()) != schema.k) {
    throw std::invalid_argument("render: answer count does not match schema k");
  }
  if (schema.calibrated && confidences.size() != answers.size()) {
    throw std::invalid_argument("render: confidence count does not match answer count");
  }
  std::string out = "<think> ";
  out.append(think);
  out += " </think>\n";
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const std::string idx =
        schema.answer_mode == AnswerMode::kMulti ? std::to_string(i + 1) : std::string();
    out += "<answer" + idx + "> " + answers[i] + " </answer" + idx + ">\n";
    if (schema.calibrated) {
      out += "<confidence" + idx + "> " + format_double(confidences[i]) + " </confidence" +
             idx + ">\n";
    }
  }
  return out;
}

}  // namespace tagparse
}  // namespace multians
