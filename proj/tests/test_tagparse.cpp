#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "multians/tagparse.hpp"

using namespace multians;
using namespace multians::tagparse;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(MULTIANS_FIXTURES) + "/" + name, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<ViolationCode> codes(const ParsedOutput& p) {
  std::vector<ViolationCode> out;
  for (const auto& v : p.violations) out.push_back(v.code);
  return out;
}

}  // namespace

TEST(Parse, CondensedBoxUsesShortTags) {
  const auto p = parse(read_fixture("transcript_condensed.txt"),
                       TagSchema::Multi(3, true, GoldRegime::kMultiGold));
  EXPECT_TRUE(p.violations.empty());
  EXPECT_EQ(p.answers, (std::vector<std::string>{"Tuberculosis", "Pneumonia", "Bronchitis"}));
  ASSERT_TRUE(p.usable_confidences());
  EXPECT_EQ(*p.usable_confidences(), (std::vector<double>{0.40, 0.30, 0.30}));
  ASSERT_TRUE(p.think);
}

TEST(Parse, MinimalUncalibratedMulti) {
  const auto p = parse("<think>x</think><answer1>A</answer1><answer2>B</answer2><answer3>C</answer3>",
                       TagSchema::Multi(3, false, GoldRegime::kMultiGold));
  EXPECT_TRUE(p.violations.empty());
  EXPECT_EQ(p.answers, (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_FALSE(p.confidences);
  EXPECT_EQ(*p.think, "x");
}

TEST(Parse, RlvrSingleTranscriptPercentConfidence) {
  const std::string text = read_fixture("transcript_rlvr_single.txt");
  const auto strict = parse(text, TagSchema::Single(true));
  EXPECT_TRUE(strict.has(ViolationCode::kConfOutOfRange));
  ASSERT_TRUE(strict.confidences);
  ASSERT_EQ(strict.confidences->size(), 1u);
  EXPECT_FALSE((*strict.confidences)[0]);
  EXPECT_FALSE(strict.usable_confidences());
  EXPECT_EQ(strict.answers, std::vector<std::string>{"Tuberculosis"});

  const auto lenient = parse(text, TagSchema::Single(true), ParseOptions{true});
  EXPECT_TRUE(lenient.violations.empty());
  ASSERT_TRUE(lenient.usable_confidences());
  EXPECT_DOUBLE_EQ((*lenient.usable_confidences())[0], 0.95);
  EXPECT_EQ(lenient.warnings.size(), 1u);
}

TEST(Parse, RlvrMultiTranscriptWithPrefilledThink) {
  const auto p = parse(read_fixture("transcript_rlvr_multi.txt"),
                       TagSchema::Multi(3, false, GoldRegime::kMultiGold));
  EXPECT_TRUE(p.violations.empty());
  EXPECT_EQ(p.answers,
            (std::vector<std::string>{"Pulmonary Embolism", "Pneumonia", "Tuberculosis"}));
  EXPECT_TRUE(p.think);
}

TEST(Parse, RlcrTranscripts) {
  const auto multi = parse(read_fixture("transcript_rlcr_multi.txt"),
                           TagSchema::Multi(3, true, GoldRegime::kMultiGold));
  EXPECT_TRUE(multi.violations.empty());
  EXPECT_EQ(*multi.usable_confidences(), (std::vector<double>{0.45, 0.35, 0.20}));

  const auto single = parse(read_fixture("transcript_rlcr_single.txt"), TagSchema::Single(true));
  EXPECT_TRUE(single.violations.empty());
  EXPECT_EQ(single.answers, std::vector<std::string>{"pulmonary embolism"});
  EXPECT_EQ(*single.usable_confidences(), std::vector<double>{0.75});
  ASSERT_TRUE(single.analysis);
  EXPECT_NE(single.analysis->find("ambiguity"), std::string::npos);
}

TEST(Parse, MissingAnswerTag) {
  const auto p = parse("<think>x</think><answer1>A</answer1><answer3>C</answer3>",
                       TagSchema::Multi(3, false, GoldRegime::kMultiGold));
  EXPECT_TRUE(p.has(ViolationCode::kMissingTag));
  EXPECT_TRUE(p.has(ViolationCode::kWrongCount));
}

TEST(Parse, OutOfOrderTags) {
  const auto p = parse("<think>x</think><answer2>B</answer2><answer1>A</answer1>",
                       TagSchema::Multi(2, false, GoldRegime::kMultiGold));
  EXPECT_TRUE(p.has(ViolationCode::kTagOrder));
}

TEST(Parse, ConfidenceNotNumeric) {
  const auto p = parse("<think>x</think><answer>A</answer><confidence>high</confidence>",
                       TagSchema::Single(true));
  EXPECT_TRUE(p.has(ViolationCode::kConfNotNumeric));
  EXPECT_FALSE((*p.confidences)[0]);
}

TEST(Parse, TrailingContentAndMissingThink) {
  const auto trailing = parse("<think>x</think><answer>A</answer> and more",
                              TagSchema::Single(false));
  EXPECT_EQ(codes(trailing), std::vector<ViolationCode>{ViolationCode::kTrailingContent});
  const auto no_think = parse("<answer>A</answer>", TagSchema::Single(false));
  EXPECT_EQ(codes(no_think), std::vector<ViolationCode>{ViolationCode::kMissingThink});
  EXPECT_EQ(no_think.answers, std::vector<std::string>{"A"});
}

TEST(Parse, TagNamesAreCaseSensitive) {
  const auto p = parse("<think>x</think><Answer>A</Answer>", TagSchema::Single(false));
  EXPECT_TRUE(p.has(ViolationCode::kMissingTag));
}

TEST(Parse, WhitespaceInsideBracketsAndContent) {
  const auto p = parse("<think>x</think>< answer1 >  A  </answer1 >\n<answer2>\tB\n</answer2>",
                       TagSchema::Multi(2, false, GoldRegime::kMultiGold));
  EXPECT_TRUE(p.violations.empty());
  EXPECT_EQ(p.answers, (std::vector<std::string>{"A", "B"}));
}

TEST(Parse, SchemaInconsistencyThrows) {
  TagSchema bad = TagSchema::Single(false);
  bad.k = 3;
  EXPECT_THROW(parse("<answer>A</answer>", bad), std::invalid_argument);
}

TEST(Parse, RandomTextNeverThrows) {
  const std::vector<std::string> pieces = {
      "<think>", "</think>", "<answer>", "</answer>", "<answer1>", "</answer1>", "<answer2>",
      "</answer2>", "<confidence1>", "</confidence1>", "<confidence>", "</confidence>", "<a1>",
      "</conf2>", "<", ">", "/", "0.5", "1.5", "95.", "abc", " ", "\n", "nan", "-0", "<analysis>"};
  std::mt19937_64 rng(11);
  const std::vector<TagSchema> schemas = {TagSchema::Single(false), TagSchema::Single(true),
                                          TagSchema::Multi(2, true, GoldRegime::kSingleGold),
                                          TagSchema::Multi(3, false, GoldRegime::kMultiGold)};
  for (int trial = 0; trial < 5000; ++trial) {
    std::string text;
    const int n = static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) text += pieces[rng() % pieces.size()];
    for (const auto& schema : schemas) {
      ParsedOutput p;
      ASSERT_NO_THROW(p = parse(text, schema)) << text;
      if (p.violations.empty()) {
        EXPECT_EQ(p.answers.size(), static_cast<std::size_t>(schema.k));
      }
      ASSERT_NO_THROW(validate_format(p, schema));
    }
  }
}

TEST(Render, RoundTripsRandomSets) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> words = {"alpha", "Beta gamma", "x", "Pulmonary Embolism", "42"};
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 4);
    const bool calibrated = rng() % 2;
    const bool multi = k > 1 || rng() % 2;
    const TagSchema schema =
        multi ? TagSchema::Multi(k, calibrated, GoldRegime::kMultiGold) : TagSchema::Single(calibrated);
    std::vector<std::string> answers;
    std::vector<double> confs;
    for (int i = 0; i < k; ++i) {
      answers.push_back(words[rng() % words.size()] + std::to_string(i));
      confs.push_back(static_cast<double>(rng() % 1001) / 1000.0);
    }
    const auto p = parse(render(answers, confs, schema), schema);
    ASSERT_TRUE(p.violations.empty());
    EXPECT_EQ(p.answers, answers);
    if (calibrated) {
      EXPECT_EQ(*p.usable_confidences(), confs);
    }
  }
}

TEST(Canonicalize, Examples) {
  EXPECT_EQ(canonicalize("  Pulmonary  Embolism. "), "pulmonary embolism");
  EXPECT_EQ(canonicalize("tuberculosis"), "tuberculosis");
  EXPECT_EQ(canonicalize("GERD"), "gerd");
  EXPECT_EQ(canonicalize("Really?! ."), "really");
  EXPECT_EQ(canonicalize(""), "");
}

TEST(Canonicalize, Idempotent) {
  std::mt19937_64 rng(3);
  const std::string alphabet = "aB .,;:!?\t\nz";
  for (int trial = 0; trial < 3000; ++trial) {
    std::string s;
    const int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
    const std::string once = canonicalize(s);
    EXPECT_EQ(canonicalize(once), once) << s;
  }
}

TEST(ValidateFormat, Examples) {
  const TagSchema uncal = TagSchema::Multi(3, false, GoldRegime::kMultiGold);
  const auto dup = parse(render(std::vector<std::string>{"A", "B", "a"}, {}, uncal), uncal);
  const auto v = validate_format(dup, uncal);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.codes, std::vector<ViolationCode>{ViolationCode::kDuplicateAnswer});

  const TagSchema cal = TagSchema::Multi(3, true, GoldRegime::kSingleGold);
  const std::vector<std::string> abc = {"A", "B", "C"};
  EXPECT_TRUE(validate_format(parse(render(abc, std::vector<double>{0.40, 0.30, 0.30}, cal), cal), cal).ok);
  const auto over = validate_format(parse(render(abc, std::vector<double>{0.5, 0.4, 0.2}, cal), cal), cal);
  EXPECT_FALSE(over.ok);
  EXPECT_EQ(over.codes, std::vector<ViolationCode>{ViolationCode::kConfSumExceedsOne});

  const TagSchema multi_gold = TagSchema::Multi(3, true, GoldRegime::kMultiGold);
  EXPECT_TRUE(validate_format(
      parse(render(abc, std::vector<double>{0.5, 0.4, 0.2}, multi_gold), multi_gold), multi_gold).ok);
}

TEST(ViolationCodes, NamesRoundTrip) {
  for (int i = 0; i <= static_cast<int>(ViolationCode::kMissingThink); ++i) {
    const auto code = static_cast<ViolationCode>(i);
    EXPECT_EQ(parse_violation_code(to_string(code)), code);
  }
  EXPECT_EQ(to_string(ViolationCode::kConfSumExceedsOne), "CONF_SUM_EXCEEDS_ONE");
}
