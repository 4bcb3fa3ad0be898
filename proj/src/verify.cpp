#include "multians/verify.hpp"

#include <algorithm>
#include <stdexcept>

#include "multians/tagparse.hpp"

namespace multians::verify {

GoldSpec::GoldSpec(std::span<const std::string> answers) {
  for (const std::string& answer : answers) {
    std::string key = tagparse::canonicalize(answer);
    if (key.empty()) continue;
    if (canonical_.insert(std::move(key)).second) answers_.push_back(answer);
  }
  if (answers_.empty()) throw std::invalid_argument("GoldSpec: gold answer set is empty");
}

GoldSpec::GoldSpec(std::initializer_list<std::string> answers)
    : GoldSpec(std::span<const std::string>(answers.begin(), answers.size())) {}

std::size_t CorrectnessVector::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
}

bool exact_match(std::string_view candidate, const GoldSpec& gold) {
  return gold.contains_canonical(tagparse::canonicalize(candidate));
}

CorrectnessVector verify_set(std::span<const std::string> answers, const GoldSpec& gold,
                             const Matcher& matcher) {
  CorrectnessVector out;
  out.bits.reserve(answers.size());
  for (const std::string& answer : answers) out.bits.push_back(matcher(answer, gold));
  return out;
}

std::size_t unique_count(std::span<const std::string> answers,
                         const Canonicalizer& canonicalizer) {
  std::unordered_set<std::string> seen;
  for (const std::string& answer : answers) seen.insert(canonicalizer(answer));
  return seen.size();
}

std::size_t unique_count(std::span<const std::string> answers) {
  return unique_count(answers, [](std::string_view s) { return tagparse::canonicalize(s); });
}

}  // namespace multians::verify
