#ifndef MULTIANS_VERIFY_HPP_
#define MULTIANS_VERIFY_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace multians::verify {

using Canonicalizer = std::function<std::string(std::string_view)>;

// The gold answer set. Answers are deduplicated under canonicalization when
// the set is built, so n() counts distinct gold answers.
class GoldSpec {
 public:
  // Throws std::invalid_argument if no nonempty answer survives.
  explicit GoldSpec(std::span<const std::string> answers);
  GoldSpec(std::initializer_list<std::string> answers);

  const std::vector<std::string>& answers() const { return answers_; }
  std::size_t n() const { return answers_.size(); }
  bool contains_canonical(const std::string& canonical) const {
    return canonical_.count(canonical) > 0;
  }

 private:
  std::vector<std::string> answers_;
  std::unordered_set<std::string> canonical_;
};

struct CorrectnessVector {
  std::vector<bool> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  bool any() const { return count() > 0; }
};

// Pluggable correctness predicate; the shipped one is canonicalized exact match.
using Matcher = std::function<bool(std::string_view, const GoldSpec&)>;

bool exact_match(std::string_view candidate, const GoldSpec& gold);

// Duplicates are scored independently; rejecting them is the format gate's job.
CorrectnessVector verify_set(std::span<const std::string> answers, const GoldSpec& gold,
                             const Matcher& matcher = exact_match);

std::size_t unique_count(std::span<const std::string> answers,
                         const Canonicalizer& canonicalizer);
std::size_t unique_count(std::span<const std::string> answers);

}  // namespace multians::verify

#endif  // MULTIANS_VERIFY_HPP_
