#ifndef MULTIANS_SIM_HPP_
#define MULTIANS_SIM_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "multians/calib.hpp"
#include "multians/reward.hpp"
#include "multians/verify.hpp"

namespace multians::sim {

// Confidence actions live on {0.00, 0.05, ..., 1.00}.
inline constexpr int kConfidenceGridSize = 21;
inline double grid_value(int cell) { return static_cast<double>(cell) / 20.0; }

// Deterministic stream: mt19937_64 bits mapped to doubles by hand so draws do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t bits() { return engine_(); }
  // Index drawn from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ToyTask {
  int vocab_size = 10;
  std::vector<int> gold_ids;
  // Gold answers that are only correct with the given probability per rollout.
  std::map<int, double> noise;

  int n() const { return static_cast<int>(gold_ids.size()); }
  GoldRegime regime() const { return n() == 1 ? GoldRegime::kSingleGold : GoldRegime::kMultiGold; }
  static std::string label(int id) { return "answer_" + std::to_string(id); }
  verify::GoldSpec gold_spec() const;
  void Check() const;
};

struct PolicyParams {
  std::vector<double> answer_logits;
  // One row of kConfidenceGridSize logits per rank slot.
  std::vector<std::vector<double>> conf_logits;

  static PolicyParams Uniform(int vocab_size, int slots);
  int vocab_size() const { return static_cast<int>(answer_logits.size()); }
  int slots() const { return static_cast<int>(conf_logits.size()); }
  bool all_finite() const;
};

struct TrainConfig {
  int k = 1;
  int group_size = 32;
  double temperature = 0.7;
  double learning_rate = 0.1;
  int steps = 500;
  reward::RewardMode mode = reward::RewardMode::kRlvrMulti;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument.
  void Check(const ToyTask& task) const;
};

struct SampledSet {
  std::vector<int> answer_ids;
  std::vector<int> conf_cells;  // empty when confidences were not sampled
  std::vector<double> confidences;
  // Probability of each answer at its draw, after renormalization.
  std::vector<double> draw_probs;
  double log_prob = 0.0;
  double temperature = 1.0;
};

// Plackett-Luce draw of k distinct answers from softmax(logits / T), plus one
// grid confidence per slot when with_confidence. T = 0 decodes greedily
// (highest logits first, ties to the lowest index).
SampledSet sample_set(const PolicyParams& policy, int k, double temperature, Rng& rng,
                      bool with_confidence);

// log pi(answers, cells) at temperature T; cells may be empty.
double set_log_prob(const PolicyParams& policy, std::span<const int> answer_ids,
                    std::span<const int> conf_cells, double temperature);

struct PolicyGradient {
  std::vector<double> answer;
  std::vector<std::vector<double>> conf;
};

// Closed-form gradient of set_log_prob with respect to the logits.
PolicyGradient log_prob_gradient(const PolicyParams& policy, const SampledSet& sample);

struct Rollout {
  SampledSet sample;
  verify::CorrectnessVector correctness;
  reward::RewardBreakdown reward;
};

std::vector<Rollout> rollout(const ToyTask& task, const PolicyParams& policy,
                             const TrainConfig& config, Rng& rng);

// reward - group mean, without standard-deviation scaling.
std::vector<double> grpo_advantages(std::span<const double> rewards);

// theta += learning_rate * sum_i advantage_i * grad log pi(sample_i).
// Throws TrainingError on a non-finite gradient or parameter.
PolicyParams update(const PolicyParams& policy, std::span<const SampledSet> samples,
                    std::span<const double> advantages, double learning_rate);

double answer_entropy(const PolicyParams& policy, double temperature);

struct TrainStats {
  std::vector<double> mean_reward;
  std::vector<double> coverage_mean;
  std::vector<double> unique_correct;
  std::vector<double> policy_entropy;
  std::vector<double> mean_brier;  // NaN in uncalibrated modes

  std::size_t steps() const { return mean_reward.size(); }
};

struct TrainResult {
  PolicyParams policy;
  TrainStats stats;
};

TrainResult train(const ToyTask& task, const TrainConfig& config);

struct EvalSummary {
  double coverage_mean = 0.0;
  double unique_correct = 0.0;  // mean distinct correct answers per set
  std::size_t distinct_answers = 0;  // across all sampled sets
  double mean_confidence = 0.0;  // expected grid confidence, averaged over slots
  double mean_brier = 0.0;  // calibrated only
  std::vector<calib::SetRecord> records;
};

EvalSummary evaluate_policy(const ToyTask& task, const PolicyParams& policy, int k,
                            double temperature, int n_sets, bool calibrated, Rng& rng);

struct SweepRow {
  int k;
  double unique_correct;
  double coverage_mean;
  TrainStats stats;
};

// One training run per k, in parallel; each cell seeds its own stream.
std::vector<SweepRow> sweep_k(const ToyTask& task, const TrainConfig& config,
                              std::span<const int> k_values, int eval_sets = 1000);

}  // namespace multians::sim

#endif  // MULTIANS_SIM_HPP_
