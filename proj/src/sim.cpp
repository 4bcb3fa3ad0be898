#include "multians/sim.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "multians/tagparse.hpp"

namespace multians::sim {
namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// softmax(logits / T) restricted to entries where mask is true (all when empty).
std::vector<double> masked_softmax(std::span<const double> logits, double temperature,
                                   const std::vector<bool>& mask) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask.empty() || mask[j]) top = std::max(top, logits[j] / temperature);
  }
  std::vector<double> probs(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (!mask.empty() && !mask[j]) continue;
    probs[j] = std::exp(logits[j] / temperature - top);
    total += probs[j];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::size_t masked_argmax(std::span<const double> logits, const std::vector<bool>& mask) {
  std::size_t best = logits.size();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (!mask.empty() && !mask[j]) continue;
    if (best == logits.size() || logits[j] > logits[best]) best = j;
  }
  return best;
}

void check_finite(const PolicyGradient& grad, const char* where) {
  auto bad = [](double v) { return !std::isfinite(v); };
  for (std::size_t j = 0; j < grad.answer.size(); ++j) {
    if (bad(grad.answer[j])) {
      std::ostringstream msg;
      msg << where << ": non-finite answer gradient at index " << j << " (" << grad.answer[j]
          << ")";
      throw TrainingError(msg.str());
    }
  }
  for (std::size_t i = 0; i < grad.conf.size(); ++i) {
    for (std::size_t c = 0; c < grad.conf[i].size(); ++c) {
      if (bad(grad.conf[i][c])) {
        std::ostringstream msg;
        msg << where << ": non-finite confidence gradient at slot " << i << " cell " << c;
        throw TrainingError(msg.str());
      }
    }
  }
}

double expected_confidence(std::span<const double> row, double temperature) {
  if (temperature == 0.0) return grid_value(static_cast<int>(masked_argmax(row, {})));
  const std::vector<double> probs = masked_softmax(row, temperature, {});
  double mean = 0.0;
  for (int c = 0; c < kConfidenceGridSize; ++c) mean += probs[c] * grid_value(c);
  return mean;
}

// Correctness of the rendered answer labels, with noisy gold answers
// resampled per rollout.
verify::CorrectnessVector realized_correctness(const ToyTask& task, const verify::GoldSpec& gold,
                                               const SampledSet& sample, Rng& rng) {
  std::vector<std::string> labels;
  labels.reserve(sample.answer_ids.size());
  for (int id : sample.answer_ids) labels.push_back(ToyTask::label(id));
  verify::CorrectnessVector bits = verify::verify_set(labels, gold);
  for (std::size_t i = 0; i < sample.answer_ids.size(); ++i) {
    auto it = task.noise.find(sample.answer_ids[i]);
    if (it != task.noise.end() && bits.bits[i]) bits.bits[i] = rng.uniform() < it->second;
  }
  return bits;
}

tagparse::TagSchema schema_for(const ToyTask& task, const TrainConfig& config) {
  const bool calibrated = reward::is_calibrated(config.mode);
  if (reward::is_multi(config.mode)) {
    return tagparse::TagSchema::Multi(config.k, calibrated, task.regime());
  }
  return tagparse::TagSchema::Single(calibrated, task.regime());
}

}  // namespace

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] <= 0.0) continue;
    last_positive = j;
    if (u < weights[j]) return j;
    u -= weights[j];
  }
  return last_positive;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

verify::GoldSpec ToyTask::gold_spec() const {
  std::vector<std::string> labels;
  labels.reserve(gold_ids.size());
  for (int id : gold_ids) labels.push_back(label(id));
  return verify::GoldSpec(labels);
}

void ToyTask::Check() const {
  if (vocab_size < 1) throw std::invalid_argument("ToyTask: vocab_size must be >= 1");
  if (gold_ids.empty()) throw std::invalid_argument("ToyTask: gold_ids is empty");
  std::set<int> seen;
  for (int id : gold_ids) {
    if (id < 0 || id >= vocab_size) throw std::invalid_argument("ToyTask: gold id out of range");
    if (!seen.insert(id).second) throw std::invalid_argument("ToyTask: duplicate gold id");
  }
  for (const auto& [id, p] : noise) {
    if (!seen.count(id)) throw std::invalid_argument("ToyTask: noise on a non-gold answer");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("ToyTask: noise outside [0,1]");
  }
}

PolicyParams PolicyParams::Uniform(int vocab_size, int slots) {
  PolicyParams p;
  p.answer_logits.assign(static_cast<std::size_t>(vocab_size), 0.0);
  p.conf_logits.assign(static_cast<std::size_t>(slots),
                       std::vector<double>(kConfidenceGridSize, 0.0));
  return p;
}

bool PolicyParams::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(answer_logits.begin(), answer_logits.end(), finite)) return false;
  for (const auto& row : conf_logits) {
    if (!std::all_of(row.begin(), row.end(), finite)) return false;
  }
  return true;
}

void TrainConfig::Check(const ToyTask& task) const {
  task.Check();
  if (k < 1 || k > task.vocab_size) throw std::invalid_argument("TrainConfig: need 1 <= k <= V");
  if (!reward::is_multi(mode) && k != 1) {
    throw std::invalid_argument("TrainConfig: single-answer modes require k = 1");
  }
  if (group_size < 2) throw std::invalid_argument("TrainConfig: group_size must be >= 2");
  if (!(temperature > 0.0)) throw std::invalid_argument("TrainConfig: temperature must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
}

SampledSet sample_set(const PolicyParams& policy, int k, double temperature, Rng& rng,
                      bool with_confidence) {
  const int vocab = policy.vocab_size();
  if (k < 1 || k > vocab) throw std::invalid_argument("sample_set: need 1 <= k <= V");
  if (!(temperature >= 0.0)) throw std::invalid_argument("sample_set: negative temperature");
  if (with_confidence && policy.slots() < k) {
    throw std::invalid_argument("sample_set: policy has fewer confidence slots than k");
  }
  SampledSet out;
  out.temperature = temperature;
  std::vector<bool> remaining(static_cast<std::size_t>(vocab), true);
  for (int t = 0; t < k; ++t) {
    std::size_t pick;
    double prob = 1.0;
    if (temperature == 0.0) {
      pick = masked_argmax(policy.answer_logits, remaining);
    } else {
      const std::vector<double> probs = masked_softmax(policy.answer_logits, temperature, remaining);
      pick = rng.categorical(probs);
      prob = probs[pick];
    }
    remaining[pick] = false;
    out.answer_ids.push_back(static_cast<int>(pick));
    out.draw_probs.push_back(prob);
    out.log_prob += std::log(prob);
  }
  if (with_confidence) {
    for (int i = 0; i < k; ++i) {
      const auto& row = policy.conf_logits[static_cast<std::size_t>(i)];
      std::size_t cell;
      double prob = 1.0;
      if (temperature == 0.0) {
        cell = masked_argmax(row, {});
      } else {
        const std::vector<double> probs = masked_softmax(row, temperature, {});
        cell = rng.categorical(probs);
        prob = probs[cell];
      }
      out.conf_cells.push_back(static_cast<int>(cell));
      out.confidences.push_back(grid_value(static_cast<int>(cell)));
      out.log_prob += std::log(prob);
    }
  }
  return out;
}

double set_log_prob(const PolicyParams& policy, std::span<const int> answer_ids,
                    std::span<const int> conf_cells, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("set_log_prob: temperature must be > 0");
  std::vector<bool> remaining(policy.answer_logits.size(), true);
  double lp = 0.0;
  for (int id : answer_ids) {
    const auto j = static_cast<std::size_t>(id);
    if (j >= remaining.size() || !remaining[j]) return -std::numeric_limits<double>::infinity();
    lp += std::log(masked_softmax(policy.answer_logits, temperature, remaining)[j]);
    remaining[j] = false;
  }
  for (std::size_t i = 0; i < conf_cells.size(); ++i) {
    lp += std::log(masked_softmax(policy.conf_logits[i], temperature, {})[conf_cells[i]]);
  }
  return lp;
}

PolicyGradient log_prob_gradient(const PolicyParams& policy, const SampledSet& sample) {
  const double temperature = sample.temperature;
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("log_prob_gradient: greedy samples have no gradient");
  }
  PolicyGradient grad;
  grad.answer.assign(policy.answer_logits.size(), 0.0);
  std::vector<bool> remaining(policy.answer_logits.size(), true);
  // d/dtheta_j sum_t [z_{a_t} - logsumexp_{R_t} z] = (1/T) sum_t (1[j = a_t] - p_t(j)).
  for (int id : sample.answer_ids) {
    const std::vector<double> probs = masked_softmax(policy.answer_logits, temperature, remaining);
    for (std::size_t j = 0; j < probs.size(); ++j) grad.answer[j] -= probs[j] / temperature;
    grad.answer[static_cast<std::size_t>(id)] += 1.0 / temperature;
    remaining[static_cast<std::size_t>(id)] = false;
  }
  grad.conf.assign(policy.conf_logits.size(), std::vector<double>(kConfidenceGridSize, 0.0));
  for (std::size_t i = 0; i < sample.conf_cells.size(); ++i) {
    const std::vector<double> probs = masked_softmax(policy.conf_logits[i], temperature, {});
    for (int c = 0; c < kConfidenceGridSize; ++c) grad.conf[i][c] = -probs[c] / temperature;
    grad.conf[i][static_cast<std::size_t>(sample.conf_cells[i])] += 1.0 / temperature;
  }
  return grad;
}

std::vector<Rollout> rollout(const ToyTask& task, const PolicyParams& policy,
                             const TrainConfig& config, Rng& rng) {
  const verify::GoldSpec gold = task.gold_spec();
  const tagparse::TagSchema schema = schema_for(task, config);
  const bool calibrated = reward::is_calibrated(config.mode);
  std::vector<Rollout> group;
  group.reserve(static_cast<std::size_t>(config.group_size));
  for (int g = 0; g < config.group_size; ++g) {
    Rollout r;
    r.sample = sample_set(policy, config.k, config.temperature, rng, calibrated);
    r.correctness = realized_correctness(task, gold, r.sample, rng);

    // The sampled action goes through the same format gate as a parsed generation.
    tagparse::ParsedOutput parsed;
    parsed.think = "";
    for (int id : r.sample.answer_ids) parsed.answers.push_back(ToyTask::label(id));
    if (calibrated) {
      parsed.confidences.emplace(r.sample.confidences.begin(), r.sample.confidences.end());
    }
    const tagparse::FormatVerdict verdict = tagparse::validate_format(parsed, schema);
    r.reward = reward::apply_format_gate(
        reward::breakdown_from_bits(r.correctness, r.sample.confidences, config.mode), verdict);
    group.push_back(std::move(r));
  }
  return group;
}

std::vector<double> grpo_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("grpo_advantages: need >= 2 rewards");
  const double mean =
      std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(r - mean);
  return out;
}

PolicyParams update(const PolicyParams& policy, std::span<const SampledSet> samples,
                    std::span<const double> advantages, double learning_rate) {
  if (samples.size() != advantages.size()) {
    throw std::invalid_argument("update: samples and advantages differ in length");
  }
  PolicyParams next = policy;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (advantages[s] == 0.0) continue;
    const PolicyGradient grad = log_prob_gradient(policy, samples[s]);
    check_finite(grad, "update");
    const double scale = learning_rate * advantages[s];
    for (std::size_t j = 0; j < grad.answer.size(); ++j) next.answer_logits[j] += scale * grad.answer[j];
    for (std::size_t i = 0; i < grad.conf.size(); ++i) {
      for (int c = 0; c < kConfidenceGridSize; ++c) next.conf_logits[i][c] += scale * grad.conf[i][c];
    }
  }
  if (!next.all_finite()) throw TrainingError("update: parameters became non-finite");
  return next;
}

double answer_entropy(const PolicyParams& policy, double temperature) {
  const std::vector<double> probs = masked_softmax(policy.answer_logits, temperature, {});
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

TrainResult train(const ToyTask& task, const TrainConfig& config) {
  config.Check(task);
  const bool calibrated = reward::is_calibrated(config.mode);
  TrainResult result;
  result.policy = PolicyParams::Uniform(task.vocab_size, config.k);
  Rng rng(config.seed);
  TrainStats& stats = result.stats;
  for (int step = 0; step < config.steps; ++step) {
    stats.policy_entropy.push_back(answer_entropy(result.policy, config.temperature));
    const std::vector<Rollout> group = rollout(task, result.policy, config, rng);

    std::vector<double> rewards;
    std::vector<SampledSet> samples;
    double coverage = 0.0, correct = 0.0, brier = 0.0;
    for (const Rollout& r : group) {
      rewards.push_back(r.reward.total);
      samples.push_back(r.sample);
      const double hits = static_cast<double>(r.correctness.count());
      correct += hits;
      coverage += hits / static_cast<double>(config.k);
      brier += r.reward.brier_penalty;
    }
    const double g = static_cast<double>(group.size());
    stats.mean_reward.push_back(std::accumulate(rewards.begin(), rewards.end(), 0.0) / g);
    stats.coverage_mean.push_back(coverage / g);
    stats.unique_correct.push_back(correct / g);
    stats.mean_brier.push_back(calibrated ? brier / g : std::numeric_limits<double>::quiet_NaN());

    result.policy = update(result.policy, samples, grpo_advantages(rewards), config.learning_rate);
  }
  return result;
}

EvalSummary evaluate_policy(const ToyTask& task, const PolicyParams& policy, int k,
                            double temperature, int n_sets, bool calibrated, Rng& rng) {
  if (n_sets < 1) throw std::invalid_argument("evaluate_policy: n_sets must be >= 1");
  const verify::GoldSpec gold = task.gold_spec();
  EvalSummary out;
  std::set<int> seen;
  double coverage = 0.0, correct = 0.0, brier = 0.0;
  for (int s = 0; s < n_sets; ++s) {
    const SampledSet sample = sample_set(policy, k, temperature, rng, calibrated);
    const verify::CorrectnessVector bits = realized_correctness(task, gold, sample, rng);
    const double hits = static_cast<double>(bits.count());
    correct += hits;
    coverage += hits / static_cast<double>(k);
    if (calibrated) brier += reward::multi_brier(sample.confidences, bits);
    seen.insert(sample.answer_ids.begin(), sample.answer_ids.end());

    calib::SetRecord record;
    record.id = "eval-" + std::to_string(s);
    for (int id : sample.answer_ids) record.answers.push_back(ToyTask::label(id));
    if (calibrated) record.confidences = sample.confidences;
    record.correctness = bits;
    record.source = calib::SetSource::kMultiOneGeneration;
    record.regime = task.regime();
    out.records.push_back(std::move(record));
  }
  const double n = static_cast<double>(n_sets);
  out.coverage_mean = coverage / n;
  out.unique_correct = correct / n;
  out.distinct_answers = seen.size();
  if (calibrated) {
    out.mean_brier = brier / n;
    double conf = 0.0;
    for (int i = 0; i < k; ++i) {
      conf += expected_confidence(policy.conf_logits[static_cast<std::size_t>(i)], temperature);
    }
    out.mean_confidence = conf / static_cast<double>(k);
  }
  return out;
}

std::vector<SweepRow> sweep_k(const ToyTask& task, const TrainConfig& config,
                              std::span<const int> k_values, int eval_sets) {
  task.Check();
  for (int k : k_values) {
    if (k < 1 || k > task.vocab_size) throw std::invalid_argument("sweep_k: k outside [1, V]");
  }
  std::vector<std::future<SweepRow>> cells;
  for (int k : k_values) {
    TrainConfig cell = config;
    cell.k = k;
    cell.seed = derive_seed(config.seed, static_cast<std::uint64_t>(k));
    cell.Check(task);
    cells.push_back(std::async(std::launch::async, [task, cell, eval_sets] {
      TrainResult trained = train(task, cell);
      Rng eval_rng(derive_seed(cell.seed, kEvalStream));
      const EvalSummary eval =
          evaluate_policy(task, trained.policy, cell.k, cell.temperature, eval_sets,
                          reward::is_calibrated(cell.mode), eval_rng);
      return SweepRow{cell.k, eval.unique_correct, eval.coverage_mean, std::move(trained.stats)};
    }));
  }
  std::vector<SweepRow> rows;
  for (auto& f : cells) rows.push_back(f.get());
  return rows;
}

}  // namespace multians::sim
