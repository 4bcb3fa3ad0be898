#ifndef MULTIANS_EXPERIMENTS_HPP_
#define MULTIANS_EXPERIMENTS_HPP_

#include <vector>

#include "multians/sim.hpp"

namespace multians::sim {

// Single-answer vs multi-answer training on the same multi-gold task.
struct CollapseExperiment {
  ToyTask task{10, {0, 1, 2}, {}};
  int k = 3;
  int group_size = 32;
  double temperature = 0.7;
  double learning_rate = 0.1;
  int steps = 500;
  std::uint64_t seed = 0;
  // Answer budget for the distinct-answer count: eval_samples single draws
  // against eval_samples / k sets.
  int eval_samples = 30;
  int eval_sets = 1000;
  reward::RewardMode single_mode = reward::RewardMode::kRlvrSingle;
  reward::RewardMode multi_mode = reward::RewardMode::kRlvrMulti;
};

struct CollapseArm {
  reward::RewardMode mode;
  int k = 1;
  TrainStats stats;
  PolicyParams policy;
  std::size_t distinct_answers = 0;
  EvalSummary eval;
};

struct CollapseResult {
  CollapseArm single;
  CollapseArm multi;
};

CollapseResult run_collapse_vs_multi(const CollapseExperiment& experiment);

struct KSweepExperiment {
  ToyTask task{12, {0, 1, 2, 3, 4, 5}, {}};
  std::vector<int> k_values{2, 3, 4, 5};
  TrainConfig base{};
  int eval_sets = 1000;
};

std::vector<SweepRow> run_k_sweep(const KSweepExperiment& experiment);

// Noisy gold answers: the learned confidence should settle on p and the
// Multi-Brier on its floor p(1 - p).
struct CalibrationExperiment {
  ToyTask task{6, {0, 1, 2}, {{0, 0.7}, {1, 0.7}, {2, 0.7}}};
  int k = 2;
  int group_size = 32;
  double temperature = 0.7;
  double learning_rate = 0.02;
  int steps = 2000;
  std::uint64_t seed = 0;
  int eval_sets = 4000;
  reward::RewardMode mode = reward::RewardMode::kRlcrMulti;
};

struct CalibrationResult {
  TrainStats stats;
  PolicyParams policy;
  EvalSummary eval;
  double target_p = 0.0;
  double brier_floor = 0.0;
};

// Throws std::invalid_argument unless every gold answer shares one noise level.
CalibrationResult run_calibration_convergence(const CalibrationExperiment& experiment);

}  // namespace multians::sim

#endif  // MULTIANS_EXPERIMENTS_HPP_
