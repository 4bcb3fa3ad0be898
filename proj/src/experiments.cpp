#include "multians/experiments.hpp"

#include <future>
#include <set>

namespace multians::sim {
namespace {

constexpr std::uint64_t kSingleArmStream = 1;
constexpr std::uint64_t kMultiArmStream = 2;
constexpr std::uint64_t kEvalStream = 0xe7a1;

CollapseArm run_arm(const CollapseExperiment& e, reward::RewardMode mode, std::uint64_t stream) {
  TrainConfig config;
  config.mode = mode;
  config.k = reward::is_multi(mode) ? e.k : 1;
  config.group_size = e.group_size;
  config.temperature = e.temperature;
  config.learning_rate = e.learning_rate;
  config.steps = e.steps;
  config.seed = derive_seed(e.seed, stream);
  config.Check(e.task);

  CollapseArm arm;
  arm.mode = mode;
  arm.k = config.k;
  TrainResult trained = train(e.task, config);
  arm.stats = std::move(trained.stats);
  arm.policy = std::move(trained.policy);

  Rng rng(derive_seed(config.seed, kEvalStream));
  const bool calibrated = reward::is_calibrated(mode);
  const int budget_sets = std::max(1, e.eval_samples / config.k);
  const EvalSummary budget =
      evaluate_policy(e.task, arm.policy, config.k, e.temperature, budget_sets, calibrated, rng);
  arm.distinct_answers = budget.distinct_answers;
  arm.eval = evaluate_policy(e.task, arm.policy, config.k, e.temperature, e.eval_sets, calibrated,
                             rng);
  return arm;
}

}  // namespace

CollapseResult run_collapse_vs_multi(const CollapseExperiment& experiment) {
  auto single = std::async(std::launch::async, [&] {
    return run_arm(experiment, experiment.single_mode, kSingleArmStream);
  });
  CollapseResult result;
  result.multi = run_arm(experiment, experiment.multi_mode, kMultiArmStream);
  result.single = single.get();
  return result;
}

std::vector<SweepRow> run_k_sweep(const KSweepExperiment& experiment) {
  return sweep_k(experiment.task, experiment.base, experiment.k_values, experiment.eval_sets);
}

CalibrationResult run_calibration_convergence(const CalibrationExperiment& experiment) {
  std::set<double> levels;
  for (int id : experiment.task.gold_ids) {
    auto it = experiment.task.noise.find(id);
    levels.insert(it == experiment.task.noise.end() ? 1.0 : it->second);
  }
  if (levels.size() != 1) {
    throw std::invalid_argument("calibration experiment needs one shared correctness probability");
  }
  TrainConfig config;
  config.mode = experiment.mode;
  config.k = experiment.k;
  config.group_size = experiment.group_size;
  config.temperature = experiment.temperature;
  config.learning_rate = experiment.learning_rate;
  config.steps = experiment.steps;
  config.seed = experiment.seed;
  config.Check(experiment.task);
  if (!reward::is_calibrated(config.mode)) {
    throw std::invalid_argument("calibration experiment needs a calibrated mode");
  }

  CalibrationResult result;
  result.target_p = *levels.begin();
  result.brier_floor = result.target_p * (1.0 - result.target_p);
  TrainResult trained = train(experiment.task, config);
  result.stats = std::move(trained.stats);
  result.policy = std::move(trained.policy);
  Rng rng(derive_seed(config.seed, kEvalStream));
  result.eval = evaluate_policy(experiment.task, result.policy, config.k, config.temperature,
                                experiment.eval_sets, true, rng);
  return result;
}

}  // namespace multians::sim
