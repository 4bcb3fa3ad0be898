#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "multians/calib.hpp"
#include "multians/experiments.hpp"
#include "multians/harness.hpp"
#include "multians/reward.hpp"
#include "multians/sim.hpp"
#include "multians/tagparse.hpp"

using namespace multians;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

const fs::path kFixtures = MULTIANS_FIXTURES;

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double ece_oracle(const std::vector<calib::CalibrationPoint>& points, int m) {
  double total = 0.0;
  for (int b = 0; b < m; ++b) {
    const double lo = static_cast<double>(b) / m;
    const double hi = static_cast<double>(b + 1) / m;
    double conf = 0.0, acc = 0.0;
    int n = 0;
    for (const auto& p : points) {
      const bool inside = p.confidence >= lo && (b == m - 1 ? p.confidence <= 1.0 : p.confidence < hi);
      if (!inside) continue;
      conf += p.confidence;
      acc += p.correct ? 1.0 : 0.0;
      ++n;
    }
    if (n > 0) total += n * std::abs(acc / n - conf / n);
  }
  return total / static_cast<double>(points.size());
}

Outcome proper_scoring() {
  const verify::GoldSpec gold{"right"};
  double worst = 0.0;
  for (int pi = 1; pi <= 9; ++pi) {
    const double p = pi / 10.0;
    double best_single = -1e9, best_single_q = -1.0;
    double best_multi = 1e9, best_multi_q = -1.0;
    for (int qi = 0; qi <= 100; ++qi) {
      const double q = qi / 100.0;
      const double single = p * reward::r_rlcr_single("right", q, gold) +
                            (1 - p) * reward::r_rlcr_single("wrong", q, gold);
      if (single > best_single) best_single = single, best_single_q = q;
      // Two answers, each correct with probability p; both report q.
      double multi = 0.0;
      for (int mask = 0; mask < 4; ++mask) {
        verify::CorrectnessVector bits;
        bits.bits = {(mask & 1) != 0, (mask & 2) != 0};
        const double prob = (bits.bits[0] ? p : 1 - p) * (bits.bits[1] ? p : 1 - p);
        multi += prob * reward::multi_brier(std::vector<double>{q, q}, bits);
      }
      if (multi < best_multi) best_multi = multi, best_multi_q = q;
    }
    worst = std::max({worst, std::abs(best_single_q - p), std::abs(best_multi_q - p)});
  }
  return {worst <= 0.01 + 1e-12, "max |argmax q - p| = " + fmt(worst)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<calib::CalibrationPoint> points;
  for (int i = 0; i < 1000; ++i) {
    const double q = unit(rng);
    points.push_back({q, unit(rng) < q});
  }
  const double ece_gap = std::abs(calib::ece(points, 10) - ece_oracle(points, 10));
  double direct = 0.0;
  for (const auto& p : points) direct += (p.confidence - (p.correct ? 1.0 : 0.0)) * (p.confidence - (p.correct ? 1.0 : 0.0));
  direct /= static_cast<double>(points.size());
  const double brier_gap = std::abs(calib::brier(points) - direct);

  std::vector<calib::SetRecord> records;
  for (int i = 0; i < 1000; ++i) {
    calib::SetRecord r;
    r.id = "r" + std::to_string(i);
    r.answers = {"a", "b", "c"};
    r.correctness.bits = {unit(rng) < 0.3, unit(rng) < 0.3, unit(rng) < 0.3};
    r.confidences = std::vector<double>{unit(rng) / 3, unit(rng) / 3, unit(rng) / 3};
    r.invalid.assign(3, false);
    records.push_back(r);
  }
  double set_gap = 0.0;
  for (auto regime : {GoldRegime::kSingleGold, GoldRegime::kMultiGold}) {
    std::vector<calib::CalibrationPoint> set_pts;
    for (const auto& r : records) set_pts.push_back({calib::set_confidence(*r.confidences, regime), r.correctness.any()});
    set_gap = std::max(set_gap, std::abs(calib::set_ece(records, regime, 10) - ece_oracle(set_pts, 10)));
  }
  const bool pass = ece_gap <= 1e-12 && brier_gap <= 1e-12 && set_gap <= 1e-12;
  return {pass, "ece gap " + fmt(ece_gap) + ", brier gap " + fmt(brier_gap) + ", set_ece gap " + fmt(set_gap)};
}

Outcome format_gate() {
  std::mt19937_64 rng(77);
  const std::vector<std::string> words = {"alpha", "Alpha.", "beta", "gamma", "delta", "BETA"};
  const verify::GoldSpec gold{"alpha", "beta", "gamma"};
  int checked = 0, violations = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 3);
    const bool calibrated = rng() % 2;
    const GoldRegime regime = rng() % 2 ? GoldRegime::kSingleGold : GoldRegime::kMultiGold;
    const auto schema = tagparse::TagSchema::Multi(k, calibrated, regime);
    std::vector<std::string> answers;
    std::vector<double> confs;
    for (int i = 0; i < k; ++i) {
      answers.push_back(words[rng() % words.size()]);
      confs.push_back(static_cast<double>(rng() % 101) / 100.0);
    }
    std::vector<std::string> canon;
    for (const auto& a : answers) canon.push_back(tagparse::canonicalize(a));
    std::sort(canon.begin(), canon.end());
    const bool has_dup = std::adjacent_find(canon.begin(), canon.end()) != canon.end();
    double sum = 0.0;
    for (double q : confs) sum += q;
    const bool over = calibrated && regime == GoldRegime::kSingleGold && sum > 1.0 + 1e-9;
    if (!has_dup && !over) continue;
    ++checked;
    const auto parsed = tagparse::parse(tagparse::render(answers, confs, schema), schema);
    const auto scored = reward::score(parsed, schema, gold);
    if (scored.reward.total != 0.0) ++violations;
  }
  return {checked > 1000 && violations == 0,
          std::to_string(checked) + " gated sets, " + std::to_string(violations) + " nonzero totals"};
}

Outcome reductions() {
  std::mt19937_64 rng(5);
  const std::vector<std::string> pool = {"x", "y", "z", "X.", "w"};
  const verify::GoldSpec gold{"x", "y"};
  int mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::vector<std::string> one = {pool[rng() % pool.size()]};
    const double q = static_cast<double>(rng() % 100001) / 100000.0;
    if (reward::r_rlvr_multi(one, gold) != reward::r_correct(one[0], gold)) ++mismatches;
    if (reward::r_rlcr_multi(one, std::vector<double>{q}, gold) != reward::r_rlcr_single(one[0], q, gold)) {
      ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 10000 cases"};
}

Outcome gradients() {
  sim::Rng rng(31);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int vocab = 2 + static_cast<int>(rng.bits() % 4);
    const int k = 1 + static_cast<int>(rng.bits() % std::min(vocab, 3));
    const double temperature = 0.3 + 1.2 * rng.uniform();
    sim::PolicyParams p = sim::PolicyParams::Uniform(vocab, k);
    for (double& v : p.answer_logits) v = 3.0 * rng.uniform() - 1.5;
    for (auto& row : p.conf_logits) {
      for (double& v : row) v = 3.0 * rng.uniform() - 1.5;
    }
    const sim::SampledSet s = sim::sample_set(p, k, temperature, rng, true);
    const sim::PolicyGradient g = sim::log_prob_gradient(p, s);
    auto lp = [&](const sim::PolicyParams& q) {
      return sim::set_log_prob(q, s.answer_ids, s.conf_cells, temperature);
    };
    auto check = [&](double analytic, const std::function<void(sim::PolicyParams&, double)>& nudge) {
      sim::PolicyParams up = p, down = p;
      nudge(up, h);
      nudge(down, -h);
      const double fd = (lp(up) - lp(down)) / (2 * h);
      const double rel = std::abs(analytic - fd) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
      worst = std::max(worst, rel);
    };
    for (int i = 0; i < vocab; ++i) {
      check(g.answer[i], [i](sim::PolicyParams& q, double d) { q.answer_logits[i] += d; });
    }
    for (int slot = 0; slot < k; ++slot) {
      for (int c = 0; c < sim::kConfidenceGridSize; ++c) {
        check(g.conf[slot][c], [slot, c](sim::PolicyParams& q, double d) { q.conf_logits[slot][c] += d; });
      }
    }
  }
  return {worst <= 1e-4, "max relative error " + fmt(worst)};
}

Outcome collapse() {
  const sim::CollapseResult r = sim::run_collapse_vs_multi(sim::CollapseExperiment{});
  const bool pass = r.single.distinct_answers <= 2 && r.multi.eval.coverage_mean >= 0.85;
  return {pass, "rlvr_single distinct answers over 30 samples = " + std::to_string(r.single.distinct_answers) +
                    ", rlvr_multi coverage_mean = " + fmt(r.multi.eval.coverage_mean)};
}

Outcome k_sweep() {
  const auto rows = sim::run_k_sweep(sim::KSweepExperiment{});
  bool increasing = true;
  std::string detail = "unique_correct by k:";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += " " + std::to_string(rows[i].k) + "->" + fmt(rows[i].unique_correct);
    if (i > 0 && !(rows[i].unique_correct > rows[i - 1].unique_correct)) increasing = false;
  }
  return {increasing && rows.size() == 4, detail};
}

Outcome calibration() {
  const sim::CalibrationResult r = sim::run_calibration_convergence(sim::CalibrationExperiment{});
  const bool pass = std::abs(r.eval.mean_confidence - r.target_p) <= 0.10 &&
                    std::abs(r.eval.mean_brier - r.brier_floor) <= 0.02;
  return {pass, "mean confidence " + fmt(r.eval.mean_confidence) + " (target " + fmt(r.target_p) +
                    "), mean Multi-Brier " + fmt(r.eval.mean_brier) + " (floor " + fmt(r.brier_floor) + ")"};
}

Outcome transcripts() {
  const auto single_schema = tagparse::TagSchema::Single(true);
  const auto single = tagparse::parse(read_file(kFixtures / "transcript_rlvr_single.txt"), single_schema);
  const bool single_ok = single.has(tagparse::ViolationCode::kConfOutOfRange) && single.violations.size() == 1;

  const auto multi_schema = tagparse::TagSchema::Multi(3, false, GoldRegime::kMultiGold);
  const auto multi = tagparse::parse(read_file(kFixtures / "transcript_rlvr_multi.txt"), multi_schema);
  const verify::GoldSpec gold{"Pneumonia",      "Pulmonary neoplasm", "Bronchitis",
                              "Tuberculosis",   "Possible NSTEMI / STEMI", "GERD",
                              "Unstable angina", "Pericarditis",      "Stable angina"};
  const auto scored = reward::score(multi, multi_schema, gold);
  const bool multi_ok = multi.violations.empty() && scored.reward.correctness_sum == 2.0 &&
                        scored.reward.format_multiplier == 1;
  return {single_ok && multi_ok, std::string("RLVR-Single strict: ") +
                                     (single_ok ? "CONF_OUT_OF_RANGE only" : "unexpected violations") +
                                     "; RLVR-Multi correctness_sum = " + fmt(scored.reward.correctness_sum)};
}

Outcome determinism() {
  const auto data = harness::ingest(kFixtures / "evaluate_hand.jsonl");
  harness::RunConfig config;
  config.seed = 1234;
  const fs::path base = fs::temp_directory_path() / "multians_acceptance";
  fs::remove_all(base);
  harness::cmd_evaluate(data.records, config).write(base / "a");
  harness::cmd_evaluate(data.records, config).write(base / "b");
  int compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    ++compared;
    if (read_file(entry.path()) != read_file(base / "b" / entry.path().filename())) ++differing;
  }
  return {compared == 5 && differing == 0,
          std::to_string(compared) + " report files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "proper scoring rule", 1.0, proper_scoring},
      {2, "metric oracles", 1.0, metric_oracles},
      {3, "format gate zeroes reward", 0.0, format_gate},
      {4, "single-answer reductions", 0.0, reductions},
      {5, "gradient correctness", 10.0, gradients},
      {6, "mode collapse vs coverage", 120.0, collapse},
      {7, "k-sweep monotonicity", 300.0, k_sweep},
      {8, "calibration convergence", 300.0, calibration},
      {9, "transcript fixtures", 0.0, transcripts},
      {10, "end-to-end determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out{false, ""};
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_s <= 0.0 || secs < c.limit_s;
    const bool pass = out.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.3fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), secs, in_time ? "" : ", over time limit");
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
