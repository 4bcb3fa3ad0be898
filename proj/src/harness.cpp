#include "multians/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include "multians/experiments.hpp"
#include "multians/sim.hpp"
#include "multians/verify.hpp"

namespace multians::harness {
namespace {

using nlohmann::json;

const std::vector<std::string> kMetricsColumns = {
    "source",          "n_records",   "n_invalid", "coverage_mean", "correct_count",
    "pass1",           "pass_at_k",   "uniqueness_mean", "avg_token_total", "brier_top1",
    "brier_pooled",    "ece_top1",    "ece_pooled",      "set_ece"};

std::vector<std::string> with_prefix(std::vector<std::string> prefix,
                                     const std::vector<std::string>& rest) {
  prefix.insert(prefix.end(), rest.begin(), rest.end());
  return prefix;
}

std::vector<std::string> metrics_cells(const calib::MetricsReport& r) {
  std::optional<double> bt, bp, et, ep, se;
  if (r.calibration) {
    bt = r.calibration->brier_top1;
    bp = r.calibration->brier_pooled;
    et = r.calibration->ece_top1;
    ep = r.calibration->ece_pooled;
    se = r.calibration->set_ece;
  }
  return {std::string(calib::to_string(r.source)),
          std::to_string(r.n_records),
          std::to_string(r.n_invalid),
          csv::num(r.coverage_mean),
          csv::num(r.correct_count),
          csv::num(r.pass1),
          csv::num(r.pass_at_k),
          csv::num(r.uniqueness_mean),
          csv::num(r.avg_token_total),
          csv::num(bt),
          csv::num(bp),
          csv::num(et),
          csv::num(ep),
          csv::num(se)};
}

std::string join_codes(const std::vector<tagparse::ViolationCode>& codes) {
  std::string out;
  for (auto code : codes) {
    if (!out.empty()) out.push_back(';');
    out += tagparse::to_string(code);
  }
  return out;
}

template <typename T>
T field(const json& obj, const char* key) {
  if (!obj.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("field '") + key + "' has the wrong type");
  }
}

verify::Matcher matcher_for(const std::string& name) {
  if (name == "exact") return verify::exact_match;
  throw InputError("unknown matcher '" + name + "'");
}

csv::Table stats_table(const sim::TrainStats& stats) {
  csv::Table t({"step", "mean_reward", "coverage_mean", "unique_correct", "entropy", "mean_brier"});
  for (std::size_t s = 0; s < stats.steps(); ++s) {
    const double brier = stats.mean_brier[s];
    t.add_row({std::to_string(s), csv::num(stats.mean_reward[s]), csv::num(stats.coverage_mean[s]),
               csv::num(stats.unique_correct[s]), csv::num(stats.policy_entropy[s]),
               std::isnan(brier) ? std::string() : csv::num(brier)});
  }
  return t;
}

// ---- simulate config ------------------------------------------------------

class ExperimentReader {
 public:
  ExperimentReader(const json& obj, std::string name) : obj_(obj), name_(std::move(name)) {
    if (!obj_.is_object()) throw ConfigError("experiment entry must be an object");
  }

  template <typename T>
  T get(const char* key, T fallback) {
    used_.insert(key);
    if (!obj_.contains(key)) return fallback;
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name_ + ": field '" + key + "' has the wrong type");
    }
  }

  reward::RewardMode mode(const char* key, reward::RewardMode fallback) {
    const std::string text = get<std::string>(key, std::string(reward::to_string(fallback)));
    auto mode = reward::parse_reward_mode(text);
    if (!mode) throw ConfigError(name_ + ": unknown mode '" + text + "'");
    return *mode;
  }

  sim::ToyTask task(const sim::ToyTask& fallback) {
    sim::ToyTask t = fallback;
    t.vocab_size = get<int>("vocab_size", t.vocab_size);
    if (obj_.contains("n_gold") && obj_.contains("gold_ids")) {
      throw ConfigError(name_ + ": give either n_gold or gold_ids, not both");
    }
    if (obj_.contains("n_gold")) {
      const int n = get<int>("n_gold", 0);
      t.gold_ids.clear();
      for (int i = 0; i < n; ++i) t.gold_ids.push_back(i);
      t.noise.clear();
    } else {
      used_.insert("n_gold");
    }
    if (obj_.contains("gold_ids")) {
      t.gold_ids = get<std::vector<int>>("gold_ids", {});
      t.noise.clear();
    } else {
      used_.insert("gold_ids");
    }
    if (obj_.contains("noise_p")) {
      const double p = get<double>("noise_p", 1.0);
      t.noise.clear();
      for (int id : t.gold_ids) t.noise[id] = p;
    } else {
      used_.insert("noise_p");
      // Keep the default noise only where it still names a gold answer.
      std::map<int, double> kept;
      for (int id : t.gold_ids) {
        if (auto it = t.noise.find(id); it != t.noise.end()) kept.insert(*it);
      }
      t.noise = kept;
    }
    return t;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) throw ConfigError(name_ + ": unknown field '" + key + "'");
    }
  }

 private:
  const json& obj_;
  std::string name_;
  std::set<std::string> used_{"name", "label"};
};

struct PlannedExperiment {
  std::string name;
  std::string label;
  std::function<SimulateResult(const std::filesystem::path&)> run;
};

template <typename Fn>
auto config_checked(const std::string& label, Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(label + ": " + e.what());
  }
}

PlannedExperiment plan_collapse(ExperimentReader& in, const std::string& label,
                                std::uint64_t seed) {
  sim::CollapseExperiment e;
  e.task = in.task(e.task);
  e.k = in.get<int>("k", e.k);
  e.group_size = in.get<int>("group_size", e.group_size);
  e.temperature = in.get<double>("temperature", e.temperature);
  e.learning_rate = in.get<double>("learning_rate", e.learning_rate);
  e.steps = in.get<int>("steps", e.steps);
  e.seed = in.get<std::uint64_t>("seed", seed);
  e.eval_samples = in.get<int>("eval_samples", e.eval_samples);
  e.eval_sets = in.get<int>("eval_sets", e.eval_sets);
  e.single_mode = in.mode("single_mode", e.single_mode);
  e.multi_mode = in.mode("multi_mode", e.multi_mode);
  in.finish();
  if (reward::is_multi(e.single_mode) || !reward::is_multi(e.multi_mode)) {
    throw ConfigError(label + ": single_mode must be a single-answer mode and multi_mode a multi-answer mode");
  }
  if (e.eval_samples < 1 || e.eval_sets < 1) throw ConfigError(label + ": eval sizes must be >= 1");
  config_checked(label, [&] {
    sim::TrainConfig c;
    c.mode = e.multi_mode;
    c.k = e.k;
    c.group_size = e.group_size;
    c.temperature = e.temperature;
    c.learning_rate = e.learning_rate;
    c.steps = e.steps;
    c.Check(e.task);
    return 0;
  });
  return {"collapse_vs_multi", label, [e, label](const std::filesystem::path& out) {
            const sim::CollapseResult r = sim::run_collapse_vs_multi(e);
            SimulateResult result;
            csv::Table summary({"mode", "k", "eval_samples", "distinct_answers", "coverage_mean",
                                "unique_correct", "final_entropy"});
            csv::Table metrics(with_prefix({"mode"}, kMetricsColumns));
            for (const sim::CollapseArm* arm : {&r.single, &r.multi}) {
              const std::string mode(reward::to_string(arm->mode));
              const auto stats_path = out / ("stats_" + label + "_" + mode + ".csv");
              stats_table(arm->stats).write(stats_path);
              result.files.push_back(stats_path);
              sim::PolicyParams final_policy = arm->policy;
              summary.add_row({mode, std::to_string(arm->k), std::to_string(e.eval_samples),
                               std::to_string(arm->distinct_answers),
                               csv::num(arm->eval.coverage_mean), csv::num(arm->eval.unique_correct),
                               csv::num(sim::answer_entropy(final_policy, e.temperature))});
              metrics.add_row(with_prefix({mode}, metrics_cells(calib::summarize(arm->eval.records))));
              result.summary.push_back(label + " " + mode + ": distinct answers over " +
                                       std::to_string(e.eval_samples) + " samples = " +
                                       std::to_string(arm->distinct_answers) +
                                       ", coverage_mean = " + csv::num(arm->eval.coverage_mean));
            }
            for (auto& [name, table] : {std::pair{label + "_summary.csv", &summary},
                                        std::pair{"metrics_" + label + ".csv", &metrics}}) {
              table->write(out / name);
              result.files.push_back(out / name);
            }
            return result;
          }};
}

PlannedExperiment plan_k_sweep(ExperimentReader& in, const std::string& label,
                               std::uint64_t seed) {
  sim::KSweepExperiment e;
  e.task = in.task(e.task);
  e.k_values = in.get<std::vector<int>>("k_values", e.k_values);
  e.base.mode = in.mode("mode", reward::RewardMode::kRlvrMulti);
  e.base.group_size = in.get<int>("group_size", e.base.group_size);
  e.base.temperature = in.get<double>("temperature", e.base.temperature);
  e.base.learning_rate = in.get<double>("learning_rate", e.base.learning_rate);
  e.base.steps = in.get<int>("steps", e.base.steps);
  e.base.seed = in.get<std::uint64_t>("seed", seed);
  e.eval_sets = in.get<int>("eval_sets", e.eval_sets);
  in.finish();
  if (!reward::is_multi(e.base.mode)) throw ConfigError(label + ": k_sweep needs a multi-answer mode");
  if (e.k_values.empty()) throw ConfigError(label + ": k_values is empty");
  if (e.eval_sets < 1) throw ConfigError(label + ": eval_sets must be >= 1");
  config_checked(label, [&] {
    for (int k : e.k_values) {
      sim::TrainConfig c = e.base;
      c.k = k;
      c.Check(e.task);
    }
    return 0;
  });
  return {"k_sweep", label, [e, label](const std::filesystem::path& out) {
            const std::vector<sim::SweepRow> rows = sim::run_k_sweep(e);
            SimulateResult result;
            csv::Table summary({"k", "unique_correct", "coverage_mean"});
            for (const sim::SweepRow& row : rows) {
              const auto path = out / ("stats_" + label + "_k" + std::to_string(row.k) + ".csv");
              stats_table(row.stats).write(path);
              result.files.push_back(path);
              summary.add_row({std::to_string(row.k), csv::num(row.unique_correct),
                               csv::num(row.coverage_mean)});
              result.summary.push_back(label + " k=" + std::to_string(row.k) +
                                       ": unique_correct = " + csv::num(row.unique_correct));
            }
            summary.write(out / (label + "_summary.csv"));
            result.files.push_back(out / (label + "_summary.csv"));
            return result;
          }};
}

PlannedExperiment plan_calibration(ExperimentReader& in, const std::string& label,
                                   std::uint64_t seed) {
  sim::CalibrationExperiment e;
  e.task = in.task(e.task);
  e.k = in.get<int>("k", e.k);
  e.group_size = in.get<int>("group_size", e.group_size);
  e.temperature = in.get<double>("temperature", e.temperature);
  e.learning_rate = in.get<double>("learning_rate", e.learning_rate);
  e.steps = in.get<int>("steps", e.steps);
  e.seed = in.get<std::uint64_t>("seed", seed);
  e.eval_sets = in.get<int>("eval_sets", e.eval_sets);
  e.mode = in.mode("mode", e.mode);
  in.finish();
  if (!reward::is_calibrated(e.mode)) throw ConfigError(label + ": needs a calibrated mode");
  if (e.eval_sets < 1) throw ConfigError(label + ": eval_sets must be >= 1");
  config_checked(label, [&] {
    sim::TrainConfig c;
    c.mode = e.mode;
    c.k = e.k;
    c.group_size = e.group_size;
    c.temperature = e.temperature;
    c.learning_rate = e.learning_rate;
    c.steps = e.steps;
    c.Check(e.task);
    std::set<double> levels;
    for (int id : e.task.gold_ids) {
      auto it = e.task.noise.find(id);
      levels.insert(it == e.task.noise.end() ? 1.0 : it->second);
    }
    if (levels.size() != 1) throw std::invalid_argument("gold answers need one shared noise_p");
    return 0;
  });
  return {"calibration_convergence", label, [e, label](const std::filesystem::path& out) {
            const sim::CalibrationResult r = sim::run_calibration_convergence(e);
            SimulateResult result;
            const auto stats_path = out / ("stats_" + label + ".csv");
            stats_table(r.stats).write(stats_path);
            result.files.push_back(stats_path);

            csv::Table summary({"mode", "k", "target_p", "mean_confidence", "mean_brier",
                                "brier_floor", "coverage_mean"});
            summary.add_row({std::string(reward::to_string(e.mode)), std::to_string(e.k),
                             csv::num(r.target_p), csv::num(r.eval.mean_confidence),
                             csv::num(r.eval.mean_brier), csv::num(r.brier_floor),
                             csv::num(r.eval.coverage_mean)});
            summary.write(out / (label + "_summary.csv"));
            result.files.push_back(out / (label + "_summary.csv"));

            csv::Table curve({"bin_lo", "bin_hi", "count", "mean_conf", "mean_acc"});
            for (const auto& bin : calib::reliability_curve(calib::pooled_points(r.eval.records))) {
              if (bin.count == 0) continue;
              curve.add_row({csv::num(bin.lo), csv::num(bin.hi), std::to_string(bin.count),
                             csv::num(bin.mean_conf), csv::num(bin.mean_acc)});
            }
            curve.write(out / ("reliability_" + label + ".csv"));
            result.files.push_back(out / ("reliability_" + label + ".csv"));

            csv::Table metrics(kMetricsColumns);
            metrics.add_row(metrics_cells(calib::summarize(r.eval.records)));
            metrics.write(out / ("metrics_" + label + ".csv"));
            result.files.push_back(out / ("metrics_" + label + ".csv"));

            result.summary.push_back(label + ": mean confidence = " +
                                     csv::num(r.eval.mean_confidence) + " (target " +
                                     csv::num(r.target_p) + "), mean Multi-Brier = " +
                                     csv::num(r.eval.mean_brier) + " (floor " +
                                     csv::num(r.brier_floor) + ")");
            return result;
          }};
}

}  // namespace

// ---- records --------------------------------------------------------------

tagparse::TagSchema DumpRecord::generation_schema() const {
  if (mode == tagparse::AnswerMode::kMulti) return tagparse::TagSchema::Multi(k, calibrated, n_regime);
  return tagparse::TagSchema::Single(calibrated, n_regime);
}

calib::SetSource DumpRecord::source() const {
  return mode == tagparse::AnswerMode::kMulti ? calib::SetSource::kMultiOneGeneration
                                              : calib::SetSource::kSingleKSamples;
}

DumpRecord parse_record_line(std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw InputError("record is not an object");

  DumpRecord r;
  r.id = field<std::string>(obj, "id");
  r.method = field<std::string>(obj, "method");
  const std::string mode = field<std::string>(obj, "mode");
  auto parsed_mode = tagparse::parse_answer_mode(mode);
  if (!parsed_mode) throw InputError("mode must be 'single' or 'multi', got '" + mode + "'");
  r.mode = *parsed_mode;
  r.calibrated = field<bool>(obj, "calibrated");
  r.k = field<int>(obj, "k");
  if (r.k < 1) throw InputError("k must be >= 1");

  const json gens = obj.contains("generations") ? obj.at("generations") : json();
  if (!gens.is_array()) throw InputError("field 'generations' must be an array");
  for (const json& g : gens) {
    if (!g.is_object()) throw InputError("generation entries must be objects");
    Generation gen;
    gen.text = field<std::string>(g, "text");
    if (!g.contains("token_count") || !g.at("token_count").is_number_integer() ||
        g.at("token_count").get<std::int64_t>() < 0) {
      throw InputError("token_count must be a nonnegative integer");
    }
    gen.token_count = g.at("token_count").get<std::uint64_t>();
    r.generations.push_back(std::move(gen));
  }
  if (r.mode == tagparse::AnswerMode::kMulti && r.generations.size() != 1) {
    throw InputError("mode=multi requires exactly 1 generation, found " +
                     std::to_string(r.generations.size()));
  }
  if (r.mode == tagparse::AnswerMode::kSingle && r.generations.size() != static_cast<std::size_t>(r.k)) {
    throw InputError("mode=single requires k=" + std::to_string(r.k) + " generations, found " +
                     std::to_string(r.generations.size()));
  }

  if (!obj.contains("gold") || !obj.at("gold").is_object()) throw InputError("missing object 'gold'");
  const json& gold = obj.at("gold");
  r.gold_answers = field<std::vector<std::string>>(gold, "answers");
  const std::string regime = field<std::string>(gold, "n_regime");
  auto parsed_regime = parse_gold_regime(regime);
  if (!parsed_regime) throw InputError("n_regime must be 'single_gold' or 'multi_gold'");
  r.n_regime = *parsed_regime;
  try {
    verify::GoldSpec check(r.gold_answers);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  if (obj.contains("matcher")) {
    r.matcher = field<std::string>(obj, "matcher");
    matcher_for(r.matcher);
  }
  return r;
}

IngestResult ingest(std::istream& in) {
  IngestResult result;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      result.records.push_back(parse_record_line(line));
    } catch (const InputError& e) {
      result.errors.push_back({number, e.what()});
    }
  }
  return result;
}

IngestResult ingest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  IngestResult result = ingest(in);
  if (result.records.empty()) {
    std::string msg = path.string() + ": no valid records";
    if (!result.errors.empty()) {
      msg += " (line " + std::to_string(result.errors.front().line) + ": " +
             result.errors.front().message + ")";
    }
    throw InputError(msg);
  }
  return result;
}

void RunConfig::Check() const {
  if (bins < 1) throw ConfigError("--bins must be >= 1");
  if (ngram_n < 1) throw ConfigError("--ngram-n must be >= 1");
}

// ---- score ----------------------------------------------------------------

ScoreReport cmd_score(const std::vector<DumpRecord>& records, const RunConfig& config) {
  config.Check();
  ScoreReport report;
  const tagparse::ParseOptions parse_options{config.lenient_confidence};
  for (const DumpRecord& record : records) {
    const tagparse::TagSchema schema = record.generation_schema();
    const verify::GoldSpec gold(record.gold_answers);
    reward::ScoreOptions options;
    options.matcher = matcher_for(record.matcher);
    for (std::size_t g = 0; g < record.generations.size(); ++g) {
      const tagparse::ParsedOutput parsed =
          tagparse::parse(record.generations[g].text, schema, parse_options);
      const reward::ScoredGeneration scored = reward::score(parsed, schema, gold, options);
      report.rows.push_back(ScoreRow{record.id, record.method, g, reward::mode_for(schema),
                                     schema.k, scored.reward, scored.verdict.codes,
                                     parsed.warnings.size()});
    }
  }
  std::map<std::string, ScoreSummaryRow> by_method;
  for (const ScoreRow& row : report.rows) {
    ScoreSummaryRow& s = by_method[row.method];
    s.method = row.method;
    ++s.n_rows;
    s.mean_correctness_sum += row.reward.correctness_sum;
    s.mean_brier_penalty += row.reward.brier_penalty;
    s.mean_format_multiplier += row.reward.format_multiplier;
    s.mean_total += row.reward.total;
  }
  for (auto& [method, s] : by_method) {
    const double n = static_cast<double>(s.n_rows);
    s.mean_correctness_sum /= n;
    s.mean_brier_penalty /= n;
    s.mean_format_multiplier /= n;
    s.mean_total /= n;
    report.summary.push_back(s);
  }
  return report;
}

csv::Table ScoreReport::rows_table() const {
  csv::Table t({"id", "method", "generation", "mode", "k", "correctness_sum", "brier_penalty",
                "format_multiplier", "total", "violations", "warnings"});
  for (const ScoreRow& r : rows) {
    t.add_row({r.id, r.method, std::to_string(r.generation), std::string(reward::to_string(r.mode)),
               std::to_string(r.k), csv::num(r.reward.correctness_sum),
               csv::num(r.reward.brier_penalty), std::to_string(r.reward.format_multiplier),
               csv::num(r.reward.total), join_codes(r.codes), std::to_string(r.warnings)});
  }
  return t;
}

csv::Table ScoreReport::summary_table() const {
  csv::Table t({"method", "n_rows", "mean_correctness_sum", "mean_brier_penalty",
                "mean_format_multiplier", "mean_total"});
  for (const ScoreSummaryRow& s : summary) {
    t.add_row({s.method, std::to_string(s.n_rows), csv::num(s.mean_correctness_sum),
               csv::num(s.mean_brier_penalty), csv::num(s.mean_format_multiplier),
               csv::num(s.mean_total)});
  }
  return t;
}

void ScoreReport::write(const std::filesystem::path& out_dir) const {
  std::filesystem::create_directories(out_dir);
  rows_table().write(out_dir / "scores.csv");
  summary_table().write(out_dir / "score_summary.csv");
}

// ---- evaluate -------------------------------------------------------------

bool blocks_scoring(tagparse::ViolationCode code) {
  using tagparse::ViolationCode;
  switch (code) {
    case ViolationCode::kMissingTag:
    case ViolationCode::kTagOrder:
    case ViolationCode::kWrongCount:
    case ViolationCode::kConfNotNumeric:
    case ViolationCode::kConfOutOfRange:
      return true;
    default:
      return false;
  }
}

calib::SetRecord build_set_record(const DumpRecord& record, const RunConfig& config) {
  const tagparse::TagSchema schema = record.generation_schema();
  const verify::GoldSpec gold(record.gold_answers);
  const verify::Matcher matcher = matcher_for(record.matcher);
  const tagparse::ParseOptions parse_options{config.lenient_confidence};

  calib::SetRecord set;
  set.id = record.id;
  set.source = record.source();
  set.regime = record.n_regime;
  if (record.calibrated) set.confidences.emplace();

  for (const Generation& gen : record.generations) {
    set.token_total += gen.token_count;
    const tagparse::ParsedOutput parsed = tagparse::parse(gen.text, schema, parse_options);
    const bool blocked = std::any_of(parsed.violations.begin(), parsed.violations.end(),
                                     [](const tagparse::Violation& v) { return blocks_scoring(v.code); });
    const auto slots = static_cast<std::size_t>(schema.k);
    if (blocked) {
      for (std::size_t i = 0; i < slots; ++i) {
        set.answers.push_back(i < parsed.answers.size() ? parsed.answers[i] : std::string());
        set.correctness.bits.push_back(false);
        set.invalid.push_back(true);
        if (set.confidences) set.confidences->push_back(0.0);
      }
      continue;
    }
    const verify::CorrectnessVector bits = verify::verify_set(parsed.answers, gold, matcher);
    const auto usable = parsed.usable_confidences();
    for (std::size_t i = 0; i < slots; ++i) {
      set.answers.push_back(parsed.answers[i]);
      set.correctness.bits.push_back(bits.bits[i]);
      set.invalid.push_back(false);
      if (set.confidences) set.confidences->push_back((*usable)[i]);
    }
  }
  return set;
}

EvaluateReport cmd_evaluate(const std::vector<DumpRecord>& records, const RunConfig& config) {
  config.Check();
  EvaluateReport report;
  report.seed = config.seed;
  report.bins = config.bins;
  std::map<std::pair<std::string, std::string>, EvaluateGroup> groups;
  for (const DumpRecord& record : records) {
    EvaluateGroup& g =
        groups[{record.method, std::string(calib::to_string(record.source()))}];
    g.method = record.method;
    g.records.push_back(build_set_record(record, config));
  }
  calib::SummarizeOptions options;
  options.seed = config.seed;
  options.bins = config.bins;
  for (auto& [key, g] : groups) {
    g.report = calib::summarize(g.records, options);
    if (!g.report.calibration) {
      report.warnings.push_back(g.method + " (" + key.second +
                                "): records lack confidences; calibration fields omitted");
    }
    if (g.report.n_invalid > 0) {
      report.warnings.push_back(g.method + " (" + key.second + "): " +
                                std::to_string(g.report.n_invalid) +
                                " records with unscoreable generations counted as wrong");
    }
    report.groups.push_back(std::move(g));
  }
  return report;
}

csv::Table EvaluateReport::metrics_table() const {
  csv::Table t(with_prefix({"method"}, kMetricsColumns));
  for (const EvaluateGroup& g : groups) t.add_row(with_prefix({g.method}, metrics_cells(g.report)));
  return t;
}

csv::Table EvaluateReport::records_table() const {
  csv::Table t({"method", "source", "id", "k", "n_correct", "coverage", "any_correct",
                "selected_index", "selected_correct", "unique", "token_total", "invalid_slots",
                "set_confidence"});
  for (const EvaluateGroup& g : groups) {
    const calib::SelectionRule rule = calib::default_rule(g.report.source);
    for (const calib::SetRecord& r : g.records) {
      const std::size_t sel = calib::selection_index(r, rule, seed);
      std::vector<std::string> valid;
      std::size_t invalid = 0;
      for (std::size_t i = 0; i < r.k(); ++i) {
        if (r.invalid[i]) {
          ++invalid;
        } else {
          valid.push_back(r.answers[i]);
        }
      }
      std::optional<double> set_conf;
      if (r.confidences) set_conf = calib::set_confidence(r, r.regime);
      const std::size_t hits = r.correctness.count();
      t.add_row({g.method, std::string(calib::to_string(r.source)), r.id, std::to_string(r.k()),
                 std::to_string(hits), csv::num(static_cast<double>(hits) / static_cast<double>(r.k())),
                 hits > 0 ? "1" : "0", std::to_string(sel), r.correctness.bits[sel] ? "1" : "0",
                 std::to_string(verify::unique_count(valid)), std::to_string(r.token_total),
                 std::to_string(invalid), csv::num(set_conf)});
    }
  }
  return t;
}

csv::Table EvaluateReport::points_table() const {
  csv::Table t({"method", "source", "id", "slot", "answer", "confidence", "correct", "invalid"});
  for (const EvaluateGroup& g : groups) {
    for (const calib::SetRecord& r : g.records) {
      for (std::size_t i = 0; i < r.k(); ++i) {
        std::optional<double> q;
        if (r.confidences) q = (*r.confidences)[i];
        t.add_row({g.method, std::string(calib::to_string(r.source)), r.id, std::to_string(i),
                   r.answers[i], csv::num(q), r.correctness.bits[i] ? "1" : "0",
                   r.invalid[i] ? "1" : "0"});
      }
    }
  }
  return t;
}

csv::Table EvaluateReport::reliability_table() const {
  csv::Table t({"method", "source", "kind", "bin_lo", "bin_hi", "count", "mean_conf", "mean_acc"});
  for (const EvaluateGroup& g : groups) {
    if (!g.report.calibration) continue;
    const std::string source(calib::to_string(g.report.source));
    const calib::SelectionRule rule = calib::default_rule(g.report.source);
    const std::pair<const char*, std::vector<calib::CalibrationPoint>> kinds[] = {
        {"top1", calib::top1_points(g.records, rule, seed)},
        {"pooled", calib::pooled_points(g.records)},
        {"set", calib::set_points(g.records)}};
    for (const auto& [kind, points] : kinds) {
      for (const calib::CalibrationBin& bin : calib::reliability_curve(points, bins)) {
        if (bin.count == 0) continue;
        t.add_row({g.method, source, kind, csv::num(bin.lo), csv::num(bin.hi),
                   std::to_string(bin.count), csv::num(bin.mean_conf), csv::num(bin.mean_acc)});
      }
    }
  }
  return t;
}

csv::Table EvaluateReport::efficiency_table() const {
  csv::Table t({"multi_method", "single_method", "multi_mean_tokens", "single_mean_tokens", "ratio"});
  for (const EvaluateGroup& m : groups) {
    if (m.report.source != calib::SetSource::kMultiOneGeneration) continue;
    for (const EvaluateGroup& s : groups) {
      if (s.report.source != calib::SetSource::kSingleKSamples) continue;
      if (s.report.avg_token_total == 0.0) continue;
      t.add_row({m.method, s.method, csv::num(m.report.avg_token_total),
                 csv::num(s.report.avg_token_total),
                 csv::num(calib::token_efficiency(m.records, s.records))});
    }
  }
  return t;
}

void EvaluateReport::write(const std::filesystem::path& out_dir) const {
  std::filesystem::create_directories(out_dir);
  metrics_table().write(out_dir / "metrics.csv");
  records_table().write(out_dir / "records.csv");
  points_table().write(out_dir / "points.csv");
  reliability_table().write(out_dir / "reliability.csv");
  efficiency_table().write(out_dir / "efficiency.csv");
}

// ---- overlap --------------------------------------------------------------

OverlapReport cmd_overlap(const std::vector<DumpRecord>& records, const RunConfig& config) {
  config.Check();
  OverlapReport report;
  report.n = config.ngram_n;
  std::map<std::string, std::vector<double>> by_method;
  for (const DumpRecord& r : records) {
    if (r.mode != tagparse::AnswerMode::kSingle || r.generations.size() < 2) continue;
    std::vector<std::string> texts;
    for (const Generation& g : r.generations) texts.push_back(g.text);
    const double overlap = calib::ngram_overlap(texts, config.ngram_n);
    report.rows.push_back({r.method, r.id, texts.size(), overlap});
    by_method[r.method].push_back(overlap);
  }
  if (report.rows.empty()) {
    throw InputError("overlap: no single-mode record with at least 2 generations");
  }
  for (const auto& [method, values] : by_method) {
    double sum = 0.0;
    for (double v : values) sum += v;
    report.per_method[method] = {values.size(), sum / static_cast<double>(values.size())};
  }
  return report;
}

void OverlapReport::write(const std::filesystem::path& out_dir) const {
  std::filesystem::create_directories(out_dir);
  csv::Table rows_t({"method", "id", "n_generations", "ngram_n", "jaccard_overlap"});
  for (const OverlapRow& r : rows) {
    rows_t.add_row({r.method, r.id, std::to_string(r.n_generations), std::to_string(n),
                    csv::num(r.overlap)});
  }
  rows_t.write(out_dir / "overlap.csv");
  csv::Table summary({"method", "n_groups", "ngram_n", "mean_jaccard_overlap"});
  for (const auto& [method, agg] : per_method) {
    summary.add_row({method, std::to_string(agg.first), std::to_string(n), csv::num(agg.second)});
  }
  summary.write(out_dir / "overlap_summary.csv");
}

// ---- simulate -------------------------------------------------------------

SimulateResult cmd_simulate_text(std::string_view config_json, const RunConfig& config) {
  config.Check();
  json root;
  try {
    root = json::parse(config_json);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("experiment config must be an object");
  for (const auto& [key, value] : root.items()) {
    if (key != "seed" && key != "experiments") throw ConfigError("unknown top-level field '" + key + "'");
  }
  std::uint64_t seed = config.seed;
  if (root.contains("seed")) {
    if (!root.at("seed").is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
    seed = root.at("seed").get<std::uint64_t>();
  }
  if (!root.contains("experiments") || !root.at("experiments").is_array() ||
      root.at("experiments").empty()) {
    throw ConfigError("config needs a nonempty 'experiments' array");
  }

  std::vector<PlannedExperiment> plan;
  std::set<std::string> labels;
  for (const json& entry : root.at("experiments")) {
    if (!entry.is_object() || !entry.contains("name") || !entry.at("name").is_string()) {
      throw ConfigError("each experiment needs a string 'name'");
    }
    const std::string name = entry.at("name").get<std::string>();
    std::string label = name;
    if (entry.contains("label")) {
      if (!entry.at("label").is_string()) throw ConfigError(name + ": label must be a string");
      label = entry.at("label").get<std::string>();
    }
    if (!labels.insert(label).second) throw ConfigError("duplicate experiment label '" + label + "'");
    ExperimentReader reader(entry, label);
    if (name == "collapse_vs_multi") {
      plan.push_back(plan_collapse(reader, label, seed));
    } else if (name == "k_sweep") {
      plan.push_back(plan_k_sweep(reader, label, seed));
    } else if (name == "calibration_convergence") {
      plan.push_back(plan_calibration(reader, label, seed));
    } else {
      throw ConfigError("unknown experiment '" + name + "'");
    }
  }

  std::filesystem::create_directories(config.out_dir);
  std::vector<std::future<SimulateResult>> running;
  for (const PlannedExperiment& p : plan) {
    running.push_back(std::async(std::launch::async, p.run, config.out_dir));
  }
  SimulateResult all;
  for (auto& f : running) {
    SimulateResult r = f.get();
    all.files.insert(all.files.end(), r.files.begin(), r.files.end());
    all.summary.insert(all.summary.end(), r.summary.begin(), r.summary.end());
  }
  return all;
}

SimulateResult cmd_simulate(const std::filesystem::path& config_path, const RunConfig& config) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw ConfigError("cannot read experiment config " + config_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return cmd_simulate_text(buf.str(), config);
}

}  // namespace multians::harness
