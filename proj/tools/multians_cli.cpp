#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "multians/harness.hpp"

namespace {

using namespace multians::harness;

void print_ingest_errors(const IngestResult& ingest) {
  for (const LineError& e : ingest.errors) {
    std::cerr << "warning: line " << e.line << " skipped: " << e.message << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multians: parse, score and evaluate multi-answer generations"};
  app.require_subcommand(1);

  RunConfig config;
  std::string out_dir = ".";
  std::string input;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", config.seed, "Seed for random selection and simulation");
    cmd->add_option("--out", out_dir, "Output directory");
  };

  CLI::App* score = app.add_subcommand("score", "Per-generation rewards for a JSONL dump");
  score->add_option("input", input, "Generation dump (JSONL)")->required();
  score->add_flag("--lenient-confidence", config.lenient_confidence,
                  "Rescale confidences given as percentages");
  add_common(score);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Set-level metrics for a JSONL dump");
  evaluate->add_option("input", input, "Generation dump (JSONL)")->required();
  evaluate->add_option("--bins", config.bins, "Number of ECE bins");
  evaluate->add_flag("--lenient-confidence", config.lenient_confidence,
                     "Rescale confidences given as percentages");
  add_common(evaluate);

  CLI::App* overlap = app.add_subcommand("overlap", "N-gram overlap across single-answer samples");
  overlap->add_option("input", input, "Generation dump (JSONL)")->required();
  overlap->add_option("--ngram-n", config.ngram_n, "N-gram length");
  add_common(overlap);

  CLI::App* simulate = app.add_subcommand("simulate", "Run toy-policy training experiments");
  simulate->add_option("config", input, "Experiment config (JSON)")->required();
  add_common(simulate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  config.out_dir = out_dir;

  try {
    config.Check();
    if (score->parsed()) {
      const IngestResult data = ingest(std::filesystem::path(input));
      print_ingest_errors(data);
      const ScoreReport report = cmd_score(data.records, config);
      report.write(config.out_dir);
      std::cout << report.summary_table().str();
    } else if (evaluate->parsed()) {
      const IngestResult data = ingest(std::filesystem::path(input));
      print_ingest_errors(data);
      const EvaluateReport report = cmd_evaluate(data.records, config);
      report.write(config.out_dir);
      for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << report.metrics_table().str();
    } else if (overlap->parsed()) {
      const IngestResult data = ingest(std::filesystem::path(input));
      print_ingest_errors(data);
      const OverlapReport report = cmd_overlap(data.records, config);
      report.write(config.out_dir);
      for (const auto& [method, agg] : report.per_method) {
        std::cout << method << ": mean overlap " << multians::csv::num(agg.second) << " over "
                  << agg.first << " groups\n";
      }
    } else if (simulate->parsed()) {
      const SimulateResult result = cmd_simulate(std::filesystem::path(input), config);
      for (const std::string& line : result.summary) std::cout << line << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
