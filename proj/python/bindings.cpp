#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "multians/calib.hpp"
#include "multians/harness.hpp"
#include "multians/reward.hpp"
#include "multians/sim.hpp"
#include "multians/tagparse.hpp"
#include "multians/verify.hpp"

namespace py = pybind11;
using namespace multians;

namespace {

std::vector<calib::CalibrationPoint> to_points(const std::vector<std::pair<double, bool>>& raw) {
  std::vector<calib::CalibrationPoint> points;
  points.reserve(raw.size());
  for (const auto& [q, bit] : raw) points.push_back({q, bit});
  return points;
}

py::dict breakdown_dict(const reward::RewardBreakdown& b) {
  py::dict d;
  d["correctness_sum"] = b.correctness_sum;
  d["brier_penalty"] = b.brier_penalty;
  d["format_multiplier"] = b.format_multiplier;
  d["total"] = b.total;
  return d;
}

harness::RunConfig run_config(std::uint64_t seed, std::size_t bins, std::size_t ngram_n,
                              bool lenient, const std::string& out_dir) {
  harness::RunConfig c;
  c.seed = seed;
  c.bins = bins;
  c.ngram_n = ngram_n;
  c.lenient_confidence = lenient;
  c.out_dir = out_dir;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-answer parsing, rewards, calibration metrics and toy training";

  py::register_exception<harness::InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<calib::ComparabilityError>(m, "ComparabilityError", PyExc_ValueError);

  py::enum_<GoldRegime>(m, "GoldRegime")
      .value("SINGLE_GOLD", GoldRegime::kSingleGold)
      .value("MULTI_GOLD", GoldRegime::kMultiGold);

  py::class_<tagparse::TagSchema>(m, "TagSchema")
      .def_static("single", &tagparse::TagSchema::Single, py::arg("calibrated"),
                  py::arg("regime") = GoldRegime::kSingleGold)
      .def_static("multi", &tagparse::TagSchema::Multi, py::arg("k"), py::arg("calibrated"),
                  py::arg("regime"))
      .def_readonly("k", &tagparse::TagSchema::k)
      .def_readonly("calibrated", &tagparse::TagSchema::calibrated)
      .def_readonly("regime", &tagparse::TagSchema::n_regime);

  py::class_<tagparse::ParsedOutput>(m, "ParsedOutput")
      .def_readonly("think", &tagparse::ParsedOutput::think)
      .def_readonly("answers", &tagparse::ParsedOutput::answers)
      .def_readonly("confidences", &tagparse::ParsedOutput::confidences)
      .def_readonly("analysis", &tagparse::ParsedOutput::analysis)
      .def_readonly("warnings", &tagparse::ParsedOutput::warnings)
      .def_property_readonly("violations", [](const tagparse::ParsedOutput& p) {
        std::vector<std::string> codes;
        for (const auto& v : p.violations) codes.emplace_back(tagparse::to_string(v.code));
        return codes;
      });

  m.def(
      "parse",
      [](const std::string& text, const tagparse::TagSchema& schema, bool lenient) {
        return tagparse::parse(text, schema, tagparse::ParseOptions{lenient});
      },
      py::arg("text"), py::arg("schema"), py::arg("lenient_confidence") = false);
  m.def(
      "canonicalize", [](const std::string& s) { return tagparse::canonicalize(s); }, py::arg("text"));
  m.def(
      "validate_format",
      [](const tagparse::ParsedOutput& parsed, const tagparse::TagSchema& schema) {
        const auto verdict = tagparse::validate_format(parsed, schema);
        std::vector<std::string> codes;
        for (auto c : verdict.codes) codes.emplace_back(tagparse::to_string(c));
        return py::make_tuple(verdict.ok, codes);
      },
      py::arg("parsed"), py::arg("schema"));
  m.def(
      "render",
      [](const std::vector<std::string>& answers, const std::vector<double>& confidences,
         const tagparse::TagSchema& schema) { return tagparse::render(answers, confidences, schema); },
      py::arg("answers"), py::arg("confidences"), py::arg("schema"));

  py::class_<verify::GoldSpec>(m, "GoldSpec")
      .def(py::init([](const std::vector<std::string>& answers) { return verify::GoldSpec(answers); }),
           py::arg("answers"))
      .def_property_readonly("answers", &verify::GoldSpec::answers)
      .def_property_readonly("n", &verify::GoldSpec::n);

  m.def(
      "verify_set",
      [](const std::vector<std::string>& answers, const verify::GoldSpec& gold) {
        return verify::verify_set(answers, gold).bits;
      },
      py::arg("answers"), py::arg("gold"));
  m.def(
      "unique_count", [](const std::vector<std::string>& a) { return verify::unique_count(a); },
      py::arg("answers"));

  m.def("r_correct", &reward::r_correct, py::arg("answer"), py::arg("gold"));
  m.def("r_rlcr_single", &reward::r_rlcr_single, py::arg("answer"), py::arg("q"), py::arg("gold"));
  m.def(
      "r_rlvr_multi",
      [](const std::vector<std::string>& a, const verify::GoldSpec& g) { return reward::r_rlvr_multi(a, g); },
      py::arg("answers"), py::arg("gold"));
  m.def(
      "multi_brier",
      [](const std::vector<std::string>& a, const std::vector<double>& q, const verify::GoldSpec& g) {
        return reward::multi_brier(a, q, g);
      },
      py::arg("answers"), py::arg("confidences"), py::arg("gold"));
  m.def(
      "r_rlcr_multi",
      [](const std::vector<std::string>& a, const std::vector<double>& q, const verify::GoldSpec& g) {
        return reward::r_rlcr_multi(a, q, g);
      },
      py::arg("answers"), py::arg("confidences"), py::arg("gold"));
  m.def(
      "score",
      [](const std::string& text, const tagparse::TagSchema& schema, const verify::GoldSpec& gold,
         bool lenient, double format_bonus) {
        reward::ScoreOptions opts;
        opts.format_bonus = format_bonus;
        const auto parsed = tagparse::parse(text, schema, tagparse::ParseOptions{lenient});
        return breakdown_dict(reward::score(parsed, schema, gold, opts).reward);
      },
      py::arg("text"), py::arg("schema"), py::arg("gold"), py::arg("lenient_confidence") = false,
      py::arg("format_bonus") = 0.0);

  m.def(
      "brier", [](const std::vector<std::pair<double, bool>>& p) { return calib::brier(to_points(p)); },
      py::arg("points"));
  m.def(
      "ece",
      [](const std::vector<std::pair<double, bool>>& p, std::size_t bins) {
        return calib::ece(to_points(p), bins);
      },
      py::arg("points"), py::arg("bins") = 10);
  m.def(
      "set_confidence",
      [](const std::vector<double>& q, GoldRegime regime) { return calib::set_confidence(q, regime); },
      py::arg("confidences"), py::arg("regime"));
  m.def(
      "ngram_overlap",
      [](const std::vector<std::string>& texts, std::size_t n) { return calib::ngram_overlap(texts, n); },
      py::arg("texts"), py::arg("n") = 4);

  m.def(
      "grpo_advantages", [](const std::vector<double>& r) { return sim::grpo_advantages(r); },
      py::arg("rewards"));

  m.def(
      "score_file",
      [](const std::string& path, const std::string& out_dir, bool lenient) {
        const auto config = run_config(0, 10, 4, lenient, out_dir);
        const auto data = harness::ingest(std::filesystem::path(path));
        harness::cmd_score(data.records, config).write(config.out_dir);
        return data.errors.size();
      },
      py::arg("path"), py::arg("out_dir"), py::arg("lenient_confidence") = false,
      "Writes scores.csv and score_summary.csv; returns the number of skipped lines.");
  m.def(
      "evaluate_file",
      [](const std::string& path, const std::string& out_dir, std::uint64_t seed, std::size_t bins,
         bool lenient) {
        const auto config = run_config(seed, bins, 4, lenient, out_dir);
        const auto data = harness::ingest(std::filesystem::path(path));
        const auto report = harness::cmd_evaluate(data.records, config);
        report.write(config.out_dir);
        return report.warnings;
      },
      py::arg("path"), py::arg("out_dir"), py::arg("seed") = 0, py::arg("bins") = 10,
      py::arg("lenient_confidence") = false, "Writes the evaluate reports; returns warnings.");
  m.def(
      "overlap_file",
      [](const std::string& path, const std::string& out_dir, std::size_t n) {
        const auto config = run_config(0, 10, n, false, out_dir);
        const auto data = harness::ingest(std::filesystem::path(path));
        const auto report = harness::cmd_overlap(data.records, config);
        report.write(config.out_dir);
        std::map<std::string, double> means;
        for (const auto& [method, agg] : report.per_method) means[method] = agg.second;
        return means;
      },
      py::arg("path"), py::arg("out_dir"), py::arg("n") = 4);
  m.def(
      "simulate",
      [](const std::string& config_json, const std::string& out_dir, std::uint64_t seed) {
        py::gil_scoped_release release;
        const auto result = harness::cmd_simulate_text(config_json, run_config(seed, 10, 4, false, out_dir));
        return result.summary;
      },
      py::arg("config_json"), py::arg("out_dir"), py::arg("seed") = 0);
}
