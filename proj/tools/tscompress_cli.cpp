#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tscompress/harness.hpp"

namespace fs = std::filesystem;
using namespace tscompress;

namespace {

constexpr int kOk = 0;
constexpr int kFatal = 1;
constexpr int kPartial = 2;

ExperimentConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  for (const auto& o : overrides) apply_override(config, o);
  return config;
}

// Records belonging to the config stored in output_dir, or all records when none is stored.
std::vector<ResultRecord> records_for(const fs::path& output_dir) {
  auto records = load_records(output_dir);
  const auto ini = output_dir / "config.ini";
  if (!fs::exists(ini)) return records;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(load_config(ini))));
  std::erase_if(records, [&](const ResultRecord& r) { return r.config_hash != buf; });
  return records;
}

void print_bundle(const ReportBundle& bundle) {
  for (const auto& f : bundle.files) std::cout << "wrote " << f.string() << '\n';
  for (const auto& n : bundle.notices) std::cout << "note: " << n << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forecast ensemble compression experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  ReportOptions report_options;

  auto* ingest = app.add_subcommand("ingest", "Validate a series corpus");
  std::string ingest_path;
  std::size_t min_length = 1000;
  ingest->add_option("path", ingest_path, "CSV file or directory")->required();
  ingest->add_option("--min-length", min_length, "Minimum series length");

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  bool skip_report = false;
  run->add_option("-c,--config", config_path, "Config file (key = value)");
  run->add_option("-s,--set", overrides, "Override a config entry, key=value");
  run->add_flag("--no-report", skip_report, "Do not emit the report bundle");

  auto* report = app.add_subcommand("report", "Emit rank, Bayes and cost tables from stored records");
  report->add_option("-o,--output-dir", output_dir, "Experiment output directory")->required();
  report->add_option("--rope-lo", report_options.rope.lo, "ROPE lower bound (%)");
  report->add_option("--rope-hi", report_options.rope.hi, "ROPE upper bound (%)");
  report->add_option("--samples", report_options.mc_samples, "Monte Carlo samples");
  report->add_option("--seed", report_options.seed, "Sampler seed");

  auto* bayes = app.add_subcommand("bayes", "Bayes sign test between two method labels");
  std::string method_a, method_b;
  bayes->add_option("-o,--output-dir", output_dir, "Experiment output directory")->required();
  bayes->add_option("a", method_a, "Method label a")->required();
  bayes->add_option("b", method_b, "Method label b")->required();
  bayes->add_option("--rope-lo", report_options.rope.lo, "ROPE lower bound (%)");
  bayes->add_option("--rope-hi", report_options.rope.hi, "ROPE upper bound (%)");
  bayes->add_option("--samples", report_options.mc_samples, "Monte Carlo samples");
  bayes->add_option("--prior", report_options.prior_strength, "Prior pseudo-count on the ROPE");
  bayes->add_option("--seed", report_options.seed, "Sampler seed");

  auto* profile = app.add_subcommand("profile", "Cost-only run: one repetition, cost ratio tables");
  profile->add_option("-c,--config", config_path, "Config file (key = value)");
  profile->add_option("-s,--set", overrides, "Override a config entry, key=value");

  auto* synth = app.add_subcommand("synth", "Write the synthetic regime-switching corpus");
  std::string synth_dir;
  SyntheticOptions synth_options;
  synth->add_option("-o,--out", synth_dir, "Destination directory")->required();
  synth->add_option("--count", synth_options.count, "Number of series");
  synth->add_option("--length", synth_options.length, "Points per series");
  synth->add_option("--seed", synth_options.seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      Corpus corpus;
      try {
        corpus = load_corpus(ingest_path, min_length, &std::cerr);
      } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFatal;
      }
      for (const auto& s : corpus.series) {
        std::cout << s.id() << ',' << s.size() << ',' << (s.period() ? std::to_string(*s.period()) : "") << '\n';
      }
      std::cerr << corpus.series.size() << " accepted, " << corpus.rejected.size() << " rejected\n";
      return kOk;
    }

    if (*run || *profile) {
      auto config = build_config(config_path, overrides);
      if (*profile) {
        config.reps = 1;
        config.profile = true;
        config.output_dir /= "profile";
      }
      const auto summary = run_experiment(config, &std::cerr);
      if (!summary.records.empty() && (!skip_report || *profile)) {
        const auto bundle = emit_report(summary.records, config.output_dir, report_options);
        print_bundle(bundle);
        if (*profile) std::cout << std::ifstream(config.output_dir / "report" / "cost_summary.csv").rdbuf();
      }
      return summary.failures.empty() ? kOk : kPartial;
    }

    if (*report) {
      const auto records = records_for(output_dir);
      if (records.empty()) {
        std::cerr << "error: no records under " << output_dir << '\n';
        return kFatal;
      }
      print_bundle(emit_report(records, output_dir, report_options));
      return kOk;
    }

    if (*bayes) {
      const auto records = records_for(output_dir);
      const auto diffs = paired_differences(records, method_a, method_b);
      if (diffs.empty()) {
        std::cerr << "error: no series scored by both '" << method_a << "' and '" << method_b << "'\n";
        return kFatal;
      }
      nlohmann::json j = bayes_sign_test(diffs, report_options.rope, report_options.mc_samples,
                                         report_options.prior_strength, report_options.seed);
      j["method_a"] = method_a;
      j["method_b"] = method_b;
      std::cout << j.dump(2) << '\n';
      return kOk;
    }

    if (*synth) {
      const auto series = synthetic_suite(synth_options);
      write_corpus(synth_dir, series);
      std::cout << "wrote " << series.size() << " series to " << synth_dir << '\n';
      return kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFatal;
  }
  return kOk;
}
