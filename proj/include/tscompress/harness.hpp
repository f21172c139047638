#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tscompress/combiners.hpp"
#include "tscompress/compression.hpp"
#include "tscompress/evaluation.hpp"
#include "tscompress/learners.hpp"
#include "tscompress/series.hpp"

namespace tscompress {

inline constexpr const char* kCodeVersion = "1.0.0";

struct ExperimentConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path output_dir = "results";
  std::size_t min_length = 1000;
  int lag = 15;
  std::size_t reps = 10;
  double train_frac = 0.6;
  double test_frac = 0.1;
  std::uint64_t seed = 1;

  /// Ids from default_portfolio_specs; empty selects all of them.
  std::vector<std::string> portfolio;
  std::vector<CombinerKind> combiners = all_combiner_kinds();
  /// Portfolio ids or family names (family defaults, id = family name).
  std::vector<std::string> students = {"model-tree"};
  std::vector<TeachingStrategy> strategies = {TeachingStrategy::resubstitution};
  std::size_t prequential_blocks = 10;

  std::size_t lambda = 50;
  double eta = 1.0;
  double alpha = 0.05;
  double forgetting = 0.9;
  double ridge_penalty = 1.0;
  double trim_keep = 0.5;

  bool raw_controls = true;
  bool baselines = true;
  bool profile = true;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// `key = value` lines; `#` starts a comment; lists are comma separated.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string format_config(const ExperimentConfig& config);
/// Applies one `key=value` override. Throws std::invalid_argument on unknown keys or bad values.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Hash of every setting that can change a score. Output and corpus locations
/// and the method lists are not hashed; adding a method leaves earlier records reusable.
std::uint64_t config_hash(const ExperimentConfig& config);

std::vector<LearnerSpec> resolve_portfolio(const ExperimentConfig& config);
LearnerSpec resolve_student(const ExperimentConfig& config, const std::string& name);
CombinerConfig combiner_config(const ExperimentConfig& config, CombinerKind kind);

enum class MethodRole { teacher, student, raw_control, baseline };

/// Method labels: teachers use the combiner name ("ADE"), students
/// "ST.<Teacher>/<student>" (resubstitution) or "ST[oob].<Teacher>/<student>",
/// raw-target controls the student name, baselines "naive", "snaive", "ses".
struct MethodLabel {
  MethodRole role = MethodRole::baseline;
  std::optional<CombinerKind> teacher;
  std::string student;
  TeachingStrategy strategy = TeachingStrategy::resubstitution;
  std::string baseline;

  friend bool operator==(const MethodLabel&, const MethodLabel&) = default;
};

std::string format_label(const MethodLabel& label);
MethodLabel parse_label(const std::string& text);

/// Every label the config produces for one series and repetition.
std::vector<std::string> method_labels(const ExperimentConfig& config);

struct CorpusIssue {
  std::filesystem::path file;
  std::string reason;
};

struct Corpus {
  std::vector<TimeSeries> series;
  std::vector<CorpusIssue> rejected;
};

/// Reads a CSV file or every *.csv in a directory (sorted by name). Files that
/// fail to parse or fall below `min_length` are listed in `rejected`.
/// Throws std::runtime_error("empty corpus") when nothing is accepted.
Corpus load_corpus(const std::filesystem::path& path, std::size_t min_length, std::ostream* log = nullptr);

struct SyntheticOptions {
  std::size_t count = 20;
  std::size_t length = 600;
  std::uint64_t seed = 7;
};

/// AR(2) series with Markov regime switches and a seasonal component.
std::vector<TimeSeries> synthetic_suite(const SyntheticOptions& options);
void write_corpus(const std::filesystem::path& dir, std::span<const TimeSeries> series);

/// Fingerprint of a fitted artifact, tagged with what was fitted.
struct ArtifactFingerprint {
  std::string artifact;
  TrainFingerprint fingerprint;
};

struct ResultRecord {
  std::string method;
  std::string series;
  std::size_t repetition = 0;
  double mase = 0.0;
  CostProfile cost;
  IndexRange train;
  IndexRange test;
  std::vector<ArtifactFingerprint> artifacts;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string code_version = kCodeVersion;
};

void to_json(nlohmann::json& j, const ResultRecord& r);
void from_json(const nlohmann::json& j, ResultRecord& r);

/// True when every artifact was fitted strictly inside the train range and the
/// train range ends before the test range.
bool leakage_free(const ResultRecord& record);

/// Stable file stem of a record: config hash, series content, repetition and label.
std::string record_key(std::uint64_t config_hash, const TimeSeries& series, std::size_t repetition,
                       const std::string& method);

struct RunFailure {
  std::string method;
  std::string series;
  std::size_t repetition = 0;
  std::string reason;
};

struct RunSummary {
  std::vector<ResultRecord> records;
  std::size_t computed = 0;
  std::size_t reused = 0;
  std::vector<RunFailure> failures;
  std::vector<CorpusIssue> rejected;
};

/// Splits each series, fits the portfolio and every teacher, distills every
/// (teacher, student, strategy) triple and scores all methods on the test rows.
/// Records already present under output_dir/records are loaded, not recomputed.
RunSummary run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);
RunSummary run_experiment(const ExperimentConfig& config, std::span<const TimeSeries> corpus,
                          std::ostream* log = nullptr);

std::vector<ResultRecord> load_records(const std::filesystem::path& output_dir);

ScoreMatrix score_matrix(std::span<const ResultRecord> records);

/// Per-series percentage differences between two methods, MASE averaged over
/// repetitions first; series missing either method are skipped.
std::vector<double> paired_differences(std::span<const ResultRecord> records, const std::string& a,
                                       const std::string& b);

struct ReportOptions {
  Rope rope;
  std::size_t mc_samples = 100000;
  double prior_strength = 1.0;
  std::uint64_t seed = 1;
};

struct ReportBundle {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> notices;
};

/// Writes rank, Bayes, cost and teaching-strategy tables (CSV) and SVG charts
/// into output_dir/report. Throws std::invalid_argument on empty input.
ReportBundle emit_report(std::span<const ResultRecord> records, const std::filesystem::path& output_dir,
                         const ReportOptions& options = {});

}  // namespace tscompress
