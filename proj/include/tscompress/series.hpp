#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace tscompress {

/// Univariate series of finite observations.
class TimeSeries {
 public:
  TimeSeries() = default;
  /// Throws std::invalid_argument when a value is not finite or the period is not positive.
  TimeSeries(std::string id, std::vector<double> values, std::optional<int> period = std::nullopt);

  const std::string& id() const { return id_; }
  std::span<const double> values() const { return values_; }
  std::optional<int> period() const { return period_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::string id_;
  std::vector<double> values_;
  std::optional<int> period_;
};

/// Half-open interval [begin, end) of row indices.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Auto-regressive supervised view of a series.
///
/// Row i holds the p values preceding target i, newest lag first:
/// features(i, j) = y[p + i - 1 - j] and targets(i) = y[p + i] (0-based).
/// row_ids carry each row's position in the full embedding so subsets keep
/// their provenance; fitted models fingerprint them for leakage checks.
struct EmbeddedDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;
  int lag_order = 0;
  std::vector<std::size_t> row_ids;

  std::size_t rows() const { return static_cast<std::size_t>(targets.size()); }
  std::size_t width() const { return static_cast<std::size_t>(features.cols()); }

  EmbeddedDataset slice(IndexRange range) const;
  EmbeddedDataset select(std::span<const std::size_t> rows) const;
};

struct HoldoutSplit {
  IndexRange train;
  IndexRange test;
  friend bool operator==(const HoldoutSplit&, const HoldoutSplit&) = default;
};

struct HoldoutPlan {
  std::vector<HoldoutSplit> repetitions;
  std::uint64_t seed = 0;
  friend bool operator==(const HoldoutPlan&, const HoldoutPlan&) = default;
};

/// Growing-window fold: train on every block before `predict`.
struct PrequentialFold {
  IndexRange train;
  IndexRange predict;
  friend bool operator==(const PrequentialFold&, const PrequentialFold&) = default;
};

struct PrequentialPlan {
  std::vector<IndexRange> blocks;
  std::vector<PrequentialFold> folds;
};

EmbeddedDataset embed(const TimeSeries& series, int lag_order);

/// Random-origin holdout. Each cut point c is drawn uniformly from
/// [floor(train_frac*n), n - floor(test_frac*n)]; the train segment is the
/// floor(train_frac*n) rows before c and the test segment the
/// floor(test_frac*n) rows from c onward.
HoldoutPlan repeated_holdout(std::size_t n_rows, std::size_t reps, double train_frac,
                             double test_frac, std::uint64_t seed);

/// Contiguous near-equal blocks (larger blocks first); one fold per block after the first.
PrequentialPlan blocked_prequential(std::size_t n_rows, std::size_t n_blocks);

/// Mean absolute one-step difference; the MASE denominator.
double naive_scale(std::span<const double> train_targets);

/// Reads a one-column CSV (optional `value` header). A sidecar `<stem>.json`
/// may supply `id` and `period`. Non-finite or empty cells throw with the row number.
TimeSeries read_series_csv(const std::filesystem::path& path);
void write_series_csv(const std::filesystem::path& path, const TimeSeries& series);

void to_json(nlohmann::json& j, const IndexRange& r);
void from_json(const nlohmann::json& j, IndexRange& r);
void to_json(nlohmann::json& j, const HoldoutPlan& plan);
void from_json(const nlohmann::json& j, HoldoutPlan& plan);
void to_json(nlohmann::json& j, const PrequentialPlan& plan);

}  // namespace tscompress
