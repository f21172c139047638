#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tscompress/combiners.hpp"
#include "tscompress/learners.hpp"

namespace tscompress {

/// mean(|prediction - actual|) / scale. Throws std::domain_error when scale <= 0.
double mase(std::span<const double> predictions, std::span<const double> actuals, double scale);

/// One evaluation task: a series under one holdout repetition.
struct ScoreColumn {
  std::string series;
  std::size_t repetition = 0;
  auto operator<=>(const ScoreColumn&) const = default;
};

/// Method x column MASE table. Unscored cells are absent, never zero.
class ScoreMatrix {
 public:
  /// Throws std::invalid_argument for negative or non-finite scores.
  void set(const std::string& method, const ScoreColumn& column, double mase);
  std::optional<double> get(const std::string& method, const ScoreColumn& column) const;

  const std::vector<std::string>& methods() const { return methods_; }
  std::vector<ScoreColumn> columns() const;
  bool complete(const std::string& method) const;

  /// Long format: method,series,repetition,mase; rows sorted by method then column.
  void write_csv(std::ostream& out) const;
  static ScoreMatrix read_csv(std::istream& in);

 private:
  std::vector<std::string> methods_;
  std::map<ScoreColumn, std::map<std::string, double>> cells_;
};

struct RankSummary {
  std::string method;
  double mean_rank = 0.0;
  double sd_rank = 0.0;
};

/// Ranks methods within each column (1 = lowest MASE, ties share the average
/// rank) and summarizes across columns with the sample standard deviation.
/// Throws std::invalid_argument("incomplete column for ranking") on a missing cell.
std::vector<RankSummary> average_ranks(const ScoreMatrix& scores, std::span<const std::string> methods);
std::vector<RankSummary> average_ranks(const ScoreMatrix& scores);

/// Rank of each value among `values` (1-based, average ties).
std::vector<double> rank_with_ties(std::span<const double> values);

struct Rope {
  double lo = -1.0;
  double hi = 1.0;
};

struct BayesResult {
  double p_win = 0.0;
  double p_rope = 0.0;
  double p_lose = 0.0;
  Rope rope;
  std::size_t samples = 0;
  std::size_t n_win = 0;
  std::size_t n_rope = 0;
  std::size_t n_lose = 0;
};

/// Bayes sign test. Differences above rope.hi count as wins, below rope.lo as
/// losses. The posterior is Dirichlet(n_lose, n_rope + prior_strength, n_win);
/// each probability is the Monte Carlo frequency of that category holding the
/// largest sampled weight.
BayesResult bayes_sign_test(std::span<const double> pct_diffs, Rope rope, std::size_t mc_samples,
                            double prior_strength, std::uint64_t seed);

/// 100 * (mase_b - mase_a) / mase_b: positive when method a is better.
double percentage_difference(double mase_a, double mase_b);

void to_json(nlohmann::json& j, const BayesResult& r);

struct CostProfile {
  double predict_seconds = 0.0;
  std::size_t size_bytes = 0;
};

/// Median of five timed passes over the test rows.
CostProfile profile_cost(const TrainedModel& model, const Eigen::MatrixXd& test_features);

/// Ensemble path: every member predicts the rows, then per-row combine and
/// update against `actuals`. The combiner is copied, never mutated.
/// Size is the summed member size plus the combiner state.
CostProfile profile_cost(const Portfolio& portfolio, const Combiner& combiner, const Eigen::MatrixXd& test_features,
                         std::span<const double> actuals);

}  // namespace tscompress
