#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tscompress/learners.hpp"

namespace tscompress {

enum class CombinerKind { Simple, SimpleTrim, WL, BLAST, AEC, EWA, FS, MLpol, OGD, Ridge, Stacking, ADE, Best };

std::string_view kind_name(CombinerKind kind);
CombinerKind parse_kind(std::string_view name);
std::vector<CombinerKind> all_combiner_kinds();

/// Weights stay on the probability simplex.
bool is_convex(CombinerKind kind);
/// Weights change as outcomes arrive.
bool is_dynamic(CombinerKind kind);
/// Needs out-of-bag warm-up data at construction.
bool requires_warmup(CombinerKind kind);

struct CombinerConfig {
  CombinerKind kind = CombinerKind::Simple;
  std::size_t lambda_window = 50;
  double eta = 1.0;         // EWA, FS, OGD base rate
  double alpha = 0.05;      // FS share
  double forgetting = 0.9;  // AEC
  double ridge_penalty = 1.0;
  bool ridge_intercept = false;
  double trim_keep = 0.5;
  std::optional<LearnerSpec> meta_spec;  // Stacking / ADE; a per-kind default when absent
};

/// Meta-learner used when CombinerConfig::meta_spec is unset.
LearnerSpec default_meta_spec(CombinerKind kind);

/// Expert predictions aligned with the rows they were made for.
struct ExpertStream {
  Eigen::MatrixXd features;     // rows x p
  Eigen::MatrixXd predictions;  // rows x m
  Eigen::VectorXd targets;
  std::vector<std::size_t> row_ids;

  std::size_t rows() const { return static_cast<std::size_t>(targets.size()); }
};

/// Online combination state machine: combine() applies the weighted
/// aggregation to one row of expert predictions, update() accounts the
/// observed outcome and re-weights. Single writer; updates in observation order.
///
/// Squared error drives cumulative accounting (EWA, FS, MLpol, OGD, Best);
/// windowed rankings (WL, BLAST, SimpleTrim) and AEC use absolute error.
/// Argmin ties resolve to the lowest expert index. A non-finite expert
/// prediction is excluded for that step and the remaining weights renormalized.
class Combiner {
 public:
  /// Throws std::invalid_argument when m == 0 or when a warm-up dependent kind
  /// (Stacking, ADE, Best) is given no warm-up.
  Combiner(CombinerConfig config, std::size_t experts, const ExpertStream* warmup = nullptr);

  double combine(std::span<const double> predictions, std::span<const double> features = {}) const;
  void update(std::span<const double> predictions, double actual, std::span<const double> features = {});

  /// Snapshot of the current weights.
  std::vector<double> weights() const;

  const CombinerConfig& config() const { return config_; }
  std::size_t experts() const { return m_; }
  std::size_t updates() const { return t_; }

  /// Byte form of the state, used for size accounting.
  std::vector<std::uint8_t> serialize() const;
  /// Fingerprints of every meta-model fitted at construction.
  std::vector<TrainFingerprint> fingerprints() const;

 private:
  Eigen::VectorXd ade_weights(std::span<const double> predictions, std::span<const double> features,
                              const std::vector<bool>& finite) const;
  Eigen::VectorXd window_mean_abs() const;
  void solve_ridge();

  CombinerConfig config_;
  std::size_t m_;
  std::size_t t_ = 0;
  Eigen::VectorXd weights_;
  double ridge_bias_ = 0.0;

  std::deque<Eigen::VectorXd> window_;  // absolute errors, newest at back
  Eigen::VectorXd window_sum_;
  Eigen::VectorXd cumulative_sq_;
  Eigen::VectorXd discounted_abs_;
  Eigen::VectorXd regret_;

  Eigen::MatrixXd gram_;
  Eigen::VectorXd moment_;
  bool ridge_ready_ = false;

  std::optional<TrainedModel> stacker_;
  std::vector<TrainedModel> error_models_;
};

/// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::span<const double> v);

/// Combine-then-update over every row in order; returns the combined forecasts.
Eigen::VectorXd replay(Combiner& combiner, const ExpertStream& stream);

/// Feeds an out-of-bag stream through a dynamic combiner before test time.
/// Ridge already absorbs its warm-up at construction and is left untouched,
/// as are the static kinds.
void warm_start(Combiner& combiner, const ExpertStream& warmup);

/// Records weight snapshots and writes them as (t, expert_id, weight) CSV.
class WeightTrajectory {
 public:
  explicit WeightTrajectory(std::vector<std::string> expert_ids) : ids_(std::move(expert_ids)) {}
  void record(std::size_t t, std::vector<double> weights);
  void write_csv(std::ostream& out) const;
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> ids_;
  std::vector<std::pair<std::size_t, std::vector<double>>> rows_;
};

}  // namespace tscompress
