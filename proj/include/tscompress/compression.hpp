#pragma once

#include <Eigen/Dense>

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tscompress/combiners.hpp"
#include "tscompress/learners.hpp"
#include "tscompress/series.hpp"

namespace tscompress {

enum class TeachingStrategy { resubstitution, prequential_oob };

std::string_view strategy_name(TeachingStrategy strategy);
TeachingStrategy parse_strategy(std::string_view name);

/// How an online teacher's weights behave while labelling rows.
enum class TeacherMode {
  replay,  // combine-then-update in row order, as in deployment
  frozen,  // weights fixed at their initialized values
};

/// Features paired with the teacher's combined predictions.
struct TeachingSet {
  Eigen::MatrixXd features;
  Eigen::VectorXd teacher_targets;
  std::vector<std::size_t> row_ids;
  TeachingStrategy strategy = TeachingStrategy::resubstitution;
  std::string teacher_id;

  std::size_t rows() const { return static_cast<std::size_t>(teacher_targets.size()); }
};

struct TeachingOptions {
  TeachingStrategy strategy = TeachingStrategy::resubstitution;
  /// Required for prequential_oob. For resubstitution it sizes the warm-up
  /// stream of Stacking, ADE and Best teachers (10 when unset).
  std::optional<std::size_t> prequential_blocks;
  TeacherMode mode = TeacherMode::replay;
  /// Precomputed out-of-bag stream for `data`; recomputed when null.
  const ExpertStream* oob = nullptr;
};

/// Refits every spec on each growing-window fold and predicts the next block.
/// Rows cover blocks 2..B of `data` in order.
ExpertStream out_of_bag_stream(std::span<const LearnerSpec> specs, const EmbeddedDataset& data,
                               std::size_t n_blocks);

/// Predictions of an already fitted portfolio on `data` (in-sample when `data`
/// is the training set).
ExpertStream expert_stream(const Portfolio& portfolio, const EmbeddedDataset& data);

/// Labels training rows with a teacher (portfolio + combination rule).
///
/// resubstitution: the portfolio fitted on all of `data` labels every row.
/// prequential_oob: the portfolio is refitted per fold and only out-of-bag
/// rows (blocks 2..B) are labelled. Combiners needing warm-up are fitted on
/// the out-of-bag stream in both cases. Under TeacherMode::replay the teacher
/// starts from its initialized state and updates after each labelled row.
TeachingSet generate_teaching_targets(const Portfolio& portfolio, const CombinerConfig& combiner,
                                      const EmbeddedDataset& data, const TeachingOptions& options);

struct DistilledModel {
  TrainedModel student;
  std::string teacher_id;
  TeachingStrategy strategy = TeachingStrategy::resubstitution;

  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const { return student.predict(features); }
};

/// Trains `student_spec` on the teaching rows; the original targets are never consulted.
DistilledModel distill(const LearnerSpec& student_spec, const TeachingSet& teaching);

struct Fidelity {
  double mae = 0.0;
  double max_abs = 0.0;
};

/// Student-teacher discrepancy on the given rows.
Fidelity fidelity(const DistilledModel& distilled, std::span<const double> teacher_predictions,
                  const Eigen::MatrixXd& student_features);

/// CSV with columns lag_1..lag_p, teacher_target.
void write_teaching_csv(std::ostream& out, const TeachingSet& teaching);

}  // namespace tscompress
