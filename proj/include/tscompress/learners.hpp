#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tscompress/series.hpp"

namespace tscompress {

enum class Family { ridge, kernel_ridge, knn, regression_tree, bagged_forest, model_tree };

std::string_view family_name(Family family);
Family parse_family(std::string_view name);

enum class Kernel { rbf, laplace, polynomial };

std::string_view kernel_name(Kernel kernel);
Kernel parse_kernel(std::string_view name);

/// Penalized least squares with an unpenalized intercept.
struct RidgeParams {
  double penalty = 1.0;
  friend bool operator==(const RidgeParams&, const RidgeParams&) = default;
};

/// Kernel ridge regression on standardized features.
/// rbf: exp(-|x-z|^2 / (2 h^2 p)), laplace: exp(-|x-z| / (h sqrt(p))),
/// polynomial: (1 + x.z / p)^degree, with h the bandwidth and p the width.
struct KernelRidgeParams {
  Kernel kernel = Kernel::rbf;
  double penalty = 0.1;
  double bandwidth = 1.0;
  int degree = 2;
  std::size_t max_rows = 1000;  // most recent rows kept as support
  friend bool operator==(const KernelRidgeParams&, const KernelRidgeParams&) = default;
};

struct KnnParams {
  std::size_t k = 5;
  friend bool operator==(const KnnParams&, const KnnParams&) = default;
};

struct TreeParams {
  std::size_t max_depth = 6;
  std::size_t min_leaf = 5;
  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct ForestParams {
  std::size_t trees = 100;
  std::size_t mtry = 0;  // 0 selects ceil(p / 3)
  std::size_t min_leaf = 5;
  std::size_t max_depth = 16;
  std::uint64_t seed = 1;
  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// M5-style model tree: variance-reduction splits, ridge leaf models,
/// bottom-up pruning on penalized absolute error.
struct ModelTreeParams {
  std::size_t min_leaf = 8;
  std::size_t max_depth = 8;
  double leaf_penalty = 1e-3;
  bool prune = true;
  friend bool operator==(const ModelTreeParams&, const ModelTreeParams&) = default;
};

using Hyperparameters =
    std::variant<RidgeParams, KernelRidgeParams, KnnParams, TreeParams, ForestParams, ModelTreeParams>;

class LearnerSpec {
 public:
  LearnerSpec() = default;
  /// Validates the hyperparameters; throws std::invalid_argument.
  LearnerSpec(std::string id, Hyperparameters params);

  const std::string& id() const { return id_; }
  Family family() const { return static_cast<Family>(params_.index()); }
  const Hyperparameters& params() const { return params_; }

  friend bool operator==(const LearnerSpec&, const LearnerSpec&) = default;

 private:
  std::string id_;
  Hyperparameters params_;
};

void to_json(nlohmann::json& j, const LearnerSpec& spec);
void from_json(const nlohmann::json& j, LearnerSpec& spec);

/// Identifies the rows a model was fitted on.
struct TrainFingerprint {
  std::uint64_t hash = 0;
  std::size_t rows = 0;
  std::size_t first_row = 0;
  std::size_t last_row = 0;
  friend bool operator==(const TrainFingerprint&, const TrainFingerprint&) = default;
};

TrainFingerprint fingerprint_of(const EmbeddedDataset& data);

struct LinearCoefficients {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
};

namespace detail {
struct ModelState;
}

/// Immutable fitted model. Copies share the fitted state.
class TrainedModel {
 public:
  TrainedModel(LearnerSpec spec, std::shared_ptr<const detail::ModelState> state,
               TrainFingerprint fingerprint, std::size_t width, bool degenerate);

  const LearnerSpec& spec() const { return spec_; }
  const TrainFingerprint& fingerprint() const { return fingerprint_; }
  std::size_t input_width() const { return width_; }
  /// True when the fit fell back to an intercept-only model.
  bool degenerate() const { return degenerate_; }

  /// Throws std::invalid_argument("feature dimension mismatch") on width mismatch.
  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
  double predict_row(std::span<const double> row) const;

  /// Canonical versioned binary form.
  std::vector<std::uint8_t> serialize() const;
  static TrainedModel deserialize(std::span<const std::uint8_t> bytes);

  std::optional<LinearCoefficients> linear_coefficients() const;
  /// Member trees of a bagged forest, each usable as a regression-tree model.
  std::vector<TrainedModel> forest_members() const;
  /// Nodes in a tree-structured model, 0 otherwise.
  std::size_t node_count() const;

 private:
  LearnerSpec spec_;
  std::shared_ptr<const detail::ModelState> state_;
  TrainFingerprint fingerprint_;
  std::size_t width_ = 0;
  bool degenerate_ = false;
};

TrainedModel train(const LearnerSpec& spec, const EmbeddedDataset& data);

std::size_t model_size(const TrainedModel& model);

struct Portfolio {
  std::vector<TrainedModel> models;

  std::size_t size() const { return models.size(); }
  /// rows x m matrix; column i holds model i's predictions.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& features) const;
  std::vector<LearnerSpec> specs() const;
};

/// Fits every spec on `data` in spec order. Throws on empty or duplicate ids.
Portfolio train_portfolio(std::span<const LearnerSpec> specs, const EmbeddedDataset& data);

/// The 30-member heterogeneous portfolio; ids are `<family>_<n>`.
std::vector<LearnerSpec> default_portfolio_specs(int lag_order);

}  // namespace tscompress
