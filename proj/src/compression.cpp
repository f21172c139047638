#include "tscompress/compression.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tscompress {

std::string_view strategy_name(TeachingStrategy strategy) {
  return strategy == TeachingStrategy::resubstitution ? "resubstitution" : "prequential_oob";
}

TeachingStrategy parse_strategy(std::string_view name) {
  if (name == "resubstitution") return TeachingStrategy::resubstitution;
  if (name == "prequential_oob" || name == "oob") return TeachingStrategy::prequential_oob;
  throw std::invalid_argument("unknown teaching strategy '" + std::string(name) + "'");
}

ExpertStream out_of_bag_stream(std::span<const LearnerSpec> specs, const EmbeddedDataset& data,
                               std::size_t n_blocks) {
  const auto plan = blocked_prequential(data.rows(), n_blocks);
  const IndexRange covered{plan.blocks[1].begin, data.rows()};
  const auto n = static_cast<Eigen::Index>(covered.size());

  ExpertStream stream;
  stream.features = data.features.middleRows(static_cast<Eigen::Index>(covered.begin), n);
  stream.targets = data.targets.segment(static_cast<Eigen::Index>(covered.begin), n);
  stream.row_ids.assign(data.row_ids.begin() + static_cast<std::ptrdiff_t>(covered.begin), data.row_ids.end());
  stream.predictions.resize(n, static_cast<Eigen::Index>(specs.size()));

  for (const auto& fold : plan.folds) {
    const auto train_rows = data.slice(fold.train);
    const auto predict_rows = data.slice(fold.predict);
    const auto portfolio = train_portfolio(specs, train_rows);
    stream.predictions.middleRows(static_cast<Eigen::Index>(fold.predict.begin - covered.begin),
                                  static_cast<Eigen::Index>(fold.predict.size())) =
        portfolio.predict(predict_rows.features);
  }
  return stream;
}

ExpertStream expert_stream(const Portfolio& portfolio, const EmbeddedDataset& data) {
  ExpertStream stream;
  stream.features = data.features;
  stream.targets = data.targets;
  stream.row_ids = data.row_ids;
  stream.predictions = portfolio.predict(data.features);
  return stream;
}

namespace {

Eigen::VectorXd label(Combiner& teacher, const ExpertStream& stream, TeacherMode mode) {
  if (mode == TeacherMode::replay) return replay(teacher, stream);
  Eigen::VectorXd out(static_cast<Eigen::Index>(stream.rows()));
  std::vector<double> preds(static_cast<std::size_t>(stream.predictions.cols()));
  std::vector<double> feats(static_cast<std::size_t>(stream.features.cols()));
  for (Eigen::Index r = 0; r < out.size(); ++r) {
    for (std::size_t i = 0; i < preds.size(); ++i) preds[i] = stream.predictions(r, static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < feats.size(); ++j) feats[j] = stream.features(r, static_cast<Eigen::Index>(j));
    out(r) = teacher.combine(preds, feats);
  }
  return out;
}

}  // namespace

TeachingSet generate_teaching_targets(const Portfolio& portfolio, const CombinerConfig& combiner,
                                      const EmbeddedDataset& data, const TeachingOptions& options) {
  if (portfolio.size() == 0) throw std::invalid_argument("portfolio must be non-empty");
  if (options.strategy == TeachingStrategy::prequential_oob && !options.prequential_blocks) {
    throw std::invalid_argument("block count required");
  }

  const auto specs = portfolio.specs();
  std::optional<ExpertStream> computed;
  auto oob = [&]() -> const ExpertStream& {
    if (options.oob != nullptr) return *options.oob;
    if (!computed) computed = out_of_bag_stream(specs, data, options.prequential_blocks.value_or(10));
    return *computed;
  };

  TeachingSet set;
  set.strategy = options.strategy;
  set.teacher_id = std::string(kind_name(combiner.kind));

  const ExpertStream* warmup = requires_warmup(combiner.kind) || combiner.kind == CombinerKind::Ridge ? &oob() : nullptr;
  Combiner teacher(combiner, portfolio.size(), warmup);

  if (options.strategy == TeachingStrategy::resubstitution) {
    const auto stream = expert_stream(portfolio, data);
    set.features = stream.features;
    set.row_ids = stream.row_ids;
    set.teacher_targets = label(teacher, stream, options.mode);
  } else {
    const auto& stream = oob();
    set.features = stream.features;
    set.row_ids = stream.row_ids;
    set.teacher_targets = label(teacher, stream, options.mode);
  }
  if (!set.teacher_targets.allFinite()) throw std::runtime_error("teacher produced non-finite targets");
  return set;
}

DistilledModel distill(const LearnerSpec& student_spec, const TeachingSet& teaching) {
  if (teaching.rows() == 0) throw std::invalid_argument("teaching set is empty");
  EmbeddedDataset data;
  data.features = teaching.features;
  data.targets = teaching.teacher_targets;
  data.lag_order = static_cast<int>(teaching.features.cols());
  data.row_ids = teaching.row_ids;
  return DistilledModel{train(student_spec, data), teaching.teacher_id, teaching.strategy};
}

Fidelity fidelity(const DistilledModel& distilled, std::span<const double> teacher_predictions,
                  const Eigen::MatrixXd& student_features) {
  if (teacher_predictions.size() != static_cast<std::size_t>(student_features.rows())) {
    throw std::invalid_argument("row count mismatch");
  }
  Fidelity f;
  if (teacher_predictions.empty()) return f;
  const Eigen::VectorXd student = distilled.predict(student_features);
  for (std::size_t i = 0; i < teacher_predictions.size(); ++i) {
    const double d = std::abs(student(static_cast<Eigen::Index>(i)) - teacher_predictions[i]);
    f.mae += d;
    f.max_abs = std::max(f.max_abs, d);
  }
  f.mae /= static_cast<double>(teacher_predictions.size());
  return f;
}

void write_teaching_csv(std::ostream& out, const TeachingSet& teaching) {
  const auto old = out.precision(17);
  for (Eigen::Index j = 0; j < teaching.features.cols(); ++j) out << "lag_" << (j + 1) << ',';
  out << "teacher_target\n";
  for (Eigen::Index i = 0; i < teaching.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < teaching.features.cols(); ++j) out << teaching.features(i, j) << ',';
    out << teaching.teacher_targets(i) << '\n';
  }
  out.precision(old);
}

}  // namespace tscompress
