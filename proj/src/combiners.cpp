#include "tscompress/combiners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "model_state.hpp"

namespace tscompress {

namespace {

constexpr double kInverseErrorFloor = 1e-8;

std::vector<bool> finite_mask(std::span<const double> v, std::size_t& count) {
  std::vector<bool> mask(v.size());
  count = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = std::isfinite(v[i]);
    count += mask[i] ? 1 : 0;
  }
  return mask;
}

// exp(-scores) normalized; shifted by the minimum so the leader never underflows.
Eigen::VectorXd softmin(const Eigen::VectorXd& scores) {
  const double lo = scores.minCoeff();
  Eigen::VectorXd w = (-(scores.array() - lo)).exp().matrix();
  return w / w.sum();
}

std::size_t argmin_lowest(const Eigen::VectorXd& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) < v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

std::vector<double> row_of(const Eigen::MatrixXd& m, Eigen::Index r) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(r, j);
  return out;
}

}  // namespace

std::string_view kind_name(CombinerKind kind) {
  switch (kind) {
    case CombinerKind::Simple: return "Simple";
    case CombinerKind::SimpleTrim: return "SimpleTrim";
    case CombinerKind::WL: return "WL";
    case CombinerKind::BLAST: return "BLAST";
    case CombinerKind::AEC: return "AEC";
    case CombinerKind::EWA: return "EWA";
    case CombinerKind::FS: return "FS";
    case CombinerKind::MLpol: return "MLpol";
    case CombinerKind::OGD: return "OGD";
    case CombinerKind::Ridge: return "Ridge";
    case CombinerKind::Stacking: return "Stacking";
    case CombinerKind::ADE: return "ADE";
    case CombinerKind::Best: return "Best";
  }
  return "?";
}

std::vector<CombinerKind> all_combiner_kinds() {
  return {CombinerKind::Simple, CombinerKind::SimpleTrim, CombinerKind::WL,    CombinerKind::BLAST,
          CombinerKind::AEC,    CombinerKind::EWA,        CombinerKind::FS,    CombinerKind::MLpol,
          CombinerKind::OGD,    CombinerKind::Ridge,      CombinerKind::Stacking, CombinerKind::ADE,
          CombinerKind::Best};
}

CombinerKind parse_kind(std::string_view name) {
  for (auto k : all_combiner_kinds()) {
    if (kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown combiner '" + std::string(name) + "'");
}

bool is_convex(CombinerKind kind) { return kind != CombinerKind::Ridge && kind != CombinerKind::Stacking; }

bool is_dynamic(CombinerKind kind) {
  return kind != CombinerKind::Simple && kind != CombinerKind::Stacking && kind != CombinerKind::Best;
}

bool requires_warmup(CombinerKind kind) {
  return kind == CombinerKind::Stacking || kind == CombinerKind::ADE || kind == CombinerKind::Best;
}

LearnerSpec default_meta_spec(CombinerKind kind) {
  if (kind == CombinerKind::ADE) return LearnerSpec("ade-meta", ForestParams{25, 0, 5, 12, 7});
  return LearnerSpec("stacking-meta", RidgeParams{1.0});
}

Combiner::Combiner(CombinerConfig config, std::size_t experts, const ExpertStream* warmup)
    : config_(std::move(config)), m_(experts) {
  if (m_ == 0) throw std::invalid_argument("combiner needs at least one expert");
  if (config_.lambda_window == 0) throw std::invalid_argument("lambda window must be positive");
  if (!(config_.eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (config_.alpha < 0.0 || config_.alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(config_.forgetting > 0.0) || config_.forgetting > 1.0) {
    throw std::invalid_argument("forgetting must lie in (0, 1]");
  }
  if (config_.ridge_penalty < 0.0) throw std::invalid_argument("ridge penalty must be >= 0");
  if (!(config_.trim_keep > 0.0) || config_.trim_keep > 1.0) throw std::invalid_argument("trim_keep must lie in (0, 1]");

  const auto m = static_cast<Eigen::Index>(m_);
  if (requires_warmup(config_.kind) && (warmup == nullptr || warmup->rows() == 0)) {
    throw std::invalid_argument("combiner requires out-of-bag warmup data");
  }
  if (warmup != nullptr && warmup->rows() > 0 && warmup->predictions.cols() != m) {
    throw std::invalid_argument("warmup expert count mismatch");
  }

  weights_ = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m_));
  window_sum_ = Eigen::VectorXd::Zero(m);
  cumulative_sq_ = Eigen::VectorXd::Zero(m);
  discounted_abs_ = Eigen::VectorXd::Zero(m);
  regret_ = Eigen::VectorXd::Zero(m);

  switch (config_.kind) {
    case CombinerKind::SimpleTrim:
    case CombinerKind::BLAST: {
      // No history yet: every expert ties and the lowest indices are kept.
      const std::size_t keep =
          config_.kind == CombinerKind::BLAST
              ? 1
              : std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(config_.trim_keep * static_cast<double>(m_) - 1e-9)), 1, m_);
      weights_.setZero();
      weights_.head(static_cast<Eigen::Index>(keep)).setConstant(1.0 / static_cast<double>(keep));
      break;
    }
    case CombinerKind::Ridge: {
      const Eigen::Index dim = m + (config_.ridge_intercept ? 1 : 0);
      gram_ = Eigen::MatrixXd::Zero(dim, dim);
      moment_ = Eigen::VectorXd::Zero(dim);
      if (warmup != nullptr && warmup->rows() > 0) {
        Eigen::MatrixXd u(static_cast<Eigen::Index>(warmup->rows()), dim);
        u.leftCols(m) = warmup->predictions.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
        if (config_.ridge_intercept) u.col(m).setOnes();
        gram_ = u.transpose() * u;
        moment_ = u.transpose() * warmup->targets;
        ridge_ready_ = true;
        solve_ridge();
      }
      break;
    }
    case CombinerKind::Stacking: {
      const auto spec = config_.meta_spec.value_or(default_meta_spec(config_.kind));
      EmbeddedDataset meta{warmup->predictions, warmup->targets, static_cast<int>(m_), warmup->row_ids};
      stacker_ = train(spec, meta);
      break;
    }
    case CombinerKind::ADE: {
      const auto spec = config_.meta_spec.value_or(default_meta_spec(config_.kind));
      const Eigen::Index p = warmup->features.cols();
      EmbeddedDataset meta;
      meta.features.resize(warmup->features.rows(), p + 1);
      meta.features.leftCols(p) = warmup->features;
      meta.row_ids = warmup->row_ids;
      meta.lag_order = static_cast<int>(p + 1);
      error_models_.reserve(m_);
      for (Eigen::Index i = 0; i < m; ++i) {
        meta.features.col(p) = warmup->predictions.col(i);
        meta.targets = (warmup->predictions.col(i) - warmup->targets).cwiseAbs();
        error_models_.push_back(train(spec, meta));
      }
      break;
    }
    case CombinerKind::Best: {
      Eigen::VectorXd loss(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        loss(i) = (warmup->predictions.col(i) - warmup->targets).squaredNorm();
        if (!std::isfinite(loss(i))) loss(i) = std::numeric_limits<double>::infinity();
      }
      weights_.setZero();
      weights_(static_cast<Eigen::Index>(argmin_lowest(loss))) = 1.0;
      break;
    }
    default:
      break;
  }
}

Eigen::VectorXd Combiner::ade_weights(std::span<const double> predictions, std::span<const double> features,
                                      const std::vector<bool>& finite) const {
  const std::size_t p = error_models_.front().input_width() - 1;
  if (features.size() != p) throw std::invalid_argument("ADE requires the feature row");
  std::vector<double> row(p + 1);
  std::copy(features.begin(), features.end(), row.begin());
  Eigen::VectorXd predicted(static_cast<Eigen::Index>(m_));
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m_; ++i) {
    if (!finite[i]) continue;
    row[p] = predictions[i];
    const double e = error_models_[i].predict_row(row);
    predicted(static_cast<Eigen::Index>(i)) = e;
    lo = std::min(lo, e);
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
  for (std::size_t i = 0; i < m_; ++i) {
    if (finite[i]) w(static_cast<Eigen::Index>(i)) = std::exp(-(predicted(static_cast<Eigen::Index>(i)) - lo));
  }
  return w / w.sum();
}

double Combiner::combine(std::span<const double> predictions, std::span<const double> features) const {
  if (predictions.size() != m_) throw std::invalid_argument("expert count mismatch");
  std::size_t n_finite = 0;
  const auto finite = finite_mask(predictions, n_finite);
  if (n_finite == 0) throw std::invalid_argument("all expert predictions are non-finite");

  switch (config_.kind) {
    case CombinerKind::Ridge: {
      double s = ridge_bias_;
      for (std::size_t i = 0; i < m_; ++i) {
        if (finite[i]) s += weights_(static_cast<Eigen::Index>(i)) * predictions[i];
      }
      return s;
    }
    case CombinerKind::Stacking: {
      double mean = 0.0;
      for (std::size_t i = 0; i < m_; ++i) mean += finite[i] ? predictions[i] : 0.0;
      mean /= static_cast<double>(n_finite);
      std::vector<double> row(predictions.begin(), predictions.end());
      for (std::size_t i = 0; i < m_; ++i) {
        if (!finite[i]) row[i] = mean;
      }
      return stacker_->predict_row(row);
    }
    case CombinerKind::ADE: {
      const Eigen::VectorXd w = ade_weights(predictions, features, finite);
      double s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        if (finite[i]) s += w(static_cast<Eigen::Index>(i)) * predictions[i];
      }
      return s;
    }
    default: {
      double total = 0.0, s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        if (!finite[i]) continue;
        total += weights_(static_cast<Eigen::Index>(i));
        s += weights_(static_cast<Eigen::Index>(i)) * predictions[i];
      }
      if (total > 0.0) return s / total;
      // Every finite expert carries zero weight: fall back to their mean.
      s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) s += finite[i] ? predictions[i] : 0.0;
      return s / static_cast<double>(n_finite);
    }
  }
}

Eigen::VectorXd Combiner::window_mean_abs() const {
  if (window_.empty()) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
  return window_sum_ / static_cast<double>(window_.size());
}

void Combiner::solve_ridge() {
  const Eigen::Index m = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd a = gram_;
  a.diagonal().head(m).array() += config_.ridge_penalty;
  Eigen::VectorXd sol;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (config_.ridge_penalty > 0.0 && ldlt.info() == Eigen::Success) {
    sol = ldlt.solve(moment_);
  }
  if (sol.size() == 0 || !sol.allFinite()) sol = a.completeOrthogonalDecomposition().solve(moment_);
  weights_ = sol.head(m);
  ridge_bias_ = config_.ridge_intercept ? sol(m) : 0.0;
}

void Combiner::update(std::span<const double> predictions, double actual, std::span<const double> features) {
  if (predictions.size() != m_) throw std::invalid_argument("expert count mismatch");
  if (!std::isfinite(actual)) throw std::invalid_argument("observed value must be finite");
  std::size_t n_finite = 0;
  const auto finite = finite_mask(predictions, n_finite);
  if (n_finite == 0) throw std::invalid_argument("all expert predictions are non-finite");

  const auto m = static_cast<Eigen::Index>(m_);
  const bool needs_forecast = config_.kind == CombinerKind::MLpol || config_.kind == CombinerKind::OGD;
  const double forecast = needs_forecast ? combine(predictions, features) : 0.0;

  // Non-finite experts are charged the worst finite loss of the step.
  Eigen::VectorXd abs_err(m), sq_err(m);
  double worst_abs = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (finite[static_cast<std::size_t>(i)]) {
      abs_err(i) = std::abs(predictions[static_cast<std::size_t>(i)] - actual);
      worst_abs = std::max(worst_abs, abs_err(i));
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!finite[static_cast<std::size_t>(i)]) abs_err(i) = worst_abs;
    sq_err(i) = abs_err(i) * abs_err(i);
  }

  window_.push_back(abs_err);
  window_sum_ += abs_err;
  if (window_.size() > config_.lambda_window) {
    window_sum_ -= window_.front();
    window_.pop_front();
  }
  cumulative_sq_ += sq_err;
  discounted_abs_ = config_.forgetting * discounted_abs_ + abs_err;
  ++t_;

  switch (config_.kind) {
    case CombinerKind::WL: {
      weights_ = (window_mean_abs().array() + kInverseErrorFloor).inverse().matrix();
      weights_ /= weights_.sum();
      break;
    }
    case CombinerKind::BLAST: {
      weights_.setZero();
      weights_(static_cast<Eigen::Index>(argmin_lowest(window_mean_abs()))) = 1.0;
      break;
    }
    case CombinerKind::SimpleTrim: {
      const Eigen::VectorXd loss = window_mean_abs();
      std::vector<std::size_t> order(m_);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return loss(static_cast<Eigen::Index>(a)) < loss(static_cast<Eigen::Index>(b));
      });
      const auto keep = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::ceil(config_.trim_keep * static_cast<double>(m_) - 1e-9)), 1, m_);
      weights_.setZero();
      for (std::size_t k = 0; k < keep; ++k) weights_(static_cast<Eigen::Index>(order[k])) = 1.0 / static_cast<double>(keep);
      break;
    }
    case CombinerKind::AEC:
      weights_ = softmin(discounted_abs_);
      break;
    case CombinerKind::EWA:
      weights_ = softmin(config_.eta * cumulative_sq_);
      break;
    case CombinerKind::FS: {
      const double lo = sq_err.minCoeff();
      Eigen::VectorXd v = weights_.array() * (-config_.eta * (sq_err.array() - lo)).exp();
      v /= v.sum();
      weights_ = (1.0 - config_.alpha) * v.array() + config_.alpha / static_cast<double>(m_);
      break;
    }
    case CombinerKind::MLpol: {
      const double forecast_loss = (forecast - actual) * (forecast - actual);
      regret_ += (forecast_loss - sq_err.array()).matrix();
      Eigen::VectorXd w = regret_.cwiseMax(0.0);
      const double total = w.sum();
      weights_ = total > 0.0 ? Eigen::VectorXd(w / total) : Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m_));
      break;
    }
    case CombinerKind::OGD: {
      const double rate = config_.eta / std::sqrt(static_cast<double>(t_));
      std::vector<double> step(m_);
      for (std::size_t i = 0; i < m_; ++i) {
        const double grad = finite[i] ? 2.0 * (forecast - actual) * predictions[i] : 0.0;
        step[i] = weights_(static_cast<Eigen::Index>(i)) - rate * grad;
      }
      const auto projected = project_simplex(step);
      weights_ = Eigen::Map<const Eigen::VectorXd>(projected.data(), m);
      break;
    }
    case CombinerKind::Ridge: {
      const Eigen::Index dim = gram_.rows();
      Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (finite[static_cast<std::size_t>(i)]) u(i) = predictions[static_cast<std::size_t>(i)];
      }
      if (config_.ridge_intercept) u(m) = 1.0;
      gram_.noalias() += u * u.transpose();
      moment_ += actual * u;
      ridge_ready_ = true;
      solve_ridge();
      break;
    }
    case CombinerKind::ADE:
      if (!features.empty()) weights_ = ade_weights(predictions, features, finite);
      break;
    default:
      break;
  }
}

std::vector<double> Combiner::weights() const {
  if (config_.kind == CombinerKind::Stacking) {
    if (auto lin = stacker_->linear_coefficients()) {
      return {lin->coefficients.data(), lin->coefficients.data() + lin->coefficients.size()};
    }
  }
  return {weights_.data(), weights_.data() + weights_.size()};
}

std::vector<std::uint8_t> Combiner::serialize() const {
  detail::ByteWriter out;
  out.u8(static_cast<std::uint8_t>(config_.kind));
  out.u64(m_);
  out.u64(t_);
  out.vec(weights_);
  out.f64(ridge_bias_);
  out.u64(window_.size());
  for (const auto& w : window_) out.vec(w);
  out.vec(window_sum_);
  out.vec(cumulative_sq_);
  out.vec(discounted_abs_);
  out.vec(regret_);
  out.mat(gram_);
  out.vec(moment_);
  if (stacker_) {
    const auto b = stacker_->serialize();
    out.raw(b.data(), b.size());
  }
  for (const auto& e : error_models_) {
    const auto b = e.serialize();
    out.raw(b.data(), b.size());
  }
  return out.take();
}

std::vector<TrainFingerprint> Combiner::fingerprints() const {
  std::vector<TrainFingerprint> out;
  if (stacker_) out.push_back(stacker_->fingerprint());
  for (const auto& e : error_models_) out.push_back(e.fingerprint());
  return out;
}

std::vector<double> project_simplex(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return {};
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("simplex projection needs finite input");
  }
  // Sort-and-threshold: find the largest k with u_k - (sum_{j<=k} u_j - 1)/k > 0.
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cumulative += u[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (u[k] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> out(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::max(v[i] - theta, 0.0);
    total += out[i];
  }
  // One rescale trims accumulated rounding in the sum.
  if (total > 0.0) {
    for (auto& x : out) x /= total;
  }
  return out;
}

Eigen::VectorXd replay(Combiner& combiner, const ExpertStream& stream) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(stream.rows()));
  const bool with_features = stream.features.rows() == static_cast<Eigen::Index>(stream.rows());
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(stream.rows()); ++r) {
    const auto preds = row_of(stream.predictions, r);
    const auto feats = with_features ? row_of(stream.features, r) : std::vector<double>{};
    out(r) = combiner.combine(preds, feats);
    combiner.update(preds, stream.targets(r), feats);
  }
  return out;
}

void warm_start(Combiner& combiner, const ExpertStream& warmup) {
  const auto kind = combiner.config().kind;
  if (!is_dynamic(kind) || kind == CombinerKind::Ridge || warmup.rows() == 0) return;
  replay(combiner, warmup);
}

void WeightTrajectory::record(std::size_t t, std::vector<double> weights) {
  if (weights.size() != ids_.size()) throw std::invalid_argument("weight count does not match expert ids");
  rows_.emplace_back(t, std::move(weights));
}

void WeightTrajectory::write_csv(std::ostream& out) const {
  out << "t,expert_id,weight\n";
  const auto old = out.precision(17);
  for (const auto& [t, w] : rows_) {
    for (std::size_t i = 0; i < w.size(); ++i) out << t << ',' << ids_[i] << ',' << w[i] << '\n';
  }
  out.precision(old);
}

}  // namespace tscompress
