#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "model_state.hpp"

namespace tscompress::detail {

double TreeFit::predict(std::span<const double> row) const { return nodes[leaf_of(row)].value; }

std::size_t TreeFit::leaf_of(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

namespace {

enum class Criterion { squared_error, sd_reduction };

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class Grower {
 public:
  Grower(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Criterion criterion, std::size_t min_leaf,
         std::size_t max_depth, std::size_t mtry, Rng* rng)
      : x_(x), y_(y), criterion_(criterion), min_leaf_(std::max<std::size_t>(1, min_leaf)), max_depth_(max_depth),
        mtry_(mtry), rng_(rng), features_(static_cast<std::size_t>(x.cols())) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  /// Stop splitting nodes whose target sd falls below this value.
  void set_min_sd(double sd) { min_sd_ = sd; }
  void keep_rows() { keep_rows_ = true; }

  std::int32_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    if (keep_rows_) node_rows_.emplace_back(rows);

    double sum = 0.0;
    for (auto r : rows) sum += y_(static_cast<Eigen::Index>(r));
    nodes_[static_cast<std::size_t>(id)].value = sum / static_cast<double>(rows.size());

    if (depth >= max_depth_ || rows.size() < 2 * min_leaf_) return id;
    if (min_sd_ > 0.0 && sd_of(rows) < min_sd_) return id;

    const Split split = best_split(rows);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    for (auto r : rows) {
      (x_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const auto l = grow(std::move(left), depth + 1);
    const auto rr = grow(std::move(right), depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = rr;
    return id;
  }

  std::vector<TreeNode>& nodes() { return nodes_; }
  std::vector<std::vector<std::size_t>>& node_rows() { return node_rows_; }

 private:
  double sd_of(const std::vector<std::size_t>& rows) const {
    double s = 0.0, s2 = 0.0;
    for (auto r : rows) {
      const double v = y_(static_cast<Eigen::Index>(r));
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(rows.size());
    return std::sqrt(std::max(0.0, s2 / n - (s / n) * (s / n)));
  }

  static double sse(double s, double s2, double n) { return std::max(0.0, s2 - s * s / n); }

  // Gain to maximize for a candidate partition, given child sums.
  double gain(double s, double s2, double n, double ls, double ls2, double ln) const {
    const double rs = s - ls, rs2 = s2 - ls2, rn = n - ln;
    if (criterion_ == Criterion::squared_error) {
      return sse(s, s2, n) - sse(ls, ls2, ln) - sse(rs, rs2, rn);
    }
    const double sd = std::sqrt(sse(s, s2, n) / n);
    const double lsd = std::sqrt(sse(ls, ls2, ln) / ln);
    const double rsd = std::sqrt(sse(rs, rs2, rn) / rn);
    return sd - (ln / n) * lsd - (rn / n) * rsd;
  }

  Split best_split(const std::vector<std::size_t>& rows) {
    const std::size_t p = features_.size();
    std::size_t n_try = p;
    if (mtry_ > 0 && mtry_ < p && rng_ != nullptr) {
      // Partial Fisher-Yates: first mtry entries become the candidate set.
      n_try = mtry_;
      for (std::size_t i = 0; i < n_try; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng_->index(p - i));
        std::swap(features_[i], features_[j]);
      }
    }
    std::vector<std::size_t> candidates(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(n_try));
    std::sort(candidates.begin(), candidates.end());

    const double n = static_cast<double>(rows.size());
    double s = 0.0, s2 = 0.0;
    for (auto r : rows) {
      const double v = y_(static_cast<Eigen::Index>(r));
      s += v;
      s2 += v * v;
    }

    Split best;
    const double tol = 1e-12 * std::max(1.0, s2);
    buffer_.resize(rows.size());
    for (auto f : candidates) {
      const auto fi = static_cast<Eigen::Index>(f);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(rows[k]);
        buffer_[k] = {x_(r, fi), y_(r)};
      }
      std::sort(buffer_.begin(), buffer_.end());
      double ls = 0.0, ls2 = 0.0;
      for (std::size_t k = 0; k + 1 < buffer_.size(); ++k) {
        ls += buffer_[k].second;
        ls2 += buffer_[k].second * buffer_[k].second;
        const std::size_t left_n = k + 1;
        if (left_n < min_leaf_) continue;
        if (buffer_.size() - left_n < min_leaf_) break;
        if (!(buffer_[k].first < buffer_[k + 1].first)) continue;
        const double g = gain(s, s2, n, ls, ls2, static_cast<double>(left_n));
        if (g > best.gain + tol) {
          best.gain = g;
          best.feature = static_cast<int>(f);
          double mid = 0.5 * (buffer_[k].first + buffer_[k + 1].first);
          if (!(mid < buffer_[k + 1].first)) mid = buffer_[k].first;
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  Criterion criterion_;
  std::size_t min_leaf_;
  std::size_t max_depth_;
  std::size_t mtry_;
  Rng* rng_;
  double min_sd_ = 0.0;
  bool keep_rows_ = false;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, double>> buffer_;
  std::vector<TreeNode> nodes_;
  std::vector<std::vector<std::size_t>> node_rows_;
};

std::vector<std::size_t> all_rows(Eigen::Index n) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

TreeFit fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TreeParams& params) {
  Grower grower(x, y, Criterion::squared_error, params.min_leaf, params.max_depth, 0, nullptr);
  grower.grow(all_rows(x.rows()), 0);
  return TreeFit{std::move(grower.nodes())};
}

ForestFit fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestParams& params) {
  ForestFit forest;
  const auto p = static_cast<std::size_t>(x.cols());
  std::size_t mtry = params.mtry == 0 ? (p + 2) / 3 : params.mtry;
  mtry = std::clamp<std::size_t>(mtry, 1, p);
  const auto n = static_cast<std::uint64_t>(x.rows());
  forest.trees.reserve(params.trees);
  for (std::size_t t = 0; t < params.trees; ++t) {
    Rng rng(mix_seed(params.seed, t));
    std::vector<std::size_t> sample(static_cast<std::size_t>(n));
    for (auto& s : sample) s = static_cast<std::size_t>(rng.index(n));
    std::sort(sample.begin(), sample.end());
    Grower grower(x, y, Criterion::squared_error, params.min_leaf, params.max_depth, mtry, &rng);
    grower.grow(std::move(sample), 0);
    forest.trees.push_back(TreeFit{std::move(grower.nodes())});
  }
  return forest;
}

namespace {

struct ModelTreeBuild {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const ModelTreeParams& params;
  std::vector<TreeNode>& nodes;
  const std::vector<std::vector<std::size_t>>& rows;
  std::vector<LinearFit> models;

  LinearFit fit_rows(const std::vector<std::size_t>& r) const {
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(r.size()), x.cols());
    Eigen::VectorXd ys(static_cast<Eigen::Index>(r.size()));
    for (std::size_t k = 0; k < r.size(); ++k) {
      xs.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(r[k]));
      ys(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(r[k]));
    }
    return fit_ridge(xs, ys, params.leaf_penalty);
  }

  // Mean absolute error inflated by (n + v) / (n - v), v = parameter count.
  // A model with at least as many parameters as rows is never preferred.
  double penalized_error(const LinearFit& m, const std::vector<std::size_t>& r) const {
    double e = 0.0;
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (auto i : r) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(static_cast<Eigen::Index>(i), j);
      e += std::abs(m.predict(row) - y(static_cast<Eigen::Index>(i)));
    }
    const double n = static_cast<double>(r.size());
    const double v = static_cast<double>(x.cols() + 1);
    if (n <= v) return std::numeric_limits<double>::infinity();
    return e / n * (n + v) / (n - v);
  }

  double prune(std::size_t id) {
    models[id] = fit_rows(rows[id]);
    const double leaf_error = penalized_error(models[id], rows[id]);
    auto& node = nodes[id];
    if (node.feature < 0) return leaf_error;
    const auto l = static_cast<std::size_t>(node.left);
    const auto r = static_cast<std::size_t>(node.right);
    const double le = prune(l);
    const double re = prune(r);
    const double nl = static_cast<double>(rows[l].size());
    const double nr = static_cast<double>(rows[r].size());
    const double subtree_error = (nl * le + nr * re) / (nl + nr);
    if (params.prune && leaf_error <= subtree_error) {
      nodes[id].feature = -1;
      nodes[id].left = nodes[id].right = -1;
      return leaf_error;
    }
    return subtree_error;
  }
};

std::int32_t compact(const std::vector<TreeNode>& nodes, const std::vector<LinearFit>& models, std::size_t id,
                     ModelTreeFit& out) {
  const auto new_id = static_cast<std::int32_t>(out.structure.nodes.size());
  out.structure.nodes.push_back(nodes[id]);
  if (nodes[id].feature < 0) {
    out.structure.nodes.back().value = static_cast<double>(out.leaf_models.size());
    out.leaf_models.push_back(models[id]);
    return new_id;
  }
  const auto l = compact(nodes, models, static_cast<std::size_t>(nodes[id].left), out);
  const auto r = compact(nodes, models, static_cast<std::size_t>(nodes[id].right), out);
  out.structure.nodes[static_cast<std::size_t>(new_id)].left = l;
  out.structure.nodes[static_cast<std::size_t>(new_id)].right = r;
  return new_id;
}

}  // namespace

ModelTreeFit fit_model_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelTreeParams& params) {
  Grower grower(x, y, Criterion::sd_reduction, params.min_leaf, params.max_depth, 0, nullptr);
  const double root_sd = std::sqrt((y.array() - y.mean()).square().mean());
  grower.set_min_sd(0.05 * root_sd);
  grower.keep_rows();
  grower.grow(all_rows(x.rows()), 0);

  auto& nodes = grower.nodes();
  ModelTreeBuild build{x, y, params, nodes, grower.node_rows(), std::vector<LinearFit>(nodes.size())};
  build.prune(0);

  ModelTreeFit out;
  compact(nodes, build.models, 0, out);
  return out;
}

}  // namespace tscompress::detail
