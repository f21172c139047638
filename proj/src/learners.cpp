#include "tscompress/learners.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "model_state.hpp"

namespace tscompress {

namespace {

constexpr std::uint32_t kMagic = 0x4d435354;  // "TSCM"
constexpr std::uint32_t kVersion = 1;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

std::string_view family_name(Family family) {
  switch (family) {
    case Family::ridge: return "ridge";
    case Family::kernel_ridge: return "kernel-ridge";
    case Family::knn: return "knn";
    case Family::regression_tree: return "regression-tree";
    case Family::bagged_forest: return "bagged-forest";
    case Family::model_tree: return "model-tree";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  for (auto f : {Family::ridge, Family::kernel_ridge, Family::knn, Family::regression_tree, Family::bagged_forest,
                 Family::model_tree}) {
    if (family_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown learner family '" + std::string(name) + "'");
}

std::string_view kernel_name(Kernel kernel) {
  switch (kernel) {
    case Kernel::rbf: return "rbf";
    case Kernel::laplace: return "laplace";
    case Kernel::polynomial: return "polynomial";
  }
  return "?";
}

Kernel parse_kernel(std::string_view name) {
  for (auto k : {Kernel::rbf, Kernel::laplace, Kernel::polynomial}) {
    if (kernel_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown kernel '" + std::string(name) + "'");
}

LearnerSpec::LearnerSpec(std::string id, Hyperparameters params) : id_(std::move(id)), params_(params) {
  require(!id_.empty(), "learner id must be non-empty");
  std::visit(overloaded{
                 [](const RidgeParams& p) { require(p.penalty >= 0.0, "ridge penalty must be >= 0"); },
                 [](const KernelRidgeParams& p) {
                   require(p.penalty > 0.0, "kernel-ridge penalty must be > 0");
                   require(p.bandwidth > 0.0, "kernel bandwidth must be > 0");
                   require(p.degree >= 1, "polynomial degree must be >= 1");
                   require(p.max_rows >= 1, "kernel-ridge max_rows must be >= 1");
                 },
                 [](const KnnParams& p) { require(p.k >= 1, "knn k must be >= 1"); },
                 [](const TreeParams& p) {
                   require(p.max_depth >= 1, "tree max_depth must be >= 1");
                   require(p.min_leaf >= 1, "tree min_leaf must be >= 1");
                 },
                 [](const ForestParams& p) {
                   require(p.trees >= 1, "forest needs at least one tree");
                   require(p.min_leaf >= 1, "forest min_leaf must be >= 1");
                   require(p.max_depth >= 1, "forest max_depth must be >= 1");
                 },
                 [](const ModelTreeParams& p) {
                   require(p.min_leaf >= 1, "model-tree min_leaf must be >= 1");
                   require(p.max_depth >= 1, "model-tree max_depth must be >= 1");
                   require(p.leaf_penalty >= 0.0, "model-tree leaf penalty must be >= 0");
                 },
             },
             params_);
}

void to_json(nlohmann::json& j, const LearnerSpec& spec) {
  j = nlohmann::json::object();
  j["id"] = spec.id();
  j["family"] = family_name(spec.family());
  nlohmann::json h = nlohmann::json::object();
  std::visit(overloaded{
                 [&](const RidgeParams& p) { h["penalty"] = p.penalty; },
                 [&](const KernelRidgeParams& p) {
                   h["kernel"] = kernel_name(p.kernel);
                   h["penalty"] = p.penalty;
                   h["bandwidth"] = p.bandwidth;
                   h["degree"] = p.degree;
                   h["max_rows"] = p.max_rows;
                 },
                 [&](const KnnParams& p) { h["k"] = p.k; },
                 [&](const TreeParams& p) {
                   h["max_depth"] = p.max_depth;
                   h["min_leaf"] = p.min_leaf;
                 },
                 [&](const ForestParams& p) {
                   h["trees"] = p.trees;
                   h["mtry"] = p.mtry;
                   h["min_leaf"] = p.min_leaf;
                   h["max_depth"] = p.max_depth;
                   h["seed"] = p.seed;
                 },
                 [&](const ModelTreeParams& p) {
                   h["min_leaf"] = p.min_leaf;
                   h["max_depth"] = p.max_depth;
                   h["leaf_penalty"] = p.leaf_penalty;
                   h["prune"] = p.prune;
                 },
             },
             spec.params());
  j["hyperparameters"] = h;
}

void from_json(const nlohmann::json& j, LearnerSpec& spec) {
  const auto family = parse_family(j.at("family").get<std::string>());
  const auto h = j.value("hyperparameters", nlohmann::json::object());
  Hyperparameters params;
  switch (family) {
    case Family::ridge: {
      RidgeParams p;
      p.penalty = h.value("penalty", p.penalty);
      params = p;
      break;
    }
    case Family::kernel_ridge: {
      KernelRidgeParams p;
      p.kernel = parse_kernel(h.value("kernel", std::string(kernel_name(p.kernel))));
      p.penalty = h.value("penalty", p.penalty);
      p.bandwidth = h.value("bandwidth", p.bandwidth);
      p.degree = h.value("degree", p.degree);
      p.max_rows = h.value("max_rows", p.max_rows);
      params = p;
      break;
    }
    case Family::knn: {
      KnnParams p;
      p.k = h.value("k", p.k);
      params = p;
      break;
    }
    case Family::regression_tree: {
      TreeParams p;
      p.max_depth = h.value("max_depth", p.max_depth);
      p.min_leaf = h.value("min_leaf", p.min_leaf);
      params = p;
      break;
    }
    case Family::bagged_forest: {
      ForestParams p;
      p.trees = h.value("trees", p.trees);
      p.mtry = h.value("mtry", p.mtry);
      p.min_leaf = h.value("min_leaf", p.min_leaf);
      p.max_depth = h.value("max_depth", p.max_depth);
      p.seed = h.value("seed", p.seed);
      params = p;
      break;
    }
    case Family::model_tree: {
      ModelTreeParams p;
      p.min_leaf = h.value("min_leaf", p.min_leaf);
      p.max_depth = h.value("max_depth", p.max_depth);
      p.leaf_penalty = h.value("leaf_penalty", p.leaf_penalty);
      p.prune = h.value("prune", p.prune);
      params = p;
      break;
    }
  }
  spec = LearnerSpec(j.at("id").get<std::string>(), params);
}

TrainFingerprint fingerprint_of(const EmbeddedDataset& data) {
  TrainFingerprint fp;
  fp.rows = data.rows();
  if (fp.rows == 0) return fp;
  fp.first_row = *std::min_element(data.row_ids.begin(), data.row_ids.end());
  fp.last_row = *std::max_element(data.row_ids.begin(), data.row_ids.end());
  std::uint64_t h = hash_bytes(data.row_ids.data(), data.row_ids.size() * sizeof(std::size_t));
  h = hash_bytes(data.features.data(), sizeof(double) * static_cast<std::size_t>(data.features.size()), h);
  h = hash_bytes(data.targets.data(), sizeof(double) * static_cast<std::size_t>(data.targets.size()), h);
  fp.hash = h;
  return fp;
}

namespace detail {

double predict_state(const ModelState& state, std::span<const double> row) {
  return std::visit(overloaded{
                        [&](const LinearFit& f) { return f.predict(row); },
                        [&](const KernelFit& f) { return kernel_predict(f, row); },
                        [&](const KnnFit& f) { return knn_predict(f, row); },
                        [&](const TreeFit& f) { return f.predict(row); },
                        [&](const ForestFit& f) {
                          double s = 0.0;
                          for (const auto& t : f.trees) s += t.predict(row);
                          return s / static_cast<double>(f.trees.size());
                        },
                        [&](const ModelTreeFit& f) {
                          const auto leaf = f.structure.leaf_of(row);
                          return f.leaf_models[static_cast<std::size_t>(f.structure.nodes[leaf].value)].predict(row);
                        },
                    },
                    state.fit);
}

namespace {

void write_linear(ByteWriter& out, const LinearFit& f) {
  out.vec(f.coefficients);
  out.f64(f.intercept);
}

LinearFit read_linear(ByteReader& in) {
  LinearFit f;
  f.coefficients = in.vec();
  f.intercept = in.f64();
  return f;
}

void write_standardizer(ByteWriter& out, const Standardizer& s) {
  out.vec(s.mean);
  out.vec(s.scale);
}

Standardizer read_standardizer(ByteReader& in) {
  Standardizer s;
  s.mean = in.vec();
  s.scale = in.vec();
  return s;
}

void write_tree(ByteWriter& out, const TreeFit& t) {
  out.u64(t.nodes.size());
  for (const auto& n : t.nodes) {
    out.i32(n.feature);
    if (n.feature >= 0) {
      out.f64(n.threshold);
      out.i32(n.left);
      out.i32(n.right);
    } else {
      out.f64(n.value);
    }
  }
}

TreeFit read_tree(ByteReader& in) {
  TreeFit t;
  t.nodes.resize(in.u64());
  for (auto& n : t.nodes) {
    n.feature = in.i32();
    if (n.feature >= 0) {
      n.threshold = in.f64();
      n.left = in.i32();
      n.right = in.i32();
    } else {
      n.value = in.f64();
    }
  }
  return t;
}

}  // namespace

void write_state(ByteWriter& out, const ModelState& state) {
  out.u8(static_cast<std::uint8_t>(state.fit.index()));
  std::visit(overloaded{
                 [&](const LinearFit& f) { write_linear(out, f); },
                 [&](const KernelFit& f) {
                   out.u8(static_cast<std::uint8_t>(f.kernel));
                   out.f64(f.bandwidth);
                   out.i32(f.degree);
                   write_standardizer(out, f.standardizer);
                   out.mat(f.support);
                   out.vec(f.dual);
                   out.f64(f.offset);
                 },
                 [&](const KnnFit& f) {
                   out.u64(f.k);
                   write_standardizer(out, f.standardizer);
                   out.mat(f.points);
                   out.vec(f.targets);
                 },
                 [&](const TreeFit& f) { write_tree(out, f); },
                 [&](const ForestFit& f) {
                   out.u64(f.trees.size());
                   for (const auto& t : f.trees) write_tree(out, t);
                 },
                 [&](const ModelTreeFit& f) {
                   write_tree(out, f.structure);
                   out.u64(f.leaf_models.size());
                   for (const auto& m : f.leaf_models) write_linear(out, m);
                 },
             },
             state.fit);
}

ModelState read_state(ByteReader& in) {
  ModelState state;
  switch (in.u8()) {
    case 0: state.fit = read_linear(in); break;
    case 1: {
      KernelFit f;
      f.kernel = static_cast<Kernel>(in.u8());
      f.bandwidth = in.f64();
      f.degree = in.i32();
      f.standardizer = read_standardizer(in);
      f.support = in.mat();
      f.dual = in.vec();
      f.offset = in.f64();
      state.fit = std::move(f);
      break;
    }
    case 2: {
      KnnFit f;
      f.k = in.u64();
      f.standardizer = read_standardizer(in);
      f.points = in.mat();
      f.targets = in.vec();
      state.fit = std::move(f);
      break;
    }
    case 3: state.fit = read_tree(in); break;
    case 4: {
      ForestFit f;
      f.trees.resize(in.u64());
      for (auto& t : f.trees) t = read_tree(in);
      state.fit = std::move(f);
      break;
    }
    case 5: {
      ModelTreeFit f;
      f.structure = read_tree(in);
      f.leaf_models.resize(in.u64());
      for (auto& m : f.leaf_models) m = read_linear(in);
      state.fit = std::move(f);
      break;
    }
    default: throw std::runtime_error("unknown model state tag");
  }
  return state;
}

}  // namespace detail

TrainedModel::TrainedModel(LearnerSpec spec, std::shared_ptr<const detail::ModelState> state,
                           TrainFingerprint fingerprint, std::size_t width, bool degenerate)
    : spec_(std::move(spec)), state_(std::move(state)), fingerprint_(fingerprint), width_(width),
      degenerate_(degenerate) {}

double TrainedModel::predict_row(std::span<const double> row) const {
  if (row.size() != width_) throw std::invalid_argument("feature dimension mismatch");
  return detail::predict_state(*state_, row);
}

Eigen::VectorXd TrainedModel::predict(const Eigen::MatrixXd& features) const {
  if (static_cast<std::size_t>(features.cols()) != width_) {
    throw std::invalid_argument("feature dimension mismatch");
  }
  Eigen::VectorXd out(features.rows());
  std::vector<double> row(width_);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (std::size_t j = 0; j < width_; ++j) row[j] = features(i, static_cast<Eigen::Index>(j));
    out(i) = detail::predict_state(*state_, row);
  }
  return out;
}

namespace {

void write_spec(detail::ByteWriter& out, const LearnerSpec& spec) {
  out.str(spec.id());
  out.u8(static_cast<std::uint8_t>(spec.family()));
  std::visit(overloaded{
                 [&](const RidgeParams& p) { out.f64(p.penalty); },
                 [&](const KernelRidgeParams& p) {
                   out.u8(static_cast<std::uint8_t>(p.kernel));
                   out.f64(p.penalty);
                   out.f64(p.bandwidth);
                   out.i32(p.degree);
                   out.u64(p.max_rows);
                 },
                 [&](const KnnParams& p) { out.u64(p.k); },
                 [&](const TreeParams& p) {
                   out.u64(p.max_depth);
                   out.u64(p.min_leaf);
                 },
                 [&](const ForestParams& p) {
                   out.u64(p.trees);
                   out.u64(p.mtry);
                   out.u64(p.min_leaf);
                   out.u64(p.max_depth);
                   out.u64(p.seed);
                 },
                 [&](const ModelTreeParams& p) {
                   out.u64(p.min_leaf);
                   out.u64(p.max_depth);
                   out.f64(p.leaf_penalty);
                   out.u8(p.prune ? 1 : 0);
                 },
             },
             spec.params());
}

LearnerSpec read_spec(detail::ByteReader& in) {
  auto id = in.str();
  Hyperparameters params;
  switch (static_cast<Family>(in.u8())) {
    case Family::ridge: params = RidgeParams{in.f64()}; break;
    case Family::kernel_ridge: {
      KernelRidgeParams p;
      p.kernel = static_cast<Kernel>(in.u8());
      p.penalty = in.f64();
      p.bandwidth = in.f64();
      p.degree = in.i32();
      p.max_rows = in.u64();
      params = p;
      break;
    }
    case Family::knn: params = KnnParams{in.u64()}; break;
    case Family::regression_tree: {
      TreeParams p;
      p.max_depth = in.u64();
      p.min_leaf = in.u64();
      params = p;
      break;
    }
    case Family::bagged_forest: {
      ForestParams p;
      p.trees = in.u64();
      p.mtry = in.u64();
      p.min_leaf = in.u64();
      p.max_depth = in.u64();
      p.seed = in.u64();
      params = p;
      break;
    }
    case Family::model_tree: {
      ModelTreeParams p;
      p.min_leaf = in.u64();
      p.max_depth = in.u64();
      p.leaf_penalty = in.f64();
      p.prune = in.u8() != 0;
      params = p;
      break;
    }
    default: throw std::runtime_error("unknown learner family tag");
  }
  return LearnerSpec(std::move(id), params);
}

}  // namespace

std::vector<std::uint8_t> TrainedModel::serialize() const {
  detail::ByteWriter out;
  out.u32(kMagic);
  out.u32(kVersion);
  write_spec(out, spec_);
  out.u64(width_);
  out.u8(degenerate_ ? 1 : 0);
  out.u64(fingerprint_.hash);
  out.u64(fingerprint_.rows);
  out.u64(fingerprint_.first_row);
  out.u64(fingerprint_.last_row);
  detail::write_state(out, *state_);
  return out.take();
}

TrainedModel TrainedModel::deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  if (in.u32() != kMagic) throw std::runtime_error("not a serialized model");
  if (in.u32() != kVersion) throw std::runtime_error("unsupported model version");
  auto spec = read_spec(in);
  const auto width = in.u64();
  const bool degenerate = in.u8() != 0;
  TrainFingerprint fp;
  fp.hash = in.u64();
  fp.rows = in.u64();
  fp.first_row = in.u64();
  fp.last_row = in.u64();
  auto state = std::make_shared<detail::ModelState>(detail::read_state(in));
  if (!in.done()) throw std::runtime_error("trailing bytes after model");
  return TrainedModel(std::move(spec), std::move(state), fp, width, degenerate);
}

std::optional<LinearCoefficients> TrainedModel::linear_coefficients() const {
  if (const auto* f = std::get_if<detail::LinearFit>(&state_->fit)) {
    return LinearCoefficients{f->coefficients, f->intercept};
  }
  return std::nullopt;
}

std::vector<TrainedModel> TrainedModel::forest_members() const {
  std::vector<TrainedModel> out;
  const auto* f = std::get_if<detail::ForestFit>(&state_->fit);
  if (f == nullptr) return out;
  const auto& fp = std::get<ForestParams>(spec_.params());
  for (std::size_t t = 0; t < f->trees.size(); ++t) {
    LearnerSpec member(spec_.id() + "#" + std::to_string(t), TreeParams{fp.max_depth, fp.min_leaf});
    out.emplace_back(std::move(member), std::make_shared<detail::ModelState>(detail::ModelState{f->trees[t]}),
                     fingerprint_, width_, false);
  }
  return out;
}

std::size_t TrainedModel::node_count() const {
  if (const auto* t = std::get_if<detail::TreeFit>(&state_->fit)) return t->nodes.size();
  if (const auto* m = std::get_if<detail::ModelTreeFit>(&state_->fit)) return m->structure.nodes.size();
  if (const auto* f = std::get_if<detail::ForestFit>(&state_->fit)) {
    std::size_t n = 0;
    for (const auto& t : f->trees) n += t.nodes.size();
    return n;
  }
  return 0;
}

TrainedModel train(const LearnerSpec& spec, const EmbeddedDataset& data) {
  if (data.rows() == 0) throw std::invalid_argument("training data is empty");
  if (data.row_ids.size() != data.rows()) throw std::invalid_argument("row ids do not match rows");
  const Eigen::MatrixXd& x = data.features;
  const Eigen::VectorXd& y = data.targets;
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("training data must be finite");
  if (const auto* fp = std::get_if<ForestParams>(&spec.params())) {
    if (fp->mtry > data.width()) throw std::invalid_argument("mtry exceeds feature count");
  }

  bool all_constant = true;
  for (Eigen::Index j = 0; j < x.cols() && all_constant; ++j) {
    all_constant = (x.col(j).array() == x(0, j)).all();
  }
  auto state = std::make_shared<detail::ModelState>();
  const auto fp = fingerprint_of(data);
  if (all_constant) {
    state->fit = detail::LinearFit{Eigen::VectorXd::Zero(x.cols()), y.mean()};
    return TrainedModel(spec, std::move(state), fp, data.width(), true);
  }

  std::visit(overloaded{
                 [&](const RidgeParams& p) { state->fit = detail::fit_ridge(x, y, p.penalty); },
                 [&](const KernelRidgeParams& p) { state->fit = detail::fit_kernel_ridge(x, y, p); },
                 [&](const KnnParams& p) { state->fit = detail::fit_knn(x, y, p); },
                 [&](const TreeParams& p) { state->fit = detail::fit_tree(x, y, p); },
                 [&](const ForestParams& p) { state->fit = detail::fit_forest(x, y, p); },
                 [&](const ModelTreeParams& p) { state->fit = detail::fit_model_tree(x, y, p); },
             },
             spec.params());
  return TrainedModel(spec, std::move(state), fp, data.width(), false);
}

std::size_t model_size(const TrainedModel& model) { return model.serialize().size(); }

Eigen::MatrixXd Portfolio::predict(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd out(features.rows(), static_cast<Eigen::Index>(models.size()));
  for (std::size_t i = 0; i < models.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = models[i].predict(features);
  return out;
}

std::vector<LearnerSpec> Portfolio::specs() const {
  std::vector<LearnerSpec> out;
  for (const auto& m : models) out.push_back(m.spec());
  return out;
}

Portfolio train_portfolio(std::span<const LearnerSpec> specs, const EmbeddedDataset& data) {
  if (specs.empty()) throw std::invalid_argument("portfolio must be non-empty");
  std::set<std::string> ids;
  for (const auto& s : specs) {
    if (!ids.insert(s.id()).second) throw std::invalid_argument("portfolio ids must be unique");
  }
  Portfolio portfolio;
  portfolio.models.reserve(specs.size());
  for (const auto& s : specs) portfolio.models.push_back(train(s, data));
  return portfolio;
}

std::vector<LearnerSpec> default_portfolio_specs(int lag_order) {
  const auto p = static_cast<std::size_t>(std::max(1, lag_order));
  std::vector<LearnerSpec> specs;
  auto add = [&](Family family, Hyperparameters h) {
    std::size_t n = 1;
    for (const auto& s : specs) n += s.family() == family ? 1 : 0;
    specs.emplace_back(std::string(family_name(family)) + "_" + std::to_string(n), h);
  };

  for (double penalty : {1e-3, 0.1, 1.0, 10.0, 100.0}) add(Family::ridge, RidgeParams{penalty});

  for (double h : {0.5, 1.0, 2.0}) add(Family::kernel_ridge, KernelRidgeParams{Kernel::rbf, 0.1, h, 2, 1000});
  for (double h : {1.0, 2.0}) add(Family::kernel_ridge, KernelRidgeParams{Kernel::laplace, 0.1, h, 2, 1000});
  for (int d : {2, 3}) add(Family::kernel_ridge, KernelRidgeParams{Kernel::polynomial, 1.0, 1.0, d, 1000});
  add(Family::kernel_ridge, KernelRidgeParams{Kernel::rbf, 1.0, 4.0, 2, 1000});

  for (std::size_t k : {3, 5, 10, 20, 40}) add(Family::knn, KnnParams{k});

  add(Family::regression_tree, TreeParams{3, 5});
  add(Family::regression_tree, TreeParams{5, 5});
  add(Family::regression_tree, TreeParams{8, 5});
  add(Family::regression_tree, TreeParams{12, 3});

  const std::size_t mtry_small = std::min<std::size_t>(5, p);
  const std::size_t mtry_large = std::min<std::size_t>(10, p);
  add(Family::bagged_forest, ForestParams{100, mtry_small, 5, 16, 11});
  add(Family::bagged_forest, ForestParams{100, mtry_large, 5, 16, 12});
  add(Family::bagged_forest, ForestParams{100, mtry_small, 10, 16, 13});
  add(Family::bagged_forest, ForestParams{100, mtry_large, 10, 16, 14});

  add(Family::model_tree, ModelTreeParams{8, 8, 1e-3, true});
  add(Family::model_tree, ModelTreeParams{16, 8, 1e-3, true});
  add(Family::model_tree, ModelTreeParams{24, 4, 1e-3, true});
  add(Family::model_tree, ModelTreeParams{40, 3, 1e-3, false});
  return specs;
}

}  // namespace tscompress
