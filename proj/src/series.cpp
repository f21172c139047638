#include "tscompress/series.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tscompress/random.hpp"

namespace tscompress {

namespace {

std::size_t floor_fraction(double frac, std::size_t n) {
  // 0.6 * 1000 must give 600, not 599.
  return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

}  // namespace

TimeSeries::TimeSeries(std::string id, std::vector<double> values, std::optional<int> period)
    : id_(std::move(id)), values_(std::move(values)), period_(period) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw std::invalid_argument("series '" + id_ + "' has a non-finite value at index " +
                                  std::to_string(i));
    }
  }
  if (period_ && *period_ <= 0) throw std::invalid_argument("series period must be positive");
}

EmbeddedDataset EmbeddedDataset::slice(IndexRange range) const {
  if (range.end > rows() || range.begin > range.end) {
    throw std::out_of_range("dataset slice out of range");
  }
  const auto b = static_cast<Eigen::Index>(range.begin);
  const auto n = static_cast<Eigen::Index>(range.size());
  EmbeddedDataset out;
  out.features = features.middleRows(b, n);
  out.targets = targets.segment(b, n);
  out.lag_order = lag_order;
  out.row_ids.assign(row_ids.begin() + b, row_ids.begin() + b + n);
  return out;
}

EmbeddedDataset EmbeddedDataset::select(std::span<const std::size_t> rows_wanted) const {
  EmbeddedDataset out;
  out.lag_order = lag_order;
  out.features.resize(static_cast<Eigen::Index>(rows_wanted.size()), features.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows_wanted.size()));
  out.row_ids.reserve(rows_wanted.size());
  for (std::size_t k = 0; k < rows_wanted.size(); ++k) {
    const auto r = rows_wanted[k];
    if (r >= rows()) throw std::out_of_range("dataset row out of range");
    out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(r));
    out.targets(static_cast<Eigen::Index>(k)) = targets(static_cast<Eigen::Index>(r));
    out.row_ids.push_back(row_ids[r]);
  }
  return out;
}

EmbeddedDataset embed(const TimeSeries& series, int lag_order) {
  if (lag_order <= 0) throw std::invalid_argument("lag order must be positive");
  const auto p = static_cast<std::size_t>(lag_order);
  const std::size_t n = series.size();
  if (n <= p) throw std::invalid_argument("series too short for lag order");

  const std::size_t rows = n - p;
  EmbeddedDataset data;
  data.lag_order = lag_order;
  data.features.resize(static_cast<Eigen::Index>(rows), lag_order);
  data.targets.resize(static_cast<Eigen::Index>(rows));
  data.row_ids.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < p; ++j) {
      data.features(r, static_cast<Eigen::Index>(j)) = series[p + i - 1 - j];
    }
    data.targets(r) = series[p + i];
    data.row_ids[i] = i;
  }
  return data;
}

HoldoutPlan repeated_holdout(std::size_t n_rows, std::size_t reps, double train_frac,
                             double test_frac, std::uint64_t seed) {
  if (reps == 0) throw std::invalid_argument("holdout needs at least one repetition");
  if (!(train_frac > 0.0) || !(test_frac > 0.0) || train_frac + test_frac > 1.0 + 1e-12) {
    throw std::invalid_argument("holdout fractions infeasible");
  }
  const std::size_t train_len = floor_fraction(train_frac, n_rows);
  const std::size_t test_len = floor_fraction(test_frac, n_rows);
  if (train_len == 0 || test_len == 0 || train_len + test_len > n_rows) {
    throw std::invalid_argument("holdout fractions infeasible");
  }

  // Feasible cut points: [train_len, n_rows - test_len], inclusive.
  const std::size_t lo = train_len;
  const std::size_t span = n_rows - test_len - lo + 1;

  HoldoutPlan plan;
  plan.seed = seed;
  Rng rng(seed);
  for (std::size_t r = 0; r < reps; ++r) {
    const std::size_t cut = lo + static_cast<std::size_t>(rng.index(span));
    plan.repetitions.push_back({{cut - train_len, cut}, {cut, cut + test_len}});
  }
  return plan;
}

PrequentialPlan blocked_prequential(std::size_t n_rows, std::size_t n_blocks) {
  if (n_blocks < 2) throw std::invalid_argument("prequential needs at least two blocks");
  if (n_blocks > n_rows) throw std::invalid_argument("prequential blocks exceed row count");

  PrequentialPlan plan;
  const std::size_t base = n_rows / n_blocks;
  const std::size_t extra = n_rows % n_blocks;
  std::size_t start = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    plan.blocks.push_back({start, start + len});
    start += len;
  }
  for (std::size_t b = 1; b < n_blocks; ++b) {
    plan.folds.push_back({{0, plan.blocks[b].begin}, plan.blocks[b]});
  }
  return plan;
}

double naive_scale(std::span<const double> y) {
  if (y.size() < 2) throw std::invalid_argument("naive scale needs at least two targets");
  double total = 0.0;
  for (std::size_t i = 1; i < y.size(); ++i) total += std::abs(y[i] - y[i - 1]);
  const double scale = total / static_cast<double>(y.size() - 1);
  if (!(scale > 0.0)) throw std::domain_error("zero naive error; MASE undefined");
  return scale;
}

TimeSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // First column only; extra columns are ignored.
    std::string cell = trim(line.substr(0, line.find(',')));
    if (line_no == 1 && (cell == "value" || cell == "Value")) continue;
    if (cell.empty() && trim(line).empty() && in.peek() == EOF) break;
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw std::runtime_error(path.filename().string() + ": row " + std::to_string(line_no) +
                               ": unparseable or missing value '" + cell + "'");
    }
    if (!std::isfinite(v)) {
      throw std::runtime_error(path.filename().string() + ": row " + std::to_string(line_no) +
                               ": non-finite value");
    }
    values.push_back(v);
  }

  std::string id = path.stem().string();
  std::optional<int> period;
  auto sidecar = path;
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    std::ifstream meta_in(sidecar);
    const auto meta = nlohmann::json::parse(meta_in);
    if (meta.contains("id")) id = meta["id"].get<std::string>();
    if (meta.contains("period") && !meta["period"].is_null()) period = meta["period"].get<int>();
  }
  return TimeSeries(std::move(id), std::move(values), period);
}

void write_series_csv(const std::filesystem::path& path, const TimeSeries& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "value\n";
  out.precision(17);
  for (double v : series.values()) out << v << '\n';
  nlohmann::json meta = {{"id", series.id()}};
  if (series.period()) meta["period"] = *series.period();
  auto sidecar = path;
  sidecar.replace_extension(".json");
  std::ofstream(sidecar) << meta.dump(2) << '\n';
}

void to_json(nlohmann::json& j, const IndexRange& r) { j = nlohmann::json::array({r.begin, r.end}); }

void from_json(const nlohmann::json& j, IndexRange& r) {
  r.begin = j.at(0).get<std::size_t>();
  r.end = j.at(1).get<std::size_t>();
}

void to_json(nlohmann::json& j, const HoldoutPlan& plan) {
  j = nlohmann::json::object();
  j["seed"] = plan.seed;
  auto& reps = j["repetitions"] = nlohmann::json::array();
  for (const auto& s : plan.repetitions) reps.push_back({{"train", s.train}, {"test", s.test}});
}

void from_json(const nlohmann::json& j, HoldoutPlan& plan) {
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.repetitions.clear();
  for (const auto& r : j.at("repetitions")) {
    plan.repetitions.push_back({r.at("train").get<IndexRange>(), r.at("test").get<IndexRange>()});
  }
}

void to_json(nlohmann::json& j, const PrequentialPlan& plan) {
  j = nlohmann::json::object();
  j["blocks"] = plan.blocks;
  auto& folds = j["folds"] = nlohmann::json::array();
  for (const auto& f : plan.folds) folds.push_back({{"train", f.train}, {"predict", f.predict}});
}

}  // namespace tscompress
