#include "tscompress/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tscompress/random.hpp"

namespace tscompress {

double mase(std::span<const double> predictions, std::span<const double> actuals, double scale) {
  if (predictions.size() != actuals.size()) throw std::invalid_argument("row count mismatch");
  if (!(scale > 0.0)) throw std::domain_error("zero naive error; MASE undefined");
  if (predictions.empty()) throw std::invalid_argument("MASE needs at least one prediction");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += std::abs(predictions[i] - actuals[i]);
  return total / static_cast<double>(predictions.size()) / scale;
}

void ScoreMatrix::set(const std::string& method, const ScoreColumn& column, double value) {
  if (!std::isfinite(value) || value < 0.0) throw std::invalid_argument("MASE cells must be finite and >= 0");
  if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
  cells_[column][method] = value;
}

std::optional<double> ScoreMatrix::get(const std::string& method, const ScoreColumn& column) const {
  const auto c = cells_.find(column);
  if (c == cells_.end()) return std::nullopt;
  const auto m = c->second.find(method);
  if (m == c->second.end()) return std::nullopt;
  return m->second;
}

std::vector<ScoreColumn> ScoreMatrix::columns() const {
  std::vector<ScoreColumn> out;
  for (const auto& [c, _] : cells_) out.push_back(c);
  return out;
}

bool ScoreMatrix::complete(const std::string& method) const {
  return std::all_of(cells_.begin(), cells_.end(), [&](const auto& c) { return c.second.count(method) > 0; });
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ScoreMatrix::write_csv(std::ostream& out) const {
  out << "method,series,repetition,mase\n";
  std::vector<std::string> sorted = methods_;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& m : sorted) {
    for (const auto& [c, row] : cells_) {
      const auto it = row.find(m);
      if (it == row.end()) continue;
      out << m << ',' << c.series << ',' << c.repetition << ',' << format_double(it->second) << '\n';
    }
  }
}

ScoreMatrix ScoreMatrix::read_csv(std::istream& in) {
  ScoreMatrix s;
  std::string line;
  std::getline(in, line);
  if (line.rfind("method,series,repetition,mase", 0) != 0) throw std::runtime_error("not a score CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string method, series, rep, value;
    std::getline(ss, method, ',');
    std::getline(ss, series, ',');
    std::getline(ss, rep, ',');
    std::getline(ss, value, ',');
    s.set(method, {series, static_cast<std::size_t>(std::stoull(rep))}, std::stod(value));
  }
  return s;
}

std::vector<double> rank_with_ties(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

std::vector<RankSummary> average_ranks(const ScoreMatrix& scores, std::span<const std::string> methods) {
  const auto columns = scores.columns();
  std::vector<std::vector<double>> per_method(methods.size());
  std::vector<double> values(methods.size());
  for (const auto& c : columns) {
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const auto v = scores.get(methods[k], c);
      if (!v) throw std::invalid_argument("incomplete column for ranking");
      values[k] = *v;
    }
    const auto r = rank_with_ties(values);
    for (std::size_t k = 0; k < methods.size(); ++k) per_method[k].push_back(r[k]);
  }
  std::vector<RankSummary> out;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    RankSummary s;
    s.method = methods[k];
    const auto& r = per_method[k];
    if (!r.empty()) {
      s.mean_rank = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
      if (r.size() > 1) {
        double ss = 0.0;
        for (double x : r) ss += (x - s.mean_rank) * (x - s.mean_rank);
        s.sd_rank = std::sqrt(ss / static_cast<double>(r.size() - 1));
      }
    }
    out.push_back(s);
  }
  return out;
}

std::vector<RankSummary> average_ranks(const ScoreMatrix& scores) {
  return average_ranks(scores, scores.methods());
}

BayesResult bayes_sign_test(std::span<const double> pct_diffs, Rope rope, std::size_t mc_samples,
                            double prior_strength, std::uint64_t seed) {
  if (!(rope.lo < rope.hi)) throw std::invalid_argument("empty ROPE");
  if (mc_samples == 0) throw std::invalid_argument("Monte Carlo sample count must be positive");
  if (prior_strength < 0.0) throw std::invalid_argument("prior strength must be >= 0");

  BayesResult result;
  result.rope = rope;
  result.samples = mc_samples;
  for (double d : pct_diffs) {
    if (d > rope.hi) {
      ++result.n_win;
    } else if (d < rope.lo) {
      ++result.n_lose;
    } else {
      ++result.n_rope;
    }
  }
  const double a_lose = static_cast<double>(result.n_lose);
  const double a_rope = static_cast<double>(result.n_rope) + prior_strength;
  const double a_win = static_cast<double>(result.n_win);
  if (a_lose + a_rope + a_win <= 0.0) throw std::invalid_argument("no differences and no prior mass");

  Rng rng(seed);
  std::size_t lose = 0, draw = 0, win = 0;
  for (std::size_t s = 0; s < mc_samples; ++s) {
    // Normalization does not change which coordinate is largest.
    const double gl = rng.gamma(a_lose);
    const double gr = rng.gamma(a_rope);
    const double gw = rng.gamma(a_win);
    if (gr >= gl && gr >= gw) {
      ++draw;
    } else if (gw > gl) {
      ++win;
    } else {
      ++lose;
    }
  }
  const double n = static_cast<double>(mc_samples);
  result.p_win = static_cast<double>(win) / n;
  result.p_rope = static_cast<double>(draw) / n;
  result.p_lose = static_cast<double>(lose) / n;
  return result;
}

double percentage_difference(double mase_a, double mase_b) {
  if (!(mase_b > 0.0)) throw std::domain_error("percentage difference needs a positive reference MASE");
  return 100.0 * (mase_b - mase_a) / mase_b;
}

void to_json(nlohmann::json& j, const BayesResult& r) {
  j = {{"p_win", r.p_win},
       {"p_rope", r.p_rope},
       {"p_lose", r.p_lose},
       {"rope", {r.rope.lo, r.rope.hi}},
       {"samples", r.samples},
       {"counts", {{"win", r.n_win}, {"rope", r.n_rope}, {"lose", r.n_lose}}},
       {"convention", "diff = 100*(MASE_b - MASE_a)/MASE_b; win means a better"}};
}

namespace {

template <typename F>
double median_seconds(F&& pass) {
  std::vector<double> t;
  for (int i = 0; i < 5; ++i) {
    const auto start = std::chrono::steady_clock::now();
    pass();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[2];
}

}  // namespace

CostProfile profile_cost(const TrainedModel& model, const Eigen::MatrixXd& test_features) {
  CostProfile c;
  c.size_bytes = model_size(model);
  if (test_features.rows() == 0) return c;
  volatile double sink = 0.0;
  c.predict_seconds = median_seconds([&] { sink = sink + model.predict(test_features).sum(); });
  return c;
}

CostProfile profile_cost(const Portfolio& portfolio, const Combiner& combiner, const Eigen::MatrixXd& test_features,
                         std::span<const double> actuals) {
  if (actuals.size() != static_cast<std::size_t>(test_features.rows())) throw std::invalid_argument("row count mismatch");
  CostProfile c;
  for (const auto& m : portfolio.models) c.size_bytes += model_size(m);
  c.size_bytes += combiner.serialize().size();
  if (test_features.rows() == 0) return c;

  volatile double sink = 0.0;
  c.predict_seconds = median_seconds([&] {
    Combiner live = combiner;
    const Eigen::MatrixXd preds = portfolio.predict(test_features);
    std::vector<double> row(static_cast<std::size_t>(preds.cols()));
    std::vector<double> feats(static_cast<std::size_t>(test_features.cols()));
    for (Eigen::Index r = 0; r < preds.rows(); ++r) {
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = preds(r, static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < feats.size(); ++j) feats[j] = test_features(r, static_cast<Eigen::Index>(j));
      sink = sink + live.combine(row, feats);
      live.update(row, actuals[static_cast<std::size_t>(r)], feats);
    }
  });
  return c;
}

}  // namespace tscompress
