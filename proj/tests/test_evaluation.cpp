#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "tscompress/evaluation.hpp"
#include "tscompress/random.hpp"

using namespace tscompress;

namespace {

EmbeddedDataset rows_from(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n + 4);
  for (auto& x : v) x = rng.normal();
  return embed(TimeSeries("e", v), 4);
}

// Rank by sorting indices and averaging positions over runs of equal values.
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

}  // namespace

TEST_CASE("MASE examples") {
  const std::vector<double> y = {1, 2, 3};
  CHECK(mase(y, y, 1.0) == 0.0);
  CHECK(mase(std::vector<double>{3, 0, 5}, y, 1.0) == doctest::Approx(2.0));
  CHECK_THROWS_WITH_AS(mase(y, y, 0.0), "zero naive error; MASE undefined", std::domain_error);
  CHECK_THROWS_AS(mase(y, std::vector<double>{1, 2}, 1.0), std::invalid_argument);
}

TEST_CASE("MASE of the naive forecast") {
  Rng rng(4);
  std::vector<double> series(400);
  for (std::size_t t = 1; t < series.size(); ++t) series[t] = 0.5 * series[t - 1] + rng.normal();
  const std::vector<double> train(series.begin(), series.begin() + 300);
  const std::vector<double> test(series.begin() + 300, series.end());
  std::vector<double> naive(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) naive[i] = series[300 + i - 1];

  double train_mae = 0.0, test_mae = 0.0;
  for (std::size_t t = 1; t < train.size(); ++t) train_mae += std::abs(train[t] - train[t - 1]);
  train_mae /= static_cast<double>(train.size() - 1);
  for (std::size_t i = 0; i < test.size(); ++i) test_mae += std::abs(test[i] - naive[i]);
  test_mae /= static_cast<double>(test.size());

  const double got = mase(naive, test, naive_scale(train));
  CHECK(got == doctest::Approx(test_mae / train_mae).epsilon(1e-12));
  CHECK(got == doctest::Approx(1.0).epsilon(0.3));
}

TEST_CASE("MASE is scale equivariant in the errors") {
  Rng rng(5);
  std::vector<double> actual(50), pred(50);
  for (std::size_t i = 0; i < 50; ++i) {
    actual[i] = rng.normal();
    pred[i] = actual[i] + rng.normal();
  }
  const double base = mase(pred, actual, 0.7);
  for (double c : {0.5, 2.0, 10.0}) {
    std::vector<double> scaled(50);
    for (std::size_t i = 0; i < 50; ++i) scaled[i] = actual[i] + c * (pred[i] - actual[i]);
    CHECK(mase(scaled, actual, 0.7) == doctest::Approx(c * base).epsilon(1e-12));
  }
}

TEST_CASE("ranks for a dominant method") {
  ScoreMatrix m;
  for (std::size_t c = 0; c < 3; ++c) {
    m.set("A", {"s", c}, 0.5);
    m.set("B", {"s", c}, 0.9);
  }
  const auto r = average_ranks(m);
  REQUIRE(r.size() == 2);
  CHECK(r[0].method == "A");
  CHECK(r[0].mean_rank == 1.0);
  CHECK(r[0].sd_rank == 0.0);
  CHECK(r[1].mean_rank == 2.0);
}

TEST_CASE("ties share the average rank") {
  CHECK(rank_with_ties(std::vector<double>{0.3, 0.3}) == std::vector<double>{1.5, 1.5});
  CHECK(rank_with_ties(std::vector<double>{2.0, 1.0, 2.0, 0.5}) == std::vector<double>{3.5, 2.0, 3.5, 1.0});
}

TEST_CASE("ranks match a brute-force oracle") {
  const std::vector<std::string> methods = {"X", "Y", "Z"};
  const double table[3][4] = {{0.9, 0.4, 1.2, 0.7}, {0.8, 0.4, 1.5, 0.6}, {1.0, 0.3, 1.1, 0.7}};
  ScoreMatrix m;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 4; ++c) m.set(methods[i], {"s" + std::to_string(c), 0}, table[i][c]);
  }
  std::vector<std::vector<double>> per_method(3);
  for (std::size_t c = 0; c < 4; ++c) {
    const auto r = brute_ranks({table[0][c], table[1][c], table[2][c]});
    CHECK(r[0] + r[1] + r[2] == 6.0);
    for (std::size_t i = 0; i < 3; ++i) per_method[i].push_back(r[i]);
  }
  const auto got = average_ranks(m, methods);
  for (std::size_t i = 0; i < 3; ++i) {
    const double mean = std::accumulate(per_method[i].begin(), per_method[i].end(), 0.0) / 4.0;
    double ss = 0.0;
    for (double x : per_method[i]) ss += (x - mean) * (x - mean);
    CHECK(got[i].method == methods[i]);
    CHECK(got[i].mean_rank == doctest::Approx(mean));
    CHECK(got[i].sd_rank == doctest::Approx(std::sqrt(ss / 3.0)));
  }
}

TEST_CASE("rank columns sum to k(k+1)/2 under random ties") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.index(9);
    std::vector<double> v(k);
    for (auto& x : v) x = static_cast<double>(rng.index(4));
    const auto r = rank_with_ties(v);
    CHECK(std::accumulate(r.begin(), r.end(), 0.0) == doctest::Approx(static_cast<double>(k * (k + 1)) / 2.0));
    CHECK(r == brute_ranks(v));
  }
}

TEST_CASE("ranking rejects incomplete columns") {
  ScoreMatrix m;
  m.set("A", {"s", 0}, 1.0);
  m.set("B", {"s", 0}, 2.0);
  m.set("A", {"s", 1}, 1.0);
  CHECK_FALSE(m.complete("B"));
  CHECK_THROWS_WITH_AS(average_ranks(m), "incomplete column for ranking", std::invalid_argument);
}

TEST_CASE("score matrix CSV round trip") {
  ScoreMatrix m;
  m.set("ST.Simple/model-tree", {"b", 1}, 0.123456789012345);
  m.set("EWA", {"a", 0}, 1.5);
  m.set("EWA", {"b", 1}, 2.0 / 3.0);
  CHECK_THROWS_AS(m.set("EWA", {"c", 0}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(m.set("EWA", {"c", 0}, std::nan("")), std::invalid_argument);
  std::ostringstream out;
  m.write_csv(out);
  CHECK(out.str().rfind("method,series,repetition,mase\nEWA,a,0,", 0) == 0);
  std::istringstream in(out.str());
  const auto back = ScoreMatrix::read_csv(in);
  CHECK(back.get("EWA", {"b", 1}) == 2.0 / 3.0);
  CHECK(back.get("ST.Simple/model-tree", {"b", 1}) == 0.123456789012345);
  CHECK_FALSE(back.get("ST.Simple/model-tree", {"a", 0}).has_value());
  std::ostringstream again;
  back.write_csv(again);
  CHECK(again.str() == out.str());
}

TEST_CASE("Bayes sign test examples against an independent sampler") {
  const Rope rope{-1.0, 1.0};
  std::vector<double> inside(90);
  for (std::size_t i = 0; i < 90; ++i) inside[i] = -0.9 + 0.02 * static_cast<double>(i);
  const auto a = bayes_sign_test(inside, rope, 100000, 1.0, 1);
  CHECK(a.n_rope == 90);
  CHECK(a.p_rope > 0.99);
  CHECK(oracle::dirichlet_winner(0, 91, 0, 20000, 3).p_rope > 0.99);

  std::vector<double> sym;
  for (int i = 0; i < 30; ++i) {
    sym.push_back(-5.0);
    sym.push_back(5.0);
    sym.push_back(0.0);
  }
  const auto b = bayes_sign_test(sym, rope, 100000, 1.0, 2);
  CHECK(std::abs(b.p_win - b.p_lose) < 0.02);
  const auto ref = oracle::dirichlet_winner(30, 31, 30, 100000, 7);
  CHECK(std::abs(b.p_win - ref.p_win) < 0.01);
  CHECK(std::abs(b.p_rope - ref.p_rope) < 0.01);
  CHECK(std::abs(b.p_lose - ref.p_lose) < 0.01);

  const auto c = bayes_sign_test(std::vector<double>{10.0}, rope, 100000, 1.0, 3);
  CHECK(c.p_win < 1.0);
  CHECK(c.p_win > 0.0);
  const auto cref = oracle::dirichlet_winner(0, 1, 1, 100000, 9);
  CHECK(std::abs(c.p_win - cref.p_win) < 0.01);

  // Asymmetric counts exercise every category.
  const std::vector<double> mixed = {-3, -2, 0.5, 4, 5, 6, 7, 0, -8, 9};
  const auto d = bayes_sign_test(mixed, rope, 100000, 1.0, 4);
  const auto dref = oracle::dirichlet_winner(3, 3, 5, 100000, 11);
  CHECK(std::abs(d.p_win - dref.p_win) < 0.01);
  CHECK(std::abs(d.p_lose - dref.p_lose) < 0.01);
}

TEST_CASE("Bayes probabilities sum to one and are deterministic") {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> diffs(5 + rng.index(40));
    for (auto& x : diffs) x = 4.0 * rng.normal();
    const auto r = bayes_sign_test(diffs, {-1, 1}, 10000, 1.0, 5);
    CHECK(std::abs(r.p_win + r.p_rope + r.p_lose - 1.0) <= 1e-6);
    CHECK(r.p_win >= 0.0);
    const auto again = bayes_sign_test(diffs, {-1, 1}, 10000, 1.0, 5);
    CHECK(again.p_win == r.p_win);
    CHECK(again.p_rope == r.p_rope);
  }
}

TEST_CASE("Bayes monotonicity when a loss becomes a win") {
  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> diffs(20);
    for (auto& x : diffs) x = 3.0 * rng.normal();
    auto it = std::find_if(diffs.begin(), diffs.end(), [](double d) { return d < -1.0; });
    if (it == diffs.end()) continue;
    const auto before = bayes_sign_test(diffs, {-1, 1}, 20000, 1.0, 21);
    *it = 5.0;
    const auto after = bayes_sign_test(diffs, {-1, 1}, 20000, 1.0, 21);
    CHECK(after.p_win >= before.p_win - 0.01);
  }
}

TEST_CASE("Bayes input checks and JSON") {
  CHECK_THROWS_WITH_AS(bayes_sign_test(std::vector<double>{1.0}, {1.0, 1.0}, 100, 1.0, 1), "empty ROPE",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(bayes_sign_test(std::vector<double>{1.0}, {2.0, -2.0}, 100, 1.0, 1), "empty ROPE",
                       std::invalid_argument);
  const auto r = bayes_sign_test(std::vector<double>{2.0, -3.0}, {-1, 1}, 1000, 1.0, 1);
  const nlohmann::json j = r;
  CHECK(j.at("counts").at("win") == 1);
  CHECK(j.at("counts").at("lose") == 1);
  CHECK(j.contains("convention"));
}

TEST_CASE("percentage difference sign convention") {
  CHECK(percentage_difference(0.9, 1.0) == doctest::Approx(10.0));
  CHECK(percentage_difference(1.1, 1.0) == doctest::Approx(-10.0));
  CHECK_THROWS_AS(percentage_difference(1.0, 0.0), std::domain_error);
}

TEST_CASE("cost profile of an empty test set") {
  const auto data = rows_from(60, 14);
  const auto model = train(LearnerSpec("r", RidgeParams{1.0}), data);
  const auto empty = Eigen::MatrixXd(0, 4);
  const auto full = profile_cost(model, data.features);
  const auto none = profile_cost(model, empty);
  CHECK(none.predict_seconds >= 0.0);
  CHECK(none.predict_seconds < 1e-3);
  CHECK(none.size_bytes == full.size_bytes);
  CHECK(full.size_bytes == model.serialize().size());
}

TEST_CASE("ensemble cost grows linearly with rows") {
  const auto data = rows_from(4000, 15);
  const std::vector<LearnerSpec> specs = {LearnerSpec("knn", KnnParams{5}), LearnerSpec("f", ForestParams{20, 0, 5, 8, 1}),
                                          LearnerSpec("r", RidgeParams{1.0})};
  const auto portfolio = train_portfolio(specs, data.slice({0, 1000}));
  CombinerConfig cfg;
  cfg.kind = CombinerKind::EWA;
  const Combiner combiner(cfg, 3);
  const auto half = data.slice({1000, 2500});
  const auto whole = data.slice({1000, 4000});
  const std::vector<double> half_y(half.targets.data(), half.targets.data() + half.targets.size());
  const std::vector<double> whole_y(whole.targets.data(), whole.targets.data() + whole.targets.size());
  const auto a = profile_cost(portfolio, combiner, half.features, half_y);
  const auto b = profile_cost(portfolio, combiner, whole.features, whole_y);
  const double ratio = b.predict_seconds / a.predict_seconds;
  CHECK(ratio >= 1.0);
  CHECK(ratio <= 3.0);
  CHECK(a.size_bytes == b.size_bytes);
  CHECK(combiner.updates() == 0);
  std::size_t members = 0;
  for (const auto& m : portfolio.models) members += m.serialize().size();
  CHECK(a.size_bytes == members + combiner.serialize().size());
}

TEST_CASE("cost size is deterministic") {
  const auto data = rows_from(200, 16);
  const auto model = train(LearnerSpec("mt", ModelTreeParams{}), data);
  CHECK(profile_cost(model, data.features).size_bytes == profile_cost(model, data.features).size_bytes);
  CHECK(model.serialize() == model.serialize());
}
