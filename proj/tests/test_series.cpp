#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "doctest.h"
#include "tscompress/series.hpp"

using namespace tscompress;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tscompress_series_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("time series rejects non-finite values and bad periods") {
  CHECK_THROWS_AS(TimeSeries("x", {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(TimeSeries("x", {1.0, std::numeric_limits<double>::infinity()}), std::invalid_argument);
  CHECK_THROWS_AS(TimeSeries("x", {1.0, 2.0}, 0), std::invalid_argument);
  TimeSeries s("x", {1.0, 2.0}, 12);
  CHECK(s.period() == 12);
  CHECK(s.size() == 2);
}

TEST_CASE("embed lays out lags newest first") {
  const auto d = embed(TimeSeries("a", {1, 2, 3, 4, 5}), 2);
  REQUIRE(d.rows() == 3);
  REQUIRE(d.width() == 2);
  const double expected[3][2] = {{2, 1}, {3, 2}, {4, 3}};
  for (int i = 0; i < 3; ++i) {
    CHECK(d.features(i, 0) == expected[i][0]);
    CHECK(d.features(i, 1) == expected[i][1]);
    CHECK(d.targets(i) == 3 + i);
    CHECK(d.row_ids[static_cast<std::size_t>(i)] == static_cast<std::size_t>(i));
  }
}

TEST_CASE("embed of a constant series") {
  const auto d = embed(TimeSeries("c", {7, 7, 7, 7}), 1);
  CHECK(d.rows() == 3);
  CHECK((d.features.array() == 7.0).all());
  CHECK((d.targets.array() == 7.0).all());
}

TEST_CASE("embed row count and index identity on a long series") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.1 * static_cast<double>(i)) + 0.001 * static_cast<double>(i);
  const auto d = embed(TimeSeries("l", v), 15);
  REQUIRE(d.rows() == 985);
  // 0-based: features(i, j) = y[p + i - 1 - j], target(i) = y[p + i].
  for (std::size_t i = 0; i < d.rows(); i += 37) {
    for (int j = 0; j < 15; ++j) CHECK(d.features(static_cast<Eigen::Index>(i), j) == v[15 + i - 1 - static_cast<std::size_t>(j)]);
    CHECK(d.targets(static_cast<Eigen::Index>(i)) == v[15 + i]);
  }
}

TEST_CASE("embed with lag one reconstructs the series") {
  const std::vector<double> v = {3, 1, 4, 1, 5, 9, 2, 6};
  const auto d = embed(TimeSeries("r", v), 1);
  std::vector<double> rebuilt;
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) rebuilt.push_back(d.features(i, 0));
  rebuilt.push_back(d.targets(d.targets.size() - 1));
  CHECK(rebuilt == v);
}

TEST_CASE("embed rejects short series") {
  CHECK_THROWS_WITH_AS(embed(TimeSeries("s", {1, 2}), 2), "series too short for lag order", std::invalid_argument);
}

TEST_CASE("slice and select keep row provenance") {
  const auto d = embed(TimeSeries("a", {1, 2, 3, 4, 5, 6, 7}), 2);
  const auto s = d.slice({1, 4});
  CHECK(s.rows() == 3);
  CHECK(s.row_ids == std::vector<std::size_t>{1, 2, 3});
  CHECK(s.targets(0) == d.targets(1));
  const auto sel = s.select(std::vector<std::size_t>{2, 0});
  CHECK(sel.row_ids == std::vector<std::size_t>{3, 1});
  CHECK(sel.features(0, 0) == d.features(3, 0));
}

TEST_CASE("repeated holdout follows the floor rule") {
  const auto plan = repeated_holdout(1000, 10, 0.6, 0.1, 42);
  REQUIRE(plan.repetitions.size() == 10);
  for (const auto& r : plan.repetitions) {
    CHECK(r.train.size() == 600);
    CHECK(r.test.size() == 100);
    CHECK(r.train.end == r.test.begin);
    CHECK(r.test.end <= 1000);
    CHECK(r.train.begin + 600 == r.test.begin);
  }
  const auto small = repeated_holdout(10, 1, 0.6, 0.1, 1);
  CHECK(small.repetitions[0].train.size() == 6);
  CHECK(small.repetitions[0].test.size() == 1);
}

TEST_CASE("repeated holdout is deterministic and serializes identically") {
  const auto a = repeated_holdout(500, 5, 0.6, 0.1, 9);
  const auto b = repeated_holdout(500, 5, 0.6, 0.1, 9);
  CHECK(a == b);
  CHECK(nlohmann::json(a).dump() == nlohmann::json(b).dump());
  CHECK(nlohmann::json(a).get<HoldoutPlan>() == a);
  const auto c = repeated_holdout(500, 5, 0.6, 0.1, 10);
  CHECK_FALSE(a == c);
}

TEST_CASE("repeated holdout cut points cover the feasible interval") {
  // Every cut point lies in [300, 450]; with many draws both ends of the range appear nearby.
  const auto plan = repeated_holdout(500, 2000, 0.6, 0.1, 3);
  std::size_t lo = 1000, hi = 0;
  for (const auto& r : plan.repetitions) {
    lo = std::min(lo, r.test.begin);
    hi = std::max(hi, r.test.begin);
  }
  CHECK(lo >= 300);
  CHECK(hi <= 450);
  CHECK(lo <= 302);
  CHECK(hi >= 448);
}

TEST_CASE("repeated holdout rejects infeasible fractions") {
  CHECK_THROWS_WITH_AS(repeated_holdout(100, 1, 0.8, 0.3, 1), "holdout fractions infeasible", std::invalid_argument);
  CHECK_THROWS_WITH_AS(repeated_holdout(5, 1, 0.6, 0.1, 1), "holdout fractions infeasible", std::invalid_argument);
}

TEST_CASE("blocked prequential on ten rows") {
  const auto plan = blocked_prequential(10, 5);
  REQUIRE(plan.blocks.size() == 5);
  for (const auto& b : plan.blocks) CHECK(b.size() == 2);
  REQUIRE(plan.folds.size() == 4);
  // Fold predicting block 3 (index 2).
  CHECK(plan.folds[1].train == IndexRange{0, 4});
  CHECK(plan.folds[1].predict == IndexRange{4, 6});

  const auto loo = blocked_prequential(10, 10);
  REQUIRE(loo.folds.size() == 9);
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(loo.folds[k].predict == IndexRange{k + 1, k + 2});
    CHECK(loo.folds[k].train == IndexRange{0, k + 1});
  }
}

TEST_CASE("blocked prequential sizes differ by at most one") {
  for (std::size_t n = 2; n <= 60; ++n) {
    for (std::size_t b = 2; b <= n; ++b) {
      const auto plan = blocked_prequential(n, b);
      std::size_t lo = n, hi = 0, covered = 0, next = 0;
      for (const auto& blk : plan.blocks) {
        lo = std::min(lo, blk.size());
        hi = std::max(hi, blk.size());
        CHECK(blk.begin == next);
        next = blk.end;
        covered += blk.size();
      }
      CHECK(covered == n);
      CHECK(hi - lo <= 1);
      std::set<std::size_t> predicted;
      for (const auto& f : plan.folds) {
        CHECK(f.train.end == f.predict.begin);
        CHECK(f.train.begin == 0);
        for (std::size_t i = f.predict.begin; i < f.predict.end; ++i) CHECK(predicted.insert(i).second);
      }
      CHECK(predicted.size() == n - plan.blocks[0].size());
    }
  }
  const auto seven = blocked_prequential(7, 3);
  CHECK(seven.blocks[0].size() == 3);
  CHECK(seven.blocks[1].size() == 2);
  CHECK(seven.blocks[2].size() == 2);
}

TEST_CASE("blocked prequential errors") {
  CHECK_THROWS_WITH_AS(blocked_prequential(10, 1), "prequential needs at least two blocks", std::invalid_argument);
  CHECK_THROWS_AS(blocked_prequential(3, 4), std::invalid_argument);
}

TEST_CASE("naive scale") {
  CHECK(naive_scale(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(1.0));
  const std::vector<double> v = {0, 2, 1, 4};
  double brute = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) brute += std::abs(v[i] - v[i - 1]);
  brute /= static_cast<double>(v.size() - 1);
  CHECK(naive_scale(v) == doctest::Approx(brute));
  CHECK(naive_scale(v) == doctest::Approx(2.0));
  CHECK_THROWS_WITH_AS(naive_scale(std::vector<double>{5, 5, 5}), "zero naive error; MASE undefined", std::domain_error);
}

TEST_CASE("series CSV round trip with sidecar metadata") {
  const auto dir = scratch_dir("csv");
  TimeSeries s("demo", {0.1, 1e-17, -3.25, 12345.678901234567}, 7);
  write_series_csv(dir / "demo.csv", s);
  const auto back = read_series_csv(dir / "demo.csv");
  CHECK(back.id() == "demo");
  CHECK(back.period() == 7);
  REQUIRE(back.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back[i] == s[i]);
}

TEST_CASE("series CSV names the offending row") {
  const auto dir = scratch_dir("bad");
  std::ofstream(dir / "bad.csv") << "value\n1.0\n2.0\nnan\n4.0\n";
  try {
    read_series_csv(dir / "bad.csv");
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("row 4") != std::string::npos);
  }
  std::ofstream(dir / "hole.csv") << "1.0\n\n3.0\n";
  CHECK_THROWS_AS(read_series_csv(dir / "hole.csv"), std::runtime_error);
  std::ofstream(dir / "plain.csv") << "1\n2\n3\n";
  const auto plain = read_series_csv(dir / "plain.csv");
  CHECK(plain.id() == "plain");
  CHECK(plain.size() == 3);
}

TEST_CASE("prequential plan serializes as index pairs") {
  const auto j = nlohmann::json(blocked_prequential(6, 3));
  CHECK(j["blocks"][1] == nlohmann::json::array({2, 4}));
}
