#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "tscompress/learners.hpp"
#include "tscompress/random.hpp"

using namespace tscompress;

namespace {

EmbeddedDataset make_data(Eigen::MatrixXd x, Eigen::VectorXd y) {
  EmbeddedDataset d;
  d.lag_order = static_cast<int>(x.cols());
  d.row_ids.resize(static_cast<std::size_t>(y.size()));
  for (std::size_t i = 0; i < d.row_ids.size(); ++i) d.row_ids[i] = i;
  d.features = std::move(x);
  d.targets = std::move(y);
  return d;
}

EmbeddedDataset sample_data(std::size_t n, int p, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
    y(i) = std::sin(x(i, 0)) + 0.5 * x(i, p > 1 ? 1 : 0) + 0.1 * rng.normal();
  }
  return make_data(x, y);
}

// Penalized least squares with an unpenalized intercept, solved on the augmented system.
Eigen::VectorXd ridge_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  Eigen::MatrixXd lhs = a.transpose() * a;
  for (Eigen::Index j = 1; j < lhs.rows(); ++j) lhs(j, j) += penalty;
  return lhs.colPivHouseholderQr().solve(a.transpose() * y);
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

}  // namespace

TEST_CASE("ridge without penalty interpolates linear data") {
  Eigen::MatrixXd x(6, 1);
  x << -2, -1, 0, 1, 3, 4;
  Eigen::VectorXd y = 2.0 * x.col(0).array() + 1.0;
  const auto m = train(LearnerSpec("r", RidgeParams{0.0}), make_data(x, y));
  const auto c = m.linear_coefficients();
  REQUIRE(c);
  CHECK(std::abs(c->coefficients(0) - 2.0) <= 1e-9);
  CHECK(std::abs(c->intercept - 1.0) <= 1e-9);
  Eigen::MatrixXd q(1, 1);
  q << 5;
  CHECK(m.predict(q)(0) == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("ridge matches the augmented normal equations") {
  const auto d = sample_data(80, 4, 5);
  for (double penalty : {0.0, 0.5, 10.0}) {
    const auto m = train(LearnerSpec("r", RidgeParams{penalty}), d);
    const auto oracle = ridge_oracle(d.features, d.targets, penalty);
    const auto c = *m.linear_coefficients();
    CHECK(std::abs(c.intercept - oracle(0)) <= 1e-9);
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(std::abs(c.coefficients(j) - oracle(j + 1)) <= 1e-9);
  }
}

TEST_CASE("ridge shrinkage is monotone") {
  const auto d = sample_data(60, 3, 11);
  double previous = std::numeric_limits<double>::infinity();
  for (double penalty : {0.0, 1.0, 1e6}) {
    const double norm = train(LearnerSpec("r", RidgeParams{penalty}), d).linear_coefficients()->coefficients.norm();
    CHECK(norm <= previous);
    previous = norm;
  }
  CHECK(previous < 1e-3);
}

TEST_CASE("knn with k=1 returns the stored target") {
  const auto d = sample_data(40, 3, 2);
  const auto m = train(LearnerSpec("k", KnnParams{1}), d);
  const auto pred = m.predict(d.features);
  for (Eigen::Index i = 0; i < pred.size(); ++i) CHECK(pred(i) == d.targets(i));
}

TEST_CASE("depth-one tree finds the best split") {
  Rng rng(3);
  Eigen::MatrixXd x(50, 2);
  Eigen::VectorXd y(50);
  for (Eigen::Index i = 0; i < 50; ++i) {
    x(i, 0) = rng.uniform() * 2.0 - 1.0;
    x(i, 1) = rng.uniform();
    y(i) = x(i, 0) >= 0.0 ? 1.0 : -1.0;
  }
  const auto m = train(LearnerSpec("t", TreeParams{1, 1}), make_data(x, y));

  // Brute force: every feature, every midpoint threshold, lowest SSE.
  double best_sse = std::numeric_limits<double>::infinity();
  double best_left = 0.0, best_right = 0.0;
  int best_feature = -1;
  double best_threshold = 0.0;
  for (int j = 0; j < 2; ++j) {
    std::vector<double> v(x.col(j).data(), x.col(j).data() + 50);
    std::sort(v.begin(), v.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      const double thr = 0.5 * (v[k] + v[k + 1]);
      double sl = 0, sr = 0, nl = 0, nr = 0;
      for (Eigen::Index i = 0; i < 50; ++i) (x(i, j) <= thr ? (sl += y(i), nl += 1) : (sr += y(i), nr += 1));
      if (nl == 0 || nr == 0) continue;
      double sse = 0.0;
      for (Eigen::Index i = 0; i < 50; ++i) {
        const double mean = x(i, j) <= thr ? sl / nl : sr / nr;
        sse += (y(i) - mean) * (y(i) - mean);
      }
      if (sse < best_sse) {
        best_sse = sse;
        best_feature = j;
        best_threshold = thr;
        best_left = sl / nl;
        best_right = sr / nr;
      }
    }
  }
  REQUIRE(best_feature == 0);
  CHECK(best_left == doctest::Approx(-1.0));
  CHECK(best_right == doctest::Approx(1.0));
  Eigen::MatrixXd q(2, 2);
  q << best_threshold - 0.01, 0.5, best_threshold + 0.01, 0.5;
  const auto p = m.predict(q);
  CHECK(p(0) == doctest::Approx(best_left));
  CHECK(p(1) == doctest::Approx(best_right));
  CHECK(m.node_count() == 3);
}

TEST_CASE("tree predictions are piecewise constant") {
  const auto d = sample_data(200, 2, 8);
  const auto m = train(LearnerSpec("t", TreeParams{4, 5}), d);
  const auto pred = m.predict(d.features);
  std::set<double> distinct(pred.data(), pred.data() + pred.size());
  CHECK(distinct.size() <= 16);
  // Nudging a query by far less than any split gap leaves it in the same leaf.
  Eigen::MatrixXd q = d.features.topRows(20);
  Eigen::MatrixXd q2 = q.array() + 1e-12;
  CHECK((m.predict(q) - m.predict(q2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant targets give a constant model") {
  const auto d = sample_data(30, 3, 1);
  EmbeddedDataset c = d;
  c.targets.setConstant(3.5);
  for (const auto& spec : default_portfolio_specs(3)) {
    const auto m = train(spec, c);
    const auto p = m.predict(sample_data(10, 3, 99).features);
    CHECK((p.array() - 3.5).abs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("all-constant features fall back to an intercept-only fit") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(20, 3, 2.0);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(20, 0.0, 19.0);
  const auto m = train(LearnerSpec("t", TreeParams{}), make_data(x, y));
  CHECK(m.degenerate());
  CHECK(m.predict(Eigen::MatrixXd::Random(4, 3)).isConstant(9.5));
  const auto size_a = model_size(m);
  const auto size_b = model_size(train(LearnerSpec("t", TreeParams{}), make_data(x, y)));
  CHECK(size_a == size_b);
  CHECK(size_a < 200);
}

TEST_CASE("predict checks the feature width") {
  const auto m = train(LearnerSpec("r", RidgeParams{}), sample_data(20, 3, 1));
  CHECK_THROWS_WITH_AS(m.predict(Eigen::MatrixXd::Zero(2, 4)), "feature dimension mismatch", std::invalid_argument);
}

TEST_CASE("a one-tree forest predicts like its tree") {
  const auto d = sample_data(100, 4, 4);
  const auto forest = train(LearnerSpec("f", ForestParams{1, 2, 3, 10, 5}), d);
  const auto members = forest.forest_members();
  REQUIRE(members.size() == 1);
  const auto q = sample_data(30, 4, 77).features;
  CHECK((forest.predict(q) - members[0].predict(q)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forest size grows with the number of trees") {
  const auto d = sample_data(100, 4, 4);
  const auto one = model_size(train(LearnerSpec("f", ForestParams{10, 0, 5, 8, 1}), d));
  const auto two = model_size(train(LearnerSpec("f", ForestParams{20, 0, 5, 8, 1}), d));
  CHECK(two > one);
}

TEST_CASE("knn size grows linearly with stored rows") {
  const auto small = model_size(train(LearnerSpec("k", KnnParams{3}), sample_data(100, 5, 1)));
  const auto large = model_size(train(LearnerSpec("k", KnnParams{3}), sample_data(400, 5, 1)));
  const double ratio = static_cast<double>(large) / static_cast<double>(small);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("rbf kernel ridge with a wide bandwidth tracks ridge on linear data") {
  Rng rng(12);
  Eigen::MatrixXd x(150, 2);
  Eigen::VectorXd y(150);
  for (Eigen::Index i = 0; i < 150; ++i) {
    x(i, 0) = rng.uniform() * 2 - 1;
    x(i, 1) = rng.uniform() * 2 - 1;
    y(i) = 1.5 * x(i, 0) - 0.5 * x(i, 1) + 2.0;
  }
  const auto d = make_data(x, y);
  const auto ridge = train(LearnerSpec("r", RidgeParams{1e-6}), d);
  const auto krr = train(LearnerSpec("k", KernelRidgeParams{Kernel::rbf, 1e-4, 10.0, 2, 1000}), d);
  Eigen::MatrixXd q(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i) {
    q(i, 0) = rng.uniform() * 1.6 - 0.8;
    q(i, 1) = rng.uniform() * 1.6 - 0.8;
  }
  const double gap = (ridge.predict(q) - krr.predict(q)).cwiseAbs().maxCoeff();
  CHECK(gap < 0.05);
}

TEST_CASE("model tree beats a regression tree of equal depth on piecewise-linear data") {
  Rng rng(21);
  Eigen::MatrixXd x(400, 2);
  Eigen::VectorXd y(400);
  for (Eigen::Index i = 0; i < 400; ++i) {
    x(i, 0) = rng.uniform() * 4 - 2;
    x(i, 1) = rng.uniform() * 4 - 2;
    y(i) = x(i, 0) < 0 ? 3.0 * x(i, 1) + 1.0 : -2.0 * x(i, 1) + x(i, 0);
  }
  const auto d = make_data(x, y);
  const auto tree = train(LearnerSpec("t", TreeParams{3, 8}), d);
  const auto mt = train(LearnerSpec("m", ModelTreeParams{8, 3, 1e-3, true}), d);
  CHECK(mse(mt.predict(x), y) < mse(tree.predict(x), y));
}

TEST_CASE("training is deterministic and serialization round-trips") {
  const auto d = sample_data(120, 5, 6);
  const auto q = sample_data(25, 5, 60).features;
  for (const auto& spec : default_portfolio_specs(5)) {
    const auto a = train(spec, d);
    const auto b = train(spec, d);
    const auto bytes = a.serialize();
    CHECK(bytes == b.serialize());
    const auto back = TrainedModel::deserialize(bytes);
    CHECK(back.spec() == spec);
    CHECK(back.fingerprint() == a.fingerprint());
    CHECK((back.predict(q) - a.predict(q)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.serialize() == bytes);
  }
}

TEST_CASE("deserialize rejects foreign bytes") {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8};
  CHECK_THROWS(TrainedModel::deserialize(junk));
}

TEST_CASE("fingerprints identify the training rows") {
  const auto d = sample_data(50, 2, 1);
  const auto m = train(LearnerSpec("r", RidgeParams{}), d.slice({10, 30}));
  CHECK(m.fingerprint().rows == 20);
  CHECK(m.fingerprint().first_row == 10);
  CHECK(m.fingerprint().last_row == 29);
  CHECK(m.fingerprint() == fingerprint_of(d.slice({10, 30})));
  CHECK_FALSE(m.fingerprint() == fingerprint_of(d.slice({11, 31})));
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(LearnerSpec("k", KnnParams{0}), std::invalid_argument);
  CHECK_THROWS_AS(LearnerSpec("r", RidgeParams{-1.0}), std::invalid_argument);
  CHECK_THROWS_AS(LearnerSpec("f", ForestParams{0}), std::invalid_argument);
  CHECK_THROWS_AS(LearnerSpec("", RidgeParams{}), std::invalid_argument);
  CHECK_THROWS_AS(LearnerSpec("m", ModelTreeParams{0}), std::invalid_argument);
  CHECK_THROWS_AS(train(LearnerSpec("f", ForestParams{5, 4}), sample_data(20, 3, 1)), std::invalid_argument);
}

TEST_CASE("spec JSON round trip") {
  for (const auto& spec : default_portfolio_specs(15)) {
    const nlohmann::json j = spec;
    CHECK(j.at("family").get<std::string>() == family_name(spec.family()));
    CHECK(j.get<LearnerSpec>() == spec);
  }
}

TEST_CASE("default portfolio") {
  const auto specs = default_portfolio_specs(15);
  CHECK(specs.size() == 30);
  std::set<std::string> ids;
  std::set<Family> families;
  for (const auto& s : specs) {
    ids.insert(s.id());
    families.insert(s.family());
  }
  CHECK(ids.size() == 30);
  CHECK(families.size() == 6);

  const auto d = sample_data(120, 15, 3);
  const auto portfolio = train_portfolio(specs, d);
  CHECK(portfolio.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(portfolio.models[i].spec().id() == specs[i].id());
  const auto preds = portfolio.predict(sample_data(10, 15, 4).features);
  CHECK(preds.cols() == 30);
  CHECK(preds.allFinite());
}

TEST_CASE("portfolio construction errors") {
  const auto d = sample_data(30, 2, 1);
  CHECK_THROWS_WITH_AS(train_portfolio(std::vector<LearnerSpec>{}, d), "portfolio must be non-empty",
                       std::invalid_argument);
  const std::vector<LearnerSpec> dup = {LearnerSpec("a", RidgeParams{}), LearnerSpec("a", KnnParams{})};
  CHECK_THROWS_WITH_AS(train_portfolio(dup, d), "portfolio ids must be unique", std::invalid_argument);
}

TEST_CASE("forest seeds change held-out predictions") {
  const auto d = sample_data(150, 4, 9);
  const std::vector<LearnerSpec> specs = {LearnerSpec("f1", ForestParams{20, 2, 5, 8, 1}),
                                          LearnerSpec("f2", ForestParams{20, 2, 5, 8, 2})};
  const auto p = train_portfolio(specs, d).predict(sample_data(30, 4, 10).features);
  CHECK((p.col(0) - p.col(1)).cwiseAbs().maxCoeff() > 1e-6);
}
