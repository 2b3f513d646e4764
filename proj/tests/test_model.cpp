#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "trustlex/model.hpp"
#include "trustlex/rng.hpp"

using namespace trustlex;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index p, Rng &rng) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("word_count_weight hits the paper's endpoints", "[model]") {
  WeightScheme linear{WeightKind::linear, 200, 1000, 100};
  CHECK(word_count_weight(200, linear) == 0.0);
  CHECK(word_count_weight(1000, linear) == 1.0);
  CHECK(word_count_weight(600, linear) == 0.5);
  CHECK(word_count_weight(50, linear) == 0.0);    // clamp below
  CHECK(word_count_weight(5000, linear) == 1.0);  // clamp above

  WeightScheme logistic{WeightKind::logistic, 200, 1000, 100};
  CHECK(word_count_weight(600, logistic) == 0.5);
  CHECK(word_count_weight(400, logistic) == Approx(1.0 / (1.0 + std::exp(25.0))).epsilon(1e-12));
  CHECK(word_count_weight(400, logistic) <= 1e-10);
  CHECK(word_count_weight(200, logistic) <= 1e-10);
  CHECK(1.0 - word_count_weight(1000, logistic) <= 1e-10);

  WeightScheme uniform;
  CHECK(word_count_weight(0, uniform) == 1.0);
  CHECK(word_count_weight(99999, uniform) == 1.0);
}

TEST_CASE("weights are nondecreasing in word count", "[model]") {
  for (auto kind : {WeightKind::linear, WeightKind::logistic}) {
    WeightScheme s{kind, 200, 1000, 100};
    double prev = -1;
    for (double wc = 0; wc <= 1500; wc += 25) {
      double w = word_count_weight(wc, s);
      CHECK(w >= prev);
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      prev = w;
    }
  }
  CHECK_THROWS_AS(word_count_weight(1, WeightScheme{WeightKind::linear, 1000, 200, 100}),
                  UsageError);
}

TEST_CASE("fit_ridge recovers an exact line", "[model]") {
  Eigen::MatrixXd x(2, 1);
  x << 1, 2;
  Eigen::VectorXd y(2);
  y << 2, 4;
  auto sol = fit_ridge(x, y, Eigen::VectorXd::Ones(2), 0.0);
  CHECK(sol.coefficients(0) == Approx(2.0).margin(1e-12));
  CHECK(sol.intercept == Approx(0.0).margin(1e-12));
}

TEST_CASE("fit_ridge matches the closed form on centered data", "[model]") {
  Eigen::MatrixXd x(2, 1);
  x << -1, 1;
  Eigen::VectorXd y(2);
  y << -1, 1;
  auto sol = fit_ridge(x, y, Eigen::VectorXd::Ones(2), 1.0);
  CHECK(sol.coefficients(0) == Approx(2.0 / 3.0).margin(1e-12));  // sum xy / (sum x^2 + lambda)
  CHECK(sol.intercept == Approx(0.0).margin(1e-12));
}

TEST_CASE("fit_ridge matches the normal-equations oracle", "[model]") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd x = random_matrix(20, 5, rng);
    Eigen::VectorXd y(20), w(20);
    for (int i = 0; i < 20; ++i) {
      y(i) = rng.normal();
      w(i) = rng.uniform01();
    }
    for (double lambda : {0.0, 1.0, 100.0}) {
      auto sol = fit_ridge(x, y, w, lambda);
      auto ref = oracle::weighted_ridge(x, y, w, lambda);
      CHECK((sol.coefficients - ref.coefficients).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(std::abs(sol.intercept - ref.intercept) < 1e-8);
    }
  }
}

TEST_CASE("zero-weight rows have no influence", "[model]") {
  Rng rng(32);
  Eigen::MatrixXd x = random_matrix(30, 4, rng);
  Eigen::VectorXd y(30), w(30);
  for (int i = 0; i < 30; ++i) {
    y(i) = rng.normal();
    w(i) = (i % 3 == 0) ? 0.0 : 0.5 + rng.uniform01();
  }
  auto full = fit_ridge(x, y, w, 2.0);

  std::vector<int> keep;
  for (int i = 0; i < 30; ++i)
    if (w(i) > 0) keep.push_back(i);
  Eigen::MatrixXd xs(static_cast<Eigen::Index>(keep.size()), 4);
  Eigen::VectorXd ys(static_cast<Eigen::Index>(keep.size())), wsv(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    xs.row(static_cast<Eigen::Index>(k)) = x.row(keep[k]);
    ys(static_cast<Eigen::Index>(k)) = y(keep[k]);
    wsv(static_cast<Eigen::Index>(k)) = w(keep[k]);
  }
  auto sub = fit_ridge(xs, ys, wsv, 2.0);
  CHECK((full.coefficients - sub.coefficients).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(full.intercept - sub.intercept) < 1e-10);
}

TEST_CASE("shrinkage is monotone in lambda on z-scored columns", "[model]") {
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd x = random_matrix(40, 6, rng);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) y(i) = rng.normal();
    Eigen::VectorXd w = Eigen::VectorXd::Ones(40);
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.01, 1.0, 10.0, 1000.0}) {
      auto sol = fit_ridge(x, y, w, lambda);
      double norm = (sol.coefficients.array() * sol.feature_std.array()).matrix().norm();
      CHECK(norm <= prev + 1e-12);
      prev = norm;
    }
  }
}

TEST_CASE("uniform weights equal any constant weights", "[model]") {
  Rng rng(34);
  Eigen::MatrixXd x = random_matrix(25, 3, rng);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) y(i) = rng.normal();
  auto ones = fit_ridge(x, y, Eigen::VectorXd::Ones(25), 5.0);
  for (double c : {0.1, 3.7, 2000.0}) {
    auto scaled = fit_ridge(x, y, Eigen::VectorXd::Constant(25, c), 5.0);
    CHECK((ones.coefficients - scaled.coefficients).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(ones.intercept - scaled.intercept) < 1e-10);
  }
}

TEST_CASE("fit_ridge rejects degenerate inputs", "[model]") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_AS(fit_ridge(x, y, Eigen::VectorXd::Zero(4), 1.0), DataError);
  Eigen::VectorXd bad = y;
  bad(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_ridge(x, bad, Eigen::VectorXd::Ones(4), 1.0), DataError);
  Eigen::VectorXd negw = Eigen::VectorXd::Ones(4);
  negw(0) = -0.5;
  CHECK_THROWS_AS(fit_ridge(x, y, negw, 1.0), DataError);
}

TEST_CASE("constant columns get zero coefficients", "[model]") {
  Rng rng(35);
  Eigen::MatrixXd x = random_matrix(20, 3, rng);
  x.col(1).setConstant(4.2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) y(i) = rng.normal();
  auto sol = fit_ridge(x, y, Eigen::VectorXd::Ones(20), 1.0);
  CHECK(sol.coefficients(1) == 0.0);
  CHECK(sol.feature_std(1) == 0.0);
}

TEST_CASE("select_lambda prefers no shrinkage on noiseless linear data", "[model]") {
  Rng rng(36);
  Eigen::MatrixXd x = random_matrix(60, 4, rng);
  Eigen::VectorXd beta(4);
  beta << 1.0, -2.0, 0.5, 3.0;
  Eigen::VectorXd y = x * beta;
  auto sel = select_lambda(x, y, Eigen::VectorXd::Ones(60), {1e-4, 1e-2, 1.0, 100.0}, 5, 1);
  CHECK(sel.lambda == Approx(1e-4));
}

TEST_CASE("select_lambda prefers heavy shrinkage on pure noise", "[model]") {
  int picked_max = 0;
  const int trials = 20;
  std::vector<double> grid = default_lambda_grid();
  for (int t = 0; t < trials; ++t) {
    Rng rng(100 + static_cast<std::uint64_t>(t));
    Eigen::MatrixXd x = random_matrix(40, 8, rng);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) y(i) = rng.normal();  // labels unrelated to x
    auto sel = select_lambda(x, y, Eigen::VectorXd::Ones(40), grid, 5,
                             static_cast<std::uint64_t>(t));
    if (sel.lambda == grid.back()) ++picked_max;
  }
  CHECK(picked_max >= trials * 3 / 4);
}

TEST_CASE("select_lambda degenerate grids and folds", "[model]") {
  Rng rng(37);
  Eigen::MatrixXd x = random_matrix(3, 2, rng);
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  auto one = select_lambda(x, y, Eigen::VectorXd::Ones(3), {7.5}, 5, 0);
  CHECK(one.lambda == 7.5);

  auto reduced = select_lambda(x, y, Eigen::VectorXd::Ones(3), {0.1, 10.0}, 5, 0);
  CHECK_FALSE(reduced.warnings.empty());

  CHECK_THROWS_AS(select_lambda(x, y, Eigen::VectorXd::Ones(3), {}, 5, 0), UsageError);
  CHECK_THROWS_AS(select_lambda(x, y, Eigen::VectorXd::Ones(3), {0.0, 1.0}, 5, 0), UsageError);
}

TEST_CASE("trait model serialization round-trips predictions bitwise", "[model]") {
  Rng rng(38);
  // small synthetic corpus through the real feature path
  Corpus corpus;
  std::vector<std::string> vocab = {"red", "green", "blue", "cyan", "teal", "plum"};
  std::vector<double> labels;
  std::vector<std::size_t> wcs;
  for (int u = 0; u < 60; ++u) {
    UserRecord rec;
    rec.user_id = "u" + std::to_string(100 + u);
    std::string text;
    int len = 30 + static_cast<int>(rng.below(40));
    for (int i = 0; i < len; ++i) {
      if (i) text.push_back(' ');
      text += vocab[rng.below(vocab.size())];
    }
    rec.messages.push_back({rec.user_id, "m0", text, {}});
    corpus.users.push_back(std::move(rec));
  }
  auto streams = tokenize_corpus(corpus);
  auto mats = build_feature_matrices(corpus, streams, {}, {1, 2});
  for (const auto &u : corpus.users) {
    labels.push_back(3.0 + rng.normal());
    wcs.push_back(*u.word_count);
  }

  TrainConfig cfg;
  cfg.seed = 404;
  cfg.lambda_grid = {1.0, 10.0};
  TraitModel model = fit_trait_model(mats, labels, wcs, cfg);
  Eigen::VectorXd before = predict(model, mats);

  std::string doc = model_to_json(model).dump();
  TraitModel loaded = model_from_json(nlohmann::json::parse(doc));
  Eigen::VectorXd after = predict(loaded, mats);
  REQUIRE(before.size() == after.size());
  CHECK(std::memcmp(before.data(), after.data(), sizeof(double) * before.size()) == 0);
  CHECK(model_to_json(loaded).dump() == doc);
  CHECK(loaded.n_train == model.n_train);
  CHECK(loaded.lambda == model.lambda);
}

TEST_CASE("identical all-zero users predict identically", "[model]") {
  Rng rng(39);
  Eigen::MatrixXd x = random_matrix(30, 3, rng);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) y(i) = x(i, 0) * 2 + rng.normal() * 0.01;
  auto sol = fit_ridge(x, y, Eigen::VectorXd::Ones(30), 0.5);
  // prediction is a pure function of the feature row
  Eigen::VectorXd zero_row = Eigen::VectorXd::Zero(3);
  double p1 = sol.coefficients.dot(zero_row) + sol.intercept;
  double p2 = sol.coefficients.dot(zero_row) + sol.intercept;
  CHECK(p1 == p2);
}

TEST_CASE("fit_trait_model drops zero-weight users entirely", "[model]") {
  Rng rng(40);
  Corpus corpus;
  std::vector<std::string> vocab = {"one", "two", "three", "four"};
  std::vector<double> labels;
  std::vector<std::size_t> wcs;
  for (int u = 0; u < 40; ++u) {
    UserRecord rec;
    rec.user_id = "u" + std::to_string(100 + u);
    std::string text;
    int len = (u < 10) ? 5 : 300;  // first ten users fall below t_min=200
    for (int i = 0; i < len; ++i) {
      if (i) text.push_back(' ');
      text += vocab[rng.below(vocab.size())];
    }
    rec.messages.push_back({rec.user_id, "m0", text, {}});
    corpus.users.push_back(std::move(rec));
  }
  auto streams = tokenize_corpus(corpus);
  auto mats = build_feature_matrices(corpus, streams, {}, {1});
  for (const auto &u : corpus.users) {
    labels.push_back(3.0 + rng.normal());
    wcs.push_back(*u.word_count);
  }
  TrainConfig cfg;
  cfg.scheme.kind = WeightKind::linear;
  cfg.lambda_grid = {1.0};
  TraitModel model = fit_trait_model(mats, labels, wcs, cfg);
  CHECK(model.n_train == 30);
}
