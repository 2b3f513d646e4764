#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "oracles.hpp"
#include "trustlex/eval.hpp"
#include "trustlex/synth.hpp"

using namespace trustlex;
using Catch::Approx;

namespace {

Featurized synth_featurized(SynthConfig cfg, const std::string &tag,
                            std::vector<int> orders = {1, 2}) {
  oracle::TempDir dir(tag);
  auto out = generate(cfg, dir.path());
  Corpus corpus = load_corpus(out.messages_path.string(), out.responses_path.string());
  return featurize_corpus(std::move(corpus), {}, std::move(orders));
}

TrainConfig small_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.reduce.target_fraction = 0.3;  // desk-scale corpora need more than 5%
  cfg.lambda_grid = {1.0, 100.0};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("pearson_r basics and derived value", "[eval]") {
  std::vector<double> a = {1, 2, 3}, b = {1, 2, 4};
  CHECK(pearson_r(a, a) == Approx(1.0));
  std::vector<double> na = {-1, -2, -3};
  CHECK(pearson_r(a, na) == Approx(-1.0));
  CHECK(pearson_r(a, b) == Approx(0.9819805060619659).epsilon(1e-12));
  std::vector<double> flat = {2, 2, 2};
  CHECK_THROWS_AS(pearson_r(a, flat), DataError);
  std::vector<double> one = {1};
  CHECK_THROWS_AS(pearson_r(one, one), DataError);
}

TEST_CASE("pearson_r is invariant under positive affine transforms", "[eval]") {
  Rng rng(60);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(15), b(15), a2(15), b2(15);
    for (int i = 0; i < 15; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      a2[i] = 2.5 * a[i] + 7;
      b2[i] = 0.3 * b[i] - 4;
    }
    CHECK(pearson_r(a2, b2) == Approx(pearson_r(a, b)).margin(1e-12));
  }
}

TEST_CASE("disattenuated_r follows the reliability formula", "[eval]") {
  CHECK(disattenuated_r(0.0) == 0.0);
  CHECK(disattenuated_r(0.70, 0.70, 0.70) == 1.0);
  CHECK(disattenuated_r(0.3458) == Approx(0.494).margin(5e-4));
  CHECK_THROWS_AS(disattenuated_r(0.5, 0.0, 0.7), DataError);
}

TEST_CASE("mse basics and decomposition", "[eval]") {
  std::vector<double> y = {1, 2}, yhat = {2, 4};
  std::vector<double> zeros = {0, 0}, ones = {1, 1};
  CHECK(mse(y, y) == 0.0);
  CHECK(mse(zeros, ones) == 1.0);
  CHECK(mse(y, yhat) == Approx(2.5));

  Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(20), b(20), resid(20);
    for (int i = 0; i < 20; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      resid[i] = a[i] - b[i];
    }
    double m = mean(resid);
    double var = 0;
    for (double r : resid) var += (r - m) * (r - m);
    var /= 20;
    CHECK(mse(a, b) == Approx(var + m * m).margin(1e-12));
  }
}

TEST_CASE("cross-validation predicts every eligible user exactly once", "[eval]") {
  SynthConfig sc;
  sc.n_short_users = 0;
  sc.n_long_users = 40;
  sc.wc_log_median = 60;
  sc.wc_sigma = 0.4;
  sc.signal_strength = 1.5;
  sc.seed = 11;
  auto fz = synth_featurized(sc, "cv", {1});
  auto cfg = small_train_config(5);
  EvalParams ep;

  auto rep = cross_validate_kfold(fz, Version::q10, cfg, ep, 10, 99);
  CHECK(rep.n_test == 40);
  CHECK(rep.user_ids.size() == 40);
  std::set<std::string> unique(rep.user_ids.begin(), rep.user_ids.end());
  CHECK(unique.size() == 40);

  auto rep2 = cross_validate_kfold(fz, Version::q10, cfg, ep, 10, 99);
  CHECK(rep2.y_pred == rep.y_pred);
  CHECK(rep2.mse == rep.mse);

  CHECK_THROWS_WITH(cross_validate_kfold(fz, Version::q10, cfg, ep, 50, 99),
                    Catch::Matchers::ContainsSubstring("fewer folds"));
}

TEST_CASE("S2 and S3 share a model but score different labels", "[eval]") {
  SynthConfig sc;
  sc.n_short_users = 150;
  sc.n_long_users = 40;
  sc.wc_log_median = 80;
  sc.wc_sigma = 0.5;
  sc.signal_strength = 1.5;
  sc.noise_std = 0.8;
  sc.seed = 12;
  auto fz = synth_featurized(sc, "s23", {1});
  auto cfg = small_train_config(7);
  EvalParams ep;

  auto s2 = run_setting(fz, Setting::S2, cfg, ep);
  auto s3 = run_setting(fz, Setting::S3, cfg, ep);
  CHECK(s2.setting == "S2");
  CHECK(s3.setting == "S3");
  CHECK(s2.y_pred == s3.y_pred);  // identical model, bitwise
  CHECK(s2.y_true != s3.y_true);
  CHECK(s2.n_test == 40);
  CHECK(s2.n_train == s3.n_train);
  CHECK(s2.n_train == 150);  // the short-only users
  CHECK(s2.user_ids == s3.user_ids);

  // no test user may enter the training group
  for (const auto &id : s2.user_ids) {
    const UserRecord *u = fz.corpus.find(id);
    REQUIRE(u != nullptr);
    CHECK(u->trust_10q.has_value());
  }
}

TEST_CASE("run_setting rejects empty groups", "[eval]") {
  SynthConfig sc;
  sc.n_short_users = 0;  // nobody left to train S2/S3 on
  sc.n_long_users = 25;
  sc.wc_log_median = 50;
  sc.wc_sigma = 0.3;
  sc.seed = 13;
  auto fz = synth_featurized(sc, "empty", {1});
  CHECK_THROWS_WITH(run_setting(fz, Setting::S3, small_train_config(1), EvalParams{}),
                    Catch::Matchers::ContainsSubstring("training group"));
}

TEST_CASE("error_by_wordcount bins residuals", "[eval]") {
  EvaluationReport rep;
  rep.user_ids = {"a", "b", "c", "d"};
  rep.y_true = {3.0, 3.0, 3.0, 3.0};
  rep.y_pred = {3.5, 2.0, 3.0, 4.0};
  rep.word_counts = {10, 20, 30, 40};

  // one bin swallowing everything: value equals the overall MAE
  auto one = error_by_wordcount(rep, {0});
  REQUIRE(one.size() == 1);
  CHECK(one[0].n == 4);
  CHECK(one[0].value == Approx((0.5 + 1.0 + 0.0 + 1.0) / 4));

  // zero residuals give zero bins
  EvaluationReport perfect = rep;
  perfect.y_pred = perfect.y_true;
  for (const auto &b : error_by_wordcount(perfect, {0, 25}))
    CHECK(b.value == 0.0);

  // empty bins are absent, not zero
  auto bins = error_by_wordcount(rep, {0, 100, 1000});
  REQUIRE(bins.size() == 1);
  CHECK(bins[0].lo == 0);
  CHECK(bins[0].n == 4);

  // mse metric squares the residuals
  auto sq = error_by_wordcount(rep, {0}, "mse");
  CHECK(sq[0].value == Approx((0.25 + 1.0 + 0.0 + 1.0) / 4));

  CHECK_THROWS_AS(error_by_wordcount(rep, {}), UsageError);
  CHECK_THROWS_AS(error_by_wordcount(rep, {0}, "rmse"), UsageError);
}

TEST_CASE("training size sweep honors scheme membership", "[eval]") {
  SynthConfig sc;
  sc.n_short_users = 70;
  sc.n_long_users = 16;
  sc.wc_log_median = 900;  // straddles t_min/t_max
  sc.wc_sigma = 1.0;
  sc.signal_strength = 1.2;
  sc.seed = 14;
  auto fz = synth_featurized(sc, "sweep", {1});
  auto cfg = small_train_config(3);
  cfg.lambda_grid = {10.0};
  EvalParams ep;

  std::size_t high = 0, low_over_tmin = 0, low_over_strict = 0;
  for (std::size_t i = 0; i < fz.corpus.users.size(); ++i) {
    const auto &u = fz.corpus.users[i];
    if (!u.trust_3q || u.trust_10q) continue;
    double wc = static_cast<double>(fz.word_count(i));
    if (wc >= 1000) ++high;
    else {
      if (wc >= 200) ++low_over_tmin;
      if (wc > 200) ++low_over_strict;
    }
  }
  REQUIRE(high >= 10);

  auto cells = training_size_sweep(fz, {5, 10}, {"threshold-1000", "threshold-200", "linear"},
                                   cfg, ep, 77, 2);
  REQUIRE(cells.size() == 6);
  for (const auto &cell : cells) {
    if (cell.scheme == "threshold-1000") CHECK(cell.mean_n_train == Approx(cell.size));
    if (cell.scheme == "threshold-200")
      CHECK(cell.mean_n_train == Approx(cell.size + low_over_tmin));
    if (cell.scheme == "linear")
      CHECK(cell.mean_n_train == Approx(cell.size + low_over_strict));
  }

  CHECK_THROWS_WITH(training_size_sweep(fz, {high + 50}, {"linear"}, cfg, ep, 77, 1),
                    Catch::Matchers::ContainsSubstring("exceeds"));
}

TEST_CASE("planted signal yields high pooled CV correlation", "[eval]") {
  SynthConfig sc;
  sc.n_short_users = 0;
  sc.n_long_users = 120;
  sc.wc_log_median = 300;
  sc.wc_sigma = 0.4;
  sc.signal_strength = 3.0;
  sc.noise_std = 0.3;
  sc.seed = 15;
  auto fz = synth_featurized(sc, "planted", {1});
  auto cfg = small_train_config(9);
  auto rep = cross_validate_kfold(fz, Version::q10, cfg, EvalParams{}, 10, 1);
  CHECK(rep.pearson_r > 0.8);
}

TEST_CASE("report serialization carries the full payload", "[eval]") {
  EvaluationReport rep;
  rep.setting = "S3";
  rep.n_train = 10;
  rep.n_test = 2;
  rep.mse = 0.5;
  rep.pearson_r = 0.4;
  rep.r_dis = disattenuated_r(0.4);
  rep.user_ids = {"a", "b"};
  rep.y_true = {3, 4};
  rep.y_pred = {3.5, 3.9};
  rep.word_counts = {100, 2000};
  rep.bins = error_by_wordcount(rep, {0, 1000});
  auto j = report_to_json(rep);
  CHECK(j.at("setting") == "S3");
  CHECK(j.at("bins").size() == 2);
  CHECK(j.at("y_pred").size() == 2);

  std::ostringstream text;
  write_report_text(rep, text);
  CHECK(text.str().find("pearson_r") != std::string::npos);
  std::ostringstream bins;
  write_bins_csv(rep.bins, bins);
  CHECK(bins.str().find("lo,hi,n,value") == 0);
}
