#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustlex/reduce.hpp"
#include "trustlex/rng.hpp"

namespace trustlex {

enum class WeightKind { uniform, linear, logistic };

inline const char *weight_kind_name(WeightKind k) {
  switch (k) {
    case WeightKind::uniform: return "uniform";
    case WeightKind::linear: return "linear";
    case WeightKind::logistic: return "logistic";
  }
  throw InternalError("unknown weight kind");
}

inline WeightKind parse_weight_kind(std::string_view s) {
  if (s == "uniform") return WeightKind::uniform;
  if (s == "linear") return WeightKind::linear;
  if (s == "logistic") return WeightKind::logistic;
  throw UsageError("unknown weight scheme '" + std::string(s) +
                   "' (expected uniform, linear or logistic)");
}

struct WeightScheme {
  WeightKind kind = WeightKind::uniform;
  double t_min = 200;
  double t_max = 1000;
  double alpha = 100;
};

inline void validate_scheme(const WeightScheme &s) {
  if (!(s.t_min < s.t_max)) throw UsageError("weight scheme requires t_min < t_max");
  if (!(s.alpha > 0)) throw UsageError("weight scheme requires alpha > 0");
}

/// Training weight of a user as a function of word count: uniform is 1,
/// linear ramps from 0 at t_min to 1 at t_max, logistic squashes the linear
/// ramp through 1/(1+exp(-alpha*(w-1/2))).
inline double word_count_weight(double wc, const WeightScheme &scheme) {
  validate_scheme(scheme);
  if (scheme.kind == WeightKind::uniform) return 1.0;
  double clamped = std::min(scheme.t_max, std::max(scheme.t_min, wc));
  double linear = (clamped - scheme.t_min) / (scheme.t_max - scheme.t_min);
  if (scheme.kind == WeightKind::linear) return linear;
  return 1.0 / (1.0 + std::exp(-scheme.alpha * (linear - 0.5)));
}

/// Weighted ridge fit: minimizes sum_i w~_i (y_i - beta.x_i - b)^2 +
/// lambda * ||gamma||^2 where gamma are the coefficients on weighted
/// z-scored columns; the intercept is never penalized. Coefficients are
/// reported in the original column space. Weighted moments are population
/// style (denominator sum of weights).
///
/// w~ is w rescaled so the positive weights average one: only relative
/// weights matter, lambda stays comparable across weighting schemes, and
/// dropping zero-weight rows changes nothing.
struct RidgeSolution {
  Eigen::VectorXd coefficients;
  double intercept = 0;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;  // 0 marks a column treated as constant
};

namespace detail {

inline Eigen::VectorXd normalize_weights(const Eigen::VectorXd &w, const char *who) {
  if (!w.allFinite()) throw DataError(std::string(who) + ": non-finite weights");
  if ((w.array() < 0).any()) throw DataError(std::string(who) + ": negative weights");
  double sw = w.sum();
  if (!(sw > 0)) throw DataError(std::string(who) + ": all weights are zero");
  double positives = static_cast<double>((w.array() > 0).count());
  return w * (positives / sw);
}

}  // namespace detail

inline RidgeSolution fit_ridge(const Eigen::MatrixXd &x, const Eigen::VectorXd &y,
                               const Eigen::VectorXd &w_raw, double lambda) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y.size() != n || w_raw.size() != n) throw DataError("fit_ridge: row count mismatch");
  if (n == 0) throw DataError("fit_ridge: empty problem");
  if (lambda < 0) throw UsageError("fit_ridge: lambda must be non-negative");
  if (!x.allFinite() || !y.allFinite()) throw DataError("fit_ridge: non-finite inputs");
  Eigen::VectorXd w = detail::normalize_weights(w_raw, "fit_ridge");
  const double sw = w.sum();

  RidgeSolution sol;
  sol.feature_mean = (x.transpose() * w) / sw;
  Eigen::MatrixXd centered = x.rowwise() - sol.feature_mean.transpose();
  Eigen::VectorXd var =
      ((centered.array().square().colwise() * w.array()).colwise().sum() / sw).transpose();
  sol.feature_std = var.array().max(0.0).sqrt();

  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (sol.feature_std(j) > 1e-12 * std::max(1.0, std::abs(sol.feature_mean(j))))
      active.push_back(j);
    else
      sol.feature_std(j) = 0.0;  // constant column
  }

  const double y_mean = w.dot(y) / sw;
  sol.coefficients = Eigen::VectorXd::Zero(p);
  sol.intercept = y_mean;
  if (active.empty()) return sol;

  Eigen::MatrixXd z(n, static_cast<Eigen::Index>(active.size()));
  for (std::size_t jj = 0; jj < active.size(); ++jj)
    z.col(static_cast<Eigen::Index>(jj)) = centered.col(active[jj]) / sol.feature_std(active[jj]);

  Eigen::MatrixXd gram = z.transpose() * (z.array().colwise() * w.array()).matrix();
  gram.diagonal().array() += lambda;
  Eigen::VectorXd rhs = z.transpose() * (w.array() * (y.array() - y_mean)).matrix();
  Eigen::VectorXd gamma = gram.ldlt().solve(rhs);

  for (std::size_t jj = 0; jj < active.size(); ++jj) {
    Eigen::Index j = active[jj];
    sol.coefficients(j) = gamma(static_cast<Eigen::Index>(jj)) / sol.feature_std(j);
    sol.intercept -= gamma(static_cast<Eigen::Index>(jj)) * sol.feature_mean(j) / sol.feature_std(j);
  }
  return sol;
}

inline std::vector<double> default_lambda_grid() {
  return {1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5};
}

struct LambdaSelection {
  double lambda = 0;
  std::vector<std::pair<double, double>> cv_mse;  // (lambda, weighted mse), grid order
  std::vector<std::string> warnings;
};

/// Internal k-fold selection of the ridge penalty by weighted held-out MSE.
/// Ties break toward the larger lambda. Per-fold Gram matrices are computed
/// once and shared across the grid. Weights follow the fit_ridge convention.
inline LambdaSelection select_lambda(const Eigen::MatrixXd &x, const Eigen::VectorXd &y,
                                     const Eigen::VectorXd &w_raw, std::vector<double> grid,
                                     int folds = 5, std::uint64_t seed = 0) {
  if (grid.empty()) throw UsageError("select_lambda: empty lambda grid");
  for (double l : grid)
    if (!(l > 0)) throw UsageError("select_lambda: grid values must be positive");
  std::sort(grid.begin(), grid.end());
  LambdaSelection sel;
  if (grid.size() == 1) {
    sel.lambda = grid[0];
    return sel;
  }
  const Eigen::Index n = x.rows();
  if (y.size() != n || w_raw.size() != n) throw DataError("select_lambda: row count mismatch");
  Eigen::VectorXd w = detail::normalize_weights(w_raw, "select_lambda");
  if (folds < 2) throw UsageError("select_lambda: need at least 2 folds");
  if (n < folds) {
    sel.warnings.push_back("select_lambda: fewer rows (" + std::to_string(n) + ") than folds (" +
                           std::to_string(folds) + "); reducing folds");
    folds = static_cast<int>(n);
  }
  if (folds < 2) {
    sel.lambda = grid.back();
    return sel;
  }

  // z-score on full-data weighted moments; the per-fold intercept is handled
  // exactly via an augmented unpenalized column of ones
  const double sw = w.sum();
  if (!(sw > 0)) throw DataError("select_lambda: all weights are zero");
  Eigen::VectorXd mu = (x.transpose() * w) / sw;
  Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  Eigen::VectorXd var =
      ((centered.array().square().colwise() * w.array()).colwise().sum() / sw).transpose();
  Eigen::VectorXd sd = var.array().max(0.0).sqrt();
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (sd(j) > 1e-12 * std::max(1.0, std::abs(mu(j)))) active.push_back(j);

  const Eigen::Index pa = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd za(n, pa + 1);
  for (Eigen::Index jj = 0; jj < pa; ++jj) za.col(jj) = centered.col(active[jj]) / sd(active[jj]);
  za.col(pa).setOnes();

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "lambda_cv"));
  rng.shuffle(order);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i]] = static_cast<int>(i % folds);

  std::vector<Eigen::MatrixXd> fold_gram(folds, Eigen::MatrixXd::Zero(pa + 1, pa + 1));
  std::vector<Eigen::VectorXd> fold_rhs(folds, Eigen::VectorXd::Zero(pa + 1));
  std::vector<std::vector<Eigen::Index>> fold_rows(folds);
  for (Eigen::Index i = 0; i < n; ++i) fold_rows[fold_of[static_cast<std::size_t>(i)]].push_back(i);
  for (int f = 0; f < folds; ++f) {
    for (Eigen::Index i : fold_rows[f]) {
      fold_gram[f].selfadjointView<Eigen::Lower>().rankUpdate(za.row(i).transpose(), w(i));
      fold_rhs[f] += w(i) * y(i) * za.row(i).transpose();
    }
    fold_gram[f] = fold_gram[f].selfadjointView<Eigen::Lower>();
  }
  Eigen::MatrixXd total_gram = Eigen::MatrixXd::Zero(pa + 1, pa + 1);
  Eigen::VectorXd total_rhs = Eigen::VectorXd::Zero(pa + 1);
  for (int f = 0; f < folds; ++f) {
    total_gram += fold_gram[f];
    total_rhs += fold_rhs[f];
  }

  double best_mse = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double sse = 0, sww = 0;
    for (int f = 0; f < folds; ++f) {
      if (fold_rows[f].empty()) continue;
      Eigen::MatrixXd g = total_gram - fold_gram[f];
      for (Eigen::Index j = 0; j < pa; ++j) g(j, j) += lambda;  // intercept unpenalized
      Eigen::VectorXd theta = g.ldlt().solve(total_rhs - fold_rhs[f]);
      for (Eigen::Index i : fold_rows[f]) {
        double resid = y(i) - za.row(i).dot(theta);
        sse += w(i) * resid * resid;
        sww += w(i);
      }
    }
    double cv_mse = sww > 0 ? sse / sww : std::numeric_limits<double>::infinity();
    sel.cv_mse.emplace_back(lambda, cv_mse);
    if (cv_mse <= best_mse) {  // ascending grid: ties go to the larger lambda
      best_mse = cv_mse;
      sel.lambda = lambda;
    }
  }
  return sel;
}

/// Fitted trait model: the reduction pipeline it rides on, ridge
/// coefficients over the embedding, the weighting scheme, and enough
/// metadata to reproduce the fit.
struct TraitModel {
  ReductionPipeline pipeline;
  RidgeSolution ridge;
  double lambda = 0;
  WeightScheme scheme;
  std::string label_version = "3q";
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
};

struct TrainConfig {
  ReduceParams reduce;
  WeightScheme scheme;
  std::vector<double> lambda_grid = default_lambda_grid();
  int cv_folds = 5;
  std::string label_version = "3q";
  std::uint64_t seed = 0;
};

/// End-to-end fit on training rows: word-count weights (zero-weight users
/// are excluded entirely, matching the hard-threshold reading), reduction
/// pipeline, lambda selection, weighted ridge.
inline TraitModel fit_trait_model(const std::vector<FeatureMatrix> &train_mats,
                                  std::span<const double> labels,
                                  std::span<const std::size_t> word_counts,
                                  const TrainConfig &cfg) {
  if (train_mats.empty()) throw DataError("fit_trait_model: no feature families");
  const std::size_t n = train_mats[0].rows();
  if (labels.size() != n || word_counts.size() != n)
    throw DataError("fit_trait_model: labels/word counts not aligned with rows");

  std::vector<double> weights(n);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = word_count_weight(static_cast<double>(word_counts[i]), cfg.scheme);
    if (weights[i] > 0) kept.push_back(i);
  }
  if (kept.empty()) throw DataError("fit_trait_model: all training users have zero weight");

  std::vector<FeatureMatrix> mats;
  std::vector<double> kept_labels, kept_weights;
  const std::vector<FeatureMatrix> *fit_mats = &train_mats;
  if (kept.size() != n) {
    for (const auto &m : train_mats) mats.push_back(m.select_rows(kept));
    fit_mats = &mats;
  }
  for (std::size_t i : kept) {
    kept_labels.push_back(labels[i]);
    kept_weights.push_back(weights[i]);
  }

  TraitModel model;
  model.scheme = cfg.scheme;
  model.label_version = cfg.label_version;
  model.n_train = kept.size();
  model.seed = cfg.seed;

  ReduceParams rp = cfg.reduce;
  rp.seed = derive_seed(cfg.seed, "reduce");
  model.pipeline = fit_pipeline(*fit_mats, kept_labels, rp);

  Eigen::MatrixXd embedding = transform(model.pipeline, *fit_mats);
  Eigen::Map<const Eigen::VectorXd> y(kept_labels.data(), static_cast<Eigen::Index>(kept_labels.size()));
  Eigen::Map<const Eigen::VectorXd> w(kept_weights.data(), static_cast<Eigen::Index>(kept_weights.size()));

  LambdaSelection sel = select_lambda(embedding, y, w, cfg.lambda_grid, cfg.cv_folds,
                                      derive_seed(cfg.seed, "lambda"));
  model.lambda = sel.lambda;
  model.ridge = fit_ridge(embedding, y, w, model.lambda);
  return model;
}

inline Eigen::VectorXd predict(const TraitModel &model, const std::vector<FeatureMatrix> &mats) {
  Eigen::MatrixXd embedding = transform(model.pipeline, mats);
  return (embedding * model.ridge.coefficients).array() + model.ridge.intercept;
}

inline nlohmann::json model_to_json(const TraitModel &model) {
  return nlohmann::json{
      {"format", "trustlex-model"},
      {"version", 1},
      {"pipeline", pipeline_to_json(model.pipeline)},
      {"coefficients",
       std::vector<double>(model.ridge.coefficients.begin(), model.ridge.coefficients.end())},
      {"intercept", model.ridge.intercept},
      {"feature_mean",
       std::vector<double>(model.ridge.feature_mean.begin(), model.ridge.feature_mean.end())},
      {"feature_std",
       std::vector<double>(model.ridge.feature_std.begin(), model.ridge.feature_std.end())},
      {"lambda", model.lambda},
      {"weight_scheme",
       {{"kind", weight_kind_name(model.scheme.kind)},
        {"t_min", model.scheme.t_min},
        {"t_max", model.scheme.t_max},
        {"alpha", model.scheme.alpha}}},
      {"metadata",
       {{"n_train", model.n_train}, {"label_version", model.label_version}, {"seed", model.seed}}}};
}

inline TraitModel model_from_json(const nlohmann::json &j) {
  try {
    if (j.at("format") != "trustlex-model" || j.at("version") != 1)
      throw DataError("model_from_json: unsupported format or version");
    TraitModel model;
    model.pipeline = pipeline_from_json(j.at("pipeline"));
    auto coeffs = j.at("coefficients").get<std::vector<double>>();
    auto fmean = j.at("feature_mean").get<std::vector<double>>();
    auto fstd = j.at("feature_std").get<std::vector<double>>();
    model.ridge.coefficients =
        Eigen::Map<const Eigen::VectorXd>(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
    model.ridge.feature_mean =
        Eigen::Map<const Eigen::VectorXd>(fmean.data(), static_cast<Eigen::Index>(fmean.size()));
    model.ridge.feature_std =
        Eigen::Map<const Eigen::VectorXd>(fstd.data(), static_cast<Eigen::Index>(fstd.size()));
    model.ridge.intercept = j.at("intercept").get<double>();
    model.lambda = j.at("lambda").get<double>();
    const auto &ws = j.at("weight_scheme");
    model.scheme.kind = parse_weight_kind(ws.at("kind").get<std::string>());
    model.scheme.t_min = ws.at("t_min").get<double>();
    model.scheme.t_max = ws.at("t_max").get<double>();
    model.scheme.alpha = ws.at("alpha").get<double>();
    const auto &meta = j.at("metadata");
    model.n_train = meta.at("n_train").get<std::size_t>();
    model.label_version = meta.at("label_version").get<std::string>();
    model.seed = meta.at("seed").get<std::uint64_t>();
    if (model.ridge.coefficients.size() != model.pipeline.total_dims())
      throw DataError("model_from_json: coefficient count does not match pipeline dimensions");
    return model;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("model_from_json: malformed document: ") + e.what());
  }
}

}  // namespace trustlex
