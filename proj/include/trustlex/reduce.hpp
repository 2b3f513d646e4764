#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustlex/error.hpp"
#include "trustlex/features.hpp"
#include "trustlex/rng.hpp"

namespace trustlex {

struct ReduceParams {
  double min_user_fraction = 0.01;
  double alpha_fwe = 60.0;
  double target_fraction = 0.05;
  int oversampling = 15;
  int power_iterations = 5;
  std::uint64_t seed = 0;
};

/// Keeps column g iff at least min_user_fraction of the matrix rows have a
/// nonzero value for g.
inline std::vector<std::uint32_t> occurrence_filter(const FeatureMatrix &m,
                                                    double min_user_fraction = 0.01) {
  std::vector<std::uint32_t> kept;
  if (m.rows() == 0) return kept;
  std::vector<std::uint32_t> nonzero_users(m.cols(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto cols_span = m.row_cols(r);
    auto vals_span = m.row_vals(r);
    for (std::size_t k = 0; k < cols_span.size(); ++k)
      if (vals_span[k] != 0.0) ++nonzero_users[cols_span[k]];
  }
  const double n = static_cast<double>(m.rows());
  for (std::uint32_t c = 0; c < m.cols(); ++c)
    if (static_cast<double>(nonzero_users[c]) / n >= min_user_fraction) kept.push_back(c);
  return kept;
}

/// Univariate selection: keep a candidate column iff the two-sided p-value of
/// its Pearson correlation with the labels clears the Bonferroni-style
/// threshold alpha_fwe / m, m being the number of candidates. Zero-variance
/// columns are never kept.
inline std::vector<std::uint32_t> fwe_select(const FeatureMatrix &m,
                                             std::span<const double> labels,
                                             double alpha_fwe,
                                             std::span<const std::uint32_t> candidates) {
  std::vector<std::uint32_t> kept;
  if (candidates.empty()) return kept;
  auto stats = column_correlations(m, labels, candidates);
  const double threshold = alpha_fwe / static_cast<double>(candidates.size());
  for (const auto &st : stats) {
    if (st.r == 0.0 && st.p == 1.0) continue;  // zero-variance convention
    if (st.p < threshold) kept.push_back(st.column);
  }
  return kept;
}

inline std::vector<std::uint32_t> fwe_select(const FeatureMatrix &m,
                                             std::span<const double> labels,
                                             double alpha_fwe = 60.0) {
  auto candidates = all_columns(m);
  return fwe_select(m, labels, alpha_fwe, candidates);
}

struct RsvdResult {
  Eigen::MatrixXd projection;       // cols(A) x k, orthonormal columns
  Eigen::VectorXd singular_values;  // nonincreasing
  Eigen::VectorXd column_means;
};

namespace detail {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng &rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline Eigen::MatrixXd thin_q(const Eigen::MatrixXd &m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), std::min(m.rows(), m.cols()));
}

}  // namespace detail

/// Randomized range-finder SVD of the column-centered input: Gaussian test
/// matrix, seeded, with QR re-orthonormalization between power iterations.
/// Returns the top-k right singular directions; if the numerical rank falls
/// short of k, only rank-many components come back.
inline RsvdResult fit_rsvd(const Eigen::MatrixXd &a, int k, std::uint64_t seed,
                           int oversampling = 15, int power_iterations = 5) {
  RsvdResult out;
  const Eigen::Index n = a.rows(), m = a.cols();
  out.column_means = n > 0 ? Eigen::VectorXd(a.colwise().mean()) : Eigen::VectorXd::Zero(m);
  out.projection.resize(m, 0);
  out.singular_values.resize(0);
  if (k <= 0 || n == 0 || m == 0) return out;
  k = static_cast<int>(std::min<Eigen::Index>(k, std::min(n, m)));

  Eigen::MatrixXd centered = a.rowwise() - out.column_means.transpose();

  const Eigen::Index sketch = std::min<Eigen::Index>(k + oversampling, std::min(n, m));
  Rng rng(seed);
  Eigen::MatrixXd omega = detail::gaussian_matrix(m, sketch, rng);
  Eigen::MatrixXd q = detail::thin_q(centered * omega);
  for (int it = 0; it < power_iterations; ++it) {
    Eigen::MatrixXd z = detail::thin_q(centered.transpose() * q);
    q = detail::thin_q(centered * z);
  }
  Eigen::MatrixXd b = q.transpose() * centered;  // sketch x m
  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd &sv = svd.singularValues();

  // numerical rank cut so a rank-deficient input yields fewer components
  double tol = sv.size() > 0 ? sv(0) * 1e-12 * static_cast<double>(std::max(n, m)) : 0.0;
  int rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  int kk = std::min(k, rank);
  out.projection = svd.matrixV().leftCols(kk);
  out.singular_values = sv.head(kk);
  return out;
}

/// Per-family fitted state of the three reduction stages.
struct FamilyReduction {
  std::string family;
  std::uint64_t seed = 0;
  int requested_dims = 0;
  std::vector<std::string> stage1_columns;  // occurrence filter survivors
  std::vector<std::string> stage2_columns;  // FWE selection survivors
  Eigen::VectorXd column_means;             // over stage2 columns
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd projection;  // |stage2| x k_f

  int dims() const { return static_cast<int>(projection.cols()); }
};

struct ReductionPipeline {
  ReduceParams params;
  std::size_t n_train = 0;
  std::vector<FamilyReduction> families;  // in fit order
  std::vector<std::string> warnings;

  int total_dims() const {
    int total = 0;
    for (const auto &f : families) total += f.dims();
    return total;
  }
};

namespace detail {

inline Eigen::MatrixXd densify(const FeatureMatrix &m, std::span<const std::uint32_t> wanted) {
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.rows()),
                                                static_cast<Eigen::Index>(wanted.size()));
  std::vector<std::int64_t> local(m.cols(), -1);
  for (std::size_t j = 0; j < wanted.size(); ++j) local[wanted[j]] = static_cast<std::int64_t>(j);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto cols_span = m.row_cols(r);
    auto vals_span = m.row_vals(r);
    for (std::size_t k = 0; k < cols_span.size(); ++k) {
      std::int64_t j = local[cols_span[k]];
      if (j >= 0) dense(static_cast<Eigen::Index>(r), j) = vals_span[k];
    }
  }
  return dense;
}

inline void check_aligned_rows(const std::vector<FeatureMatrix> &mats) {
  for (std::size_t i = 1; i < mats.size(); ++i)
    internal_check(mats[i].row_ids == mats[0].row_ids,
                   "feature matrices must share identical row ids");
}

}  // namespace detail

/// Fits occurrence filter, FWE selection and randomized SVD per family on
/// training matrices. Every family receives k_f = floor(target_fraction *
/// n_train / F) dimensions, F being the number of families, so scarce
/// families are not swamped by plentiful ones.
inline ReductionPipeline fit_pipeline(const std::vector<FeatureMatrix> &train,
                                      std::span<const double> labels,
                                      const ReduceParams &params) {
  if (train.empty()) throw DataError("fit_pipeline: no feature families");
  detail::check_aligned_rows(train);
  const std::size_t n = train[0].rows();
  if (labels.size() != n) throw DataError("fit_pipeline: labels not aligned with rows");

  ReductionPipeline pipe;
  pipe.params = params;
  pipe.n_train = n;
  const int family_count = static_cast<int>(train.size());
  const int k_f = static_cast<int>(std::floor(params.target_fraction * static_cast<double>(n) /
                                              static_cast<double>(family_count)));

  for (const auto &m : train) {
    FamilyReduction fam;
    fam.family = m.family;
    fam.seed = derive_seed(params.seed, m.family);
    fam.requested_dims = k_f;

    auto stage1 = occurrence_filter(m, params.min_user_fraction);
    auto stage2 = fwe_select(m, labels, params.alpha_fwe, stage1);
    fam.stage1_columns.reserve(stage1.size());
    for (auto c : stage1) fam.stage1_columns.push_back(m.column_ids[c]);
    fam.stage2_columns.reserve(stage2.size());
    for (auto c : stage2) fam.stage2_columns.push_back(m.column_ids[c]);

    if (stage2.empty() || k_f == 0) {
      fam.column_means.resize(0);
      fam.singular_values.resize(0);
      fam.projection.resize(0, 0);
      pipe.warnings.push_back("family " + fam.family + " contributes 0 dimensions" +
                              (stage2.empty() ? " (emptied by selection)" : ""));
      pipe.families.push_back(std::move(fam));
      continue;
    }

    Eigen::MatrixXd dense = detail::densify(m, stage2);
    int k_req = std::min<int>(k_f, static_cast<int>(std::min(dense.rows(), dense.cols())));
    RsvdResult rs = fit_rsvd(dense, k_req, fam.seed, params.oversampling, params.power_iterations);
    if (rs.projection.cols() < k_req)
      pipe.warnings.push_back("family " + fam.family + " rank short of requested dimensions (" +
                              std::to_string(rs.projection.cols()) + " < " +
                              std::to_string(k_req) + ")");
    fam.column_means = std::move(rs.column_means);
    fam.singular_values = std::move(rs.singular_values);
    fam.projection = std::move(rs.projection);
    pipe.families.push_back(std::move(fam));
  }
  return pipe;
}

/// Replays the fitted reduction on feature matrices: restrict to the stored
/// columns (unseen columns are ignored, missing ones are zero), subtract the
/// stored means, project, and concatenate families in fit order. Row-wise:
/// a user's embedding depends only on that user's feature rows.
inline Eigen::MatrixXd transform(const ReductionPipeline &pipe,
                                 const std::vector<FeatureMatrix> &mats) {
  if (mats.empty()) throw DataError("transform: no feature matrices");
  detail::check_aligned_rows(mats);
  const Eigen::Index n = static_cast<Eigen::Index>(mats[0].rows());
  Eigen::MatrixXd embedding(n, pipe.total_dims());
  Eigen::Index offset = 0;
  for (const auto &fam : pipe.families) {
    if (fam.dims() == 0) continue;
    const FeatureMatrix *m = nullptr;
    for (const auto &cand : mats)
      if (cand.family == fam.family) {
        m = &cand;
        break;
      }
    if (!m) throw DataError("transform: missing feature family " + fam.family);

    // gather stored columns by name; names absent from the incoming matrix
    // stay zero
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(fam.stage2_columns.size()));
    std::vector<std::int64_t> local(m->cols(), -1);
    for (std::size_t j = 0; j < fam.stage2_columns.size(); ++j) {
      std::ptrdiff_t idx = m->column_index(fam.stage2_columns[j]);
      if (idx >= 0) local[static_cast<std::size_t>(idx)] = static_cast<std::int64_t>(j);
    }
    for (std::size_t r = 0; r < m->rows(); ++r) {
      auto cols_span = m->row_cols(r);
      auto vals_span = m->row_vals(r);
      for (std::size_t k = 0; k < cols_span.size(); ++k) {
        std::int64_t j = local[cols_span[k]];
        if (j >= 0) dense(static_cast<Eigen::Index>(r), j) = vals_span[k];
      }
    }
    dense.rowwise() -= fam.column_means.transpose();
    embedding.middleCols(offset, fam.dims()) = dense * fam.projection;
    offset += fam.dims();
  }
  internal_check(offset == embedding.cols(), "transform: dimension bookkeeping mismatch");
  return embedding;
}

inline nlohmann::json pipeline_to_json(const ReductionPipeline &pipe) {
  nlohmann::json families = nlohmann::json::array();
  for (const auto &fam : pipe.families) {
    nlohmann::json projection = nlohmann::json::array();
    for (Eigen::Index i = 0; i < fam.projection.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < fam.projection.cols(); ++j) row.push_back(fam.projection(i, j));
      projection.push_back(std::move(row));
    }
    families.push_back({{"family", fam.family},
                        {"seed", fam.seed},
                        {"requested_dims", fam.requested_dims},
                        {"stage1_columns", fam.stage1_columns},
                        {"stage2_columns", fam.stage2_columns},
                        {"column_means", std::vector<double>(fam.column_means.begin(), fam.column_means.end())},
                        {"singular_values", std::vector<double>(fam.singular_values.begin(), fam.singular_values.end())},
                        {"projection", std::move(projection)}});
  }
  return nlohmann::json{{"format", "trustlex-pipeline"},
                        {"version", 1},
                        {"params",
                         {{"min_user_fraction", pipe.params.min_user_fraction},
                          {"alpha_fwe", pipe.params.alpha_fwe},
                          {"target_fraction", pipe.params.target_fraction},
                          {"oversampling", pipe.params.oversampling},
                          {"power_iterations", pipe.params.power_iterations},
                          {"seed", pipe.params.seed}}},
                        {"n_train", pipe.n_train},
                        {"families", std::move(families)},
                        {"warnings", pipe.warnings}};
}

inline ReductionPipeline pipeline_from_json(const nlohmann::json &j) {
  try {
    if (j.at("format") != "trustlex-pipeline" || j.at("version") != 1)
      throw DataError("pipeline_from_json: unsupported format or version");
    ReductionPipeline pipe;
    const auto &p = j.at("params");
    pipe.params.min_user_fraction = p.at("min_user_fraction").get<double>();
    pipe.params.alpha_fwe = p.at("alpha_fwe").get<double>();
    pipe.params.target_fraction = p.at("target_fraction").get<double>();
    pipe.params.oversampling = p.at("oversampling").get<int>();
    pipe.params.power_iterations = p.at("power_iterations").get<int>();
    pipe.params.seed = p.at("seed").get<std::uint64_t>();
    pipe.n_train = j.at("n_train").get<std::size_t>();
    pipe.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto &fj : j.at("families")) {
      FamilyReduction fam;
      fam.family = fj.at("family").get<std::string>();
      fam.seed = fj.at("seed").get<std::uint64_t>();
      fam.requested_dims = fj.at("requested_dims").get<int>();
      fam.stage1_columns = fj.at("stage1_columns").get<std::vector<std::string>>();
      fam.stage2_columns = fj.at("stage2_columns").get<std::vector<std::string>>();
      auto means = fj.at("column_means").get<std::vector<double>>();
      auto svs = fj.at("singular_values").get<std::vector<double>>();
      fam.column_means = Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
      fam.singular_values = Eigen::Map<const Eigen::VectorXd>(svs.data(), static_cast<Eigen::Index>(svs.size()));
      const auto &proj = fj.at("projection");
      fam.projection.resize(static_cast<Eigen::Index>(proj.size()),
                            static_cast<Eigen::Index>(svs.size()));
      for (Eigen::Index i = 0; i < fam.projection.rows(); ++i) {
        const auto &row = proj.at(static_cast<std::size_t>(i));
        if (row.size() != static_cast<std::size_t>(fam.projection.cols()))
          throw DataError("pipeline_from_json: ragged projection matrix");
        for (Eigen::Index jj = 0; jj < fam.projection.cols(); ++jj)
          fam.projection(i, jj) = row.at(static_cast<std::size_t>(jj)).get<double>();
      }
      pipe.families.push_back(std::move(fam));
    }
    return pipe;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("pipeline_from_json: malformed document: ") + e.what());
  }
}

}  // namespace trustlex
