#pragma once

// Independent reference implementations used only by tests. Each one takes a
// deliberately different route from the library: the ridge oracle solves the
// untransformed augmented normal equations with an explicit inverse, the SVD
// oracle is a dense Jacobi factorization, the BH oracle scans thresholds
// instead of stepping up, and t-tail probabilities come from boost.math.

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "trustlex/features.hpp"

namespace oracle {

struct RidgeOracleResult {
  Eigen::VectorXd coefficients;
  double intercept = 0;
};

// Minimizes sum_i w~_i (y_i - beta.x_i - b)^2 + lambda * sum_j (beta_j s_j)^2
// where w~ rescales the weights so the positive ones average 1 and s_j is
// the weighted population std of column j -- the same objective the library
// solves via z-scoring, but assembled directly in model space and inverted
// with full-pivot LU.
inline RidgeOracleResult weighted_ridge(const Eigen::MatrixXd &x, const Eigen::VectorXd &y,
                                        const Eigen::VectorXd &w_raw, double lambda) {
  const Eigen::Index n = x.rows(), p = x.cols();
  double positives = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (w_raw(i) > 0) positives += 1;
  Eigen::VectorXd w = w_raw * (positives / w_raw.sum());
  double sw = w.sum();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(p), var = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += w(i) * x(i, j);
    mu(j) = s / sw;
    double v = 0;
    for (Eigen::Index i = 0; i < n; ++i) v += w(i) * (x(i, j) - mu(j)) * (x(i, j) - mu(j));
    var(j) = v / sw;
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd xi(p + 1);
    xi.head(p) = x.row(i).transpose();
    xi(p) = 1.0;
    a += w(i) * xi * xi.transpose();
    rhs += w(i) * y(i) * xi;
  }
  for (Eigen::Index j = 0; j < p; ++j) a(j, j) += lambda * var(j);
  Eigen::VectorXd sol = a.fullPivLu().solve(rhs);
  RidgeOracleResult out;
  out.coefficients = sol.head(p);
  out.intercept = sol(p);
  return out;
}

// singular values of the column-centered matrix, dense and exact
inline Eigen::VectorXd centered_singular_values(const Eigen::MatrixXd &a) {
  Eigen::MatrixXd centered = a.rowwise() - a.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  return svd.singularValues();
}

// Benjamini-Hochberg by threshold scan: a candidate threshold t (each
// observed p) is admissible iff t <= count(p_i <= t) * alpha / m; reject
// everything at or below the largest admissible threshold.
inline std::vector<char> bh_threshold_scan(const std::vector<double> &p, double alpha) {
  const std::size_t m = p.size();
  std::vector<char> reject(m, 0);
  double best = -1;
  for (double t : p) {
    std::size_t count = 0;
    for (double q : p)
      if (q <= t) ++count;
    if (t <= static_cast<double>(count) * alpha / static_cast<double>(m) && t > best) best = t;
  }
  if (best < 0) return reject;
  for (std::size_t i = 0; i < m; ++i)
    if (p[i] <= best) reject[i] = 1;
  return reject;
}

inline double t_two_sided_p(double t, double df) {
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

inline double pearson_p(double r, std::size_t n) {
  double t = std::fabs(r) * std::sqrt((static_cast<double>(n) - 2.0) / (1.0 - r * r));
  return t_two_sided_p(t, static_cast<double>(n) - 2.0);
}

// dense helper for building small feature matrices in tests
inline trustlex::FeatureMatrix dense_matrix(const std::string &family,
                                            const std::vector<std::string> &row_ids,
                                            const std::vector<std::string> &column_ids,
                                            const std::vector<std::vector<double>> &values) {
  trustlex::FeatureMatrix m;
  m.family = family;
  m.row_ids = row_ids;
  m.column_ids = column_ids;
  m.row_offsets.push_back(0);
  for (const auto &row : values) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] == 0.0) continue;
      m.entry_cols.push_back(static_cast<std::uint32_t>(c));
      m.entry_vals.push_back(row[c]);
    }
    m.row_offsets.push_back(m.entry_cols.size());
  }
  return m;
}

class TempDir {
 public:
  explicit TempDir(const std::string &tag) {
    base_ = std::filesystem::temp_directory_path() /
            ("trustlex_test_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  const std::filesystem::path &path() const { return base_; }

 private:
  static int &counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path base_;
};

}  // namespace oracle
