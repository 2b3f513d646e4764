#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "trustlex/features.hpp"

namespace trustlex {

struct DlaResult {
  std::string feature;
  double r = 0;
  double p = 1;
  bool passed = false;     // Benjamini-Hochberg flag at the chosen alpha
  double frequency = 0;    // mean value across users (mean relfreq for NGRAM_REL)
};

/// Per-column Pearson correlation with the outcome plus the two-sided
/// t-based p-value. Zero-variance columns report r=0, p=1.
inline std::vector<DlaResult> correlate_features(const FeatureMatrix &m,
                                                 std::span<const double> labels) {
  auto candidates = all_columns(m);
  auto stats = column_correlations(m, labels, candidates);

  std::vector<double> col_sum(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto cols_span = m.row_cols(r);
    auto vals_span = m.row_vals(r);
    for (std::size_t k = 0; k < cols_span.size(); ++k) col_sum[cols_span[k]] += vals_span[k];
  }

  std::vector<DlaResult> out;
  out.reserve(stats.size());
  for (const auto &st : stats) {
    DlaResult res;
    res.feature = m.column_ids[st.column];
    res.r = st.r;
    res.p = st.p;
    res.frequency = col_sum[st.column] / static_cast<double>(m.rows());
    out.push_back(std::move(res));
  }
  return out;
}

/// Step-up FDR procedure: sort p ascending, find the largest i with
/// p_(i) <= i*alpha/m, reject everything with p <= p_(i). Ties are rejected
/// together.
inline std::vector<char> benjamini_hochberg(const std::vector<double> &p_values, double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw UsageError("benjamini_hochberg: alpha must lie in (0,1)");
  for (double p : p_values)
    if (!(p >= 0 && p <= 1)) throw DataError("benjamini_hochberg: p-values must lie in [0,1]");
  const std::size_t m = p_values.size();
  std::vector<char> reject(m, 0);
  if (m == 0) return reject;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  double threshold = -1;
  for (std::size_t i = m; i >= 1; --i) {
    if (p_values[order[i - 1]] <= static_cast<double>(i) * alpha / static_cast<double>(m)) {
      threshold = p_values[order[i - 1]];
      break;
    }
  }
  if (threshold < 0) return reject;
  for (std::size_t i = 0; i < m; ++i)
    if (p_values[i] <= threshold) reject[i] = 1;
  return reject;
}

inline std::vector<DlaResult> apply_bh(std::vector<DlaResult> results, double alpha) {
  std::vector<double> p;
  p.reserve(results.size());
  for (const auto &r : results) p.push_back(r.p);
  auto flags = benjamini_hochberg(p, alpha);
  for (std::size_t i = 0; i < results.size(); ++i) results[i].passed = flags[i] != 0;
  return results;
}

enum class Sign { positive, negative, both };

inline Sign parse_sign(std::string_view s) {
  if (s == "positive") return Sign::positive;
  if (s == "negative") return Sign::negative;
  if (s == "both") return Sign::both;
  throw UsageError("unknown sign '" + std::string(s) + "' (expected positive, negative or both)");
}

/// Among BH-passing features of the requested sign, the k strongest by |r|.
/// Ranking is independent of input order (|r| desc, then feature name).
inline std::vector<DlaResult> top_k(const std::vector<DlaResult> &results, std::size_t k = 50,
                                    Sign sign = Sign::both) {
  std::vector<DlaResult> passing;
  for (const auto &res : results) {
    if (!res.passed) continue;
    if (sign == Sign::positive && !(res.r > 0)) continue;
    if (sign == Sign::negative && !(res.r < 0)) continue;
    passing.push_back(res);
  }
  std::sort(passing.begin(), passing.end(), [](const DlaResult &a, const DlaResult &b) {
    double aa = std::abs(a.r), bb = std::abs(b.r);
    if (aa != bb) return aa > bb;
    return a.feature < b.feature;
  });
  if (passing.size() > k) passing.resize(k);
  return passing;
}

/// Restricts an n-gram matrix to unigram columns (no space in the name);
/// the paper's clouds are unigram-based.
inline FeatureMatrix unigram_columns(const FeatureMatrix &m) {
  std::vector<std::uint32_t> keep;
  for (std::uint32_t c = 0; c < m.cols(); ++c)
    if (m.column_ids[c].find(' ') == std::string::npos) keep.push_back(c);
  FeatureMatrix out;
  out.family = m.family;
  out.row_ids = m.row_ids;
  std::vector<std::int64_t> local(m.cols(), -1);
  for (std::size_t j = 0; j < keep.size(); ++j) {
    local[keep[j]] = static_cast<std::int64_t>(j);
    out.column_ids.push_back(m.column_ids[keep[j]]);
  }
  out.row_offsets.push_back(0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto cols_span = m.row_cols(r);
    auto vals_span = m.row_vals(r);
    for (std::size_t kk = 0; kk < cols_span.size(); ++kk) {
      std::int64_t j = local[cols_span[kk]];
      if (j >= 0) {
        out.entry_cols.push_back(static_cast<std::uint32_t>(j));
        out.entry_vals.push_back(vals_span[kk]);
      }
    }
    out.row_offsets.push_back(out.entry_cols.size());
  }
  return out;
}

/// feature,r,p,frequency,sign rows for external word-cloud rendering.
inline void write_wordcloud_csv(std::span<const DlaResult> positive,
                                std::span<const DlaResult> negative, std::ostream &out) {
  out << "feature,r,p,frequency,sign\n";
  auto write = [&](const DlaResult &res, const char *sign) {
    out << csv::format_field(res.feature) << ',' << csv::format_double(res.r) << ','
        << csv::format_double(res.p) << ',' << csv::format_double(res.frequency) << ',' << sign
        << '\n';
  };
  for (const auto &res : positive) write(res, "positive");
  for (const auto &res : negative) write(res, "negative");
}

}  // namespace trustlex
