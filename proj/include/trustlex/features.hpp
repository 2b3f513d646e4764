#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trustlex/csv.hpp"
#include "trustlex/error.hpp"
#include "trustlex/stats.hpp"
#include "trustlex/tokenizer.hpp"

namespace trustlex {

inline constexpr const char *kFamilyNgramRel = "NGRAM_REL";
inline constexpr const char *kFamilyNgramBool = "NGRAM_BOOL";

/// Sparse user x feature matrix in CSR form. Rows follow corpus order,
/// columns are sorted lexicographically by feature name, and entries within
/// a row are sorted by column index.
struct FeatureMatrix {
  std::string family;
  std::vector<std::string> row_ids;
  std::vector<std::string> column_ids;
  std::vector<std::size_t> row_offsets;  // size rows()+1
  std::vector<std::uint32_t> entry_cols;
  std::vector<double> entry_vals;

  std::size_t rows() const { return row_ids.size(); }
  std::size_t cols() const { return column_ids.size(); }
  std::size_t nnz() const { return entry_vals.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {entry_cols.data() + row_offsets[r], entry_cols.data() + row_offsets[r + 1]};
  }
  std::span<const double> row_vals(std::size_t r) const {
    return {entry_vals.data() + row_offsets[r], entry_vals.data() + row_offsets[r + 1]};
  }

  double value_at(std::size_t r, std::uint32_t c) const {
    auto cols_span = row_cols(r);
    auto it = std::lower_bound(cols_span.begin(), cols_span.end(), c);
    if (it == cols_span.end() || *it != c) return 0.0;
    return entry_vals[row_offsets[r] + static_cast<std::size_t>(it - cols_span.begin())];
  }

  // index of a column name, or -1
  std::ptrdiff_t column_index(std::string_view name) const {
    auto it = std::lower_bound(column_ids.begin(), column_ids.end(), name);
    if (it == column_ids.end() || *it != name) return -1;
    return it - column_ids.begin();
  }

  FeatureMatrix select_rows(std::span<const std::size_t> rows_wanted) const {
    FeatureMatrix out;
    out.family = family;
    out.column_ids = column_ids;
    out.row_ids.reserve(rows_wanted.size());
    out.row_offsets.reserve(rows_wanted.size() + 1);
    out.row_offsets.push_back(0);
    std::size_t total = 0;
    for (std::size_t r : rows_wanted) total += row_offsets[r + 1] - row_offsets[r];
    out.entry_cols.reserve(total);
    out.entry_vals.reserve(total);
    for (std::size_t r : rows_wanted) {
      if (r >= rows()) throw InternalError("select_rows: row index out of range");
      out.row_ids.push_back(row_ids[r]);
      out.entry_cols.insert(out.entry_cols.end(), entry_cols.begin() + row_offsets[r],
                            entry_cols.begin() + row_offsets[r + 1]);
      out.entry_vals.insert(out.entry_vals.end(), entry_vals.begin() + row_offsets[r],
                            entry_vals.begin() + row_offsets[r + 1]);
      out.row_offsets.push_back(out.entry_cols.size());
    }
    return out;
  }
};

/// term -> weighted categories. Categorical lexica (all weights 1, one
/// category per term) cover word clusters; weighted ones cover LDA topic
/// posteriors and sentiment.
struct Lexicon {
  std::string name;
  bool categorical = false;
  std::vector<std::string> categories;  // sorted
  std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, double>>> entries;
};

/// CSV with header term,category,weight. The kind is inferred: if every
/// weight is 1 and no term maps to two categories, the lexicon is
/// categorical.
inline Lexicon load_lexicon_csv(const std::string &path, const std::string &name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon file: " + path);
  csv::Reader reader(in, path);
  std::vector<std::string> fields;
  if (!reader.next(fields) || fields != std::vector<std::string>{"term", "category", "weight"})
    throw DataError(path + ":1: expected header term,category,weight");

  struct RawEntry { std::string term, category; double weight; };
  std::vector<RawEntry> raw;
  std::map<std::string, std::uint32_t> cat_index;
  bool categorical = true;
  std::map<std::pair<std::string, std::string>, bool> seen;
  std::map<std::string, int> term_categories;
  while (reader.next(fields)) {
    std::string where = reader.where();
    if (fields.size() != 3) throw DataError(where + ": expected 3 fields");
    RawEntry e;
    e.term = fields[0];
    e.category = fields[1];
    try {
      std::size_t pos = 0;
      e.weight = std::stod(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception &) {
      throw DataError(where + ": field 'weight' is not a number: '" + fields[2] + "'");
    }
    if (e.term.empty() || e.category.empty())
      throw DataError(where + ": term and category must be non-empty");
    if (seen.count({e.term, e.category}))
      throw DataError(where + ": duplicate (term, category): (" + e.term + ", " + e.category + ")");
    seen[{e.term, e.category}] = true;
    if (e.weight != 1.0) categorical = false;
    if (++term_categories[e.term] > 1) categorical = false;
    cat_index.emplace(e.category, 0);
    raw.push_back(std::move(e));
  }

  Lexicon lex;
  lex.name = name;
  lex.categorical = categorical;
  lex.categories.reserve(cat_index.size());
  for (auto &[cat, idx] : cat_index) {
    idx = static_cast<std::uint32_t>(lex.categories.size());
    lex.categories.push_back(cat);
  }
  for (const auto &e : raw)
    lex.entries[e.term].emplace_back(cat_index[e.category], e.weight);
  return lex;
}

namespace detail {

// Applies fn(term, order) to every n-gram of the requested orders. N-grams
// never cross message boundaries.
template <class Fn>
void for_each_ngram(const TokenStream &stream, const std::vector<int> &orders, Fn &&fn) {
  std::string term;
  for (std::size_t m = 0; m < stream.message_starts.size(); ++m) {
    std::size_t begin = stream.message_starts[m];
    std::size_t end = (m + 1 < stream.message_starts.size()) ? stream.message_starts[m + 1]
                                                             : stream.tokens.size();
    for (int n : orders) {
      if (end < begin + static_cast<std::size_t>(n)) continue;
      for (std::size_t i = begin; i + n <= end; ++i) {
        term.clear();
        for (int j = 0; j < n; ++j) {
          if (j) term.push_back(' ');
          term += stream.tokens[i + j];
        }
        fn(term, n);
      }
    }
  }
}

inline std::vector<int> validate_orders(std::vector<int> orders) {
  if (orders.empty()) throw UsageError("n-gram orders must be non-empty");
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  for (int n : orders)
    if (n < 1 || n > 3) throw UsageError("n-gram orders must lie in 1..3, got " + std::to_string(n));
  return orders;
}

}  // namespace detail

using NgramCounts = std::map<std::string, std::int64_t>;

/// Counts of space-joined contiguous token windows for the requested orders.
inline NgramCounts extract_ngram_counts(const TokenStream &stream, std::vector<int> orders) {
  orders = detail::validate_orders(std::move(orders));
  NgramCounts counts;
  detail::for_each_ngram(stream, orders, [&](const std::string &term, int) { ++counts[term]; });
  return counts;
}

inline int ngram_order(std::string_view term) {
  return 1 + static_cast<int>(std::count(term.begin(), term.end(), ' '));
}

/// Each n-gram's count divided by the user's total count of n-grams of the
/// same order.
inline std::map<std::string, double> relative_frequencies(const NgramCounts &counts) {
  std::array<std::int64_t, 4> totals{0, 0, 0, 0};
  for (const auto &[term, c] : counts) totals[static_cast<std::size_t>(ngram_order(term))] += c;
  std::map<std::string, double> out;
  for (const auto &[term, c] : counts) {
    std::int64_t total = totals[static_cast<std::size_t>(ngram_order(term))];
    out[term] = static_cast<double>(c) / static_cast<double>(total);
  }
  return out;
}

inline std::map<std::string, double> boolean_indicators(const NgramCounts &counts) {
  std::map<std::string, double> out;
  for (const auto &[term, c] : counts)
    if (c >= 1) out[term] = 1.0;
  return out;
}

/// score(user, category) = sum over terms of relfreq(term) * weight(term,
/// category), computed from unigram relative frequencies. Categories whose
/// score is zero are omitted.
inline std::map<std::string, double> lexicon_features(
    const std::map<std::string, double> &unigram_relfreq, const Lexicon &lex) {
  std::map<std::string, double> out;
  for (const auto &[term, freq] : unigram_relfreq) {
    if (ngram_order(term) != 1) continue;
    auto it = lex.entries.find(term);
    if (it == lex.entries.end()) continue;
    for (const auto &[cat, weight] : it->second) out[lex.categories[cat]] += freq * weight;
  }
  for (auto it = out.begin(); it != out.end();)
    it = (it->second == 0.0) ? out.erase(it) : std::next(it);
  return out;
}

namespace detail {

struct Interner {
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::string> names;
  std::vector<std::uint8_t> orders;

  std::uint32_t intern(const std::string &term, int order) {
    auto [it, inserted] = index.try_emplace(term, static_cast<std::uint32_t>(names.size()));
    if (inserted) {
      names.push_back(term);
      orders.push_back(static_cast<std::uint8_t>(order));
    }
    return it->second;
  }
};

using SparseRow = std::vector<std::pair<std::uint32_t, double>>;

// Flattens per-user rows into CSR after remapping interned column ids to
// their lexicographic positions. Consumes `rows`.
inline FeatureMatrix assemble(std::string family, const std::vector<std::string> &row_ids,
                              std::vector<std::string> sorted_columns,
                              const std::vector<std::uint32_t> &new_index,
                              std::vector<SparseRow> &rows) {
  FeatureMatrix out;
  out.family = std::move(family);
  out.row_ids = row_ids;
  out.column_ids = std::move(sorted_columns);
  std::size_t total = 0;
  for (const auto &r : rows) total += r.size();
  out.row_offsets.reserve(rows.size() + 1);
  out.entry_cols.reserve(total);
  out.entry_vals.reserve(total);
  out.row_offsets.push_back(0);
  for (auto &r : rows) {
    for (auto &[col, val] : r) col = new_index[col];
    std::sort(r.begin(), r.end());
    for (const auto &[col, val] : r) {
      out.entry_cols.push_back(col);
      out.entry_vals.push_back(val);
    }
    out.row_offsets.push_back(out.entry_cols.size());
    r.clear();
    r.shrink_to_fit();
  }
  return out;
}

}  // namespace detail

/// Incremental builder: feed tokenized users one at a time (corpus order),
/// then finish() into one matrix per family with aligned rows.
class FeatureAccumulator {
 public:
  FeatureAccumulator(std::vector<Lexicon> lexica, std::vector<int> orders)
      : lexica_(std::move(lexica)), orders_(detail::validate_orders(std::move(orders))),
        lex_rows_(lexica_.size()) {}

  void add_user(const TokenStream &stream) {
    row_ids_.push_back(stream.user_id);
    counts_.clear();
    std::array<std::int64_t, 4> totals{0, 0, 0, 0};
    detail::for_each_ngram(stream, orders_, [&](const std::string &term, int order) {
      ++counts_[interner_.intern(term, order)];
      ++totals[static_cast<std::size_t>(order)];
    });

    detail::SparseRow rel, bl;
    rel.reserve(counts_.size());
    bl.reserve(counts_.size());
    for (const auto &[id, c] : counts_) {
      double denom = static_cast<double>(totals[interner_.orders[id]]);
      rel.emplace_back(id, static_cast<double>(c) / denom);
      bl.emplace_back(id, 1.0);
    }
    rel_rows_.push_back(std::move(rel));
    bool_rows_.push_back(std::move(bl));

    for (std::size_t l = 0; l < lexica_.size(); ++l) {
      std::map<std::uint32_t, double> acc;
      for (const auto &[id, c] : counts_) {
        if (interner_.orders[id] != 1) continue;
        auto it = lexica_[l].entries.find(interner_.names[id]);
        if (it == lexica_[l].entries.end()) continue;
        double freq = static_cast<double>(c) / static_cast<double>(totals[1]);
        for (const auto &[cat, weight] : it->second) acc[cat] += freq * weight;
      }
      detail::SparseRow row;
      for (const auto &[cat, score] : acc)
        if (score != 0.0) row.emplace_back(cat, score);
      lex_rows_[l].push_back(std::move(row));
    }
  }

  std::vector<FeatureMatrix> finish() {
    // both n-gram families share one vocabulary and one lexicographic order
    std::vector<std::uint32_t> perm(interner_.names.size());
    std::iota(perm.begin(), perm.end(), 0u);
    std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
      return interner_.names[a] < interner_.names[b];
    });
    std::vector<std::uint32_t> new_index(interner_.names.size());
    std::vector<std::string> sorted_names(interner_.names.size());
    for (std::size_t j = 0; j < perm.size(); ++j) {
      new_index[perm[j]] = static_cast<std::uint32_t>(j);
      sorted_names[j] = interner_.names[perm[j]];
    }

    std::vector<FeatureMatrix> out;
    out.reserve(2 + lexica_.size());
    out.push_back(detail::assemble(kFamilyNgramRel, row_ids_, sorted_names, new_index, rel_rows_));
    out.push_back(
        detail::assemble(kFamilyNgramBool, row_ids_, std::move(sorted_names), new_index, bool_rows_));
    for (std::size_t l = 0; l < lexica_.size(); ++l) {
      // lexicon category ids were assigned in sorted order already
      std::vector<std::uint32_t> identity(lexica_[l].categories.size());
      std::iota(identity.begin(), identity.end(), 0u);
      out.push_back(detail::assemble("LEXICON:" + lexica_[l].name, row_ids_, lexica_[l].categories,
                                     identity, lex_rows_[l]));
    }
    return out;
  }

 private:
  std::vector<Lexicon> lexica_;
  std::vector<int> orders_;
  detail::Interner interner_;
  std::vector<std::string> row_ids_;
  std::vector<detail::SparseRow> rel_rows_;
  std::vector<detail::SparseRow> bool_rows_;
  std::vector<std::vector<detail::SparseRow>> lex_rows_;
  std::unordered_map<std::uint32_t, std::int64_t> counts_;
};

/// Builds all feature families over a fully tokenized corpus:
/// relative-frequency n-grams, boolean n-grams, and one weighted-category
/// family per lexicon. All matrices share identical row_ids in corpus order.
inline std::vector<FeatureMatrix> build_feature_matrices(const Corpus &corpus,
                                                         const std::vector<TokenStream> &streams,
                                                         const std::vector<Lexicon> &lexica,
                                                         std::vector<int> orders) {
  if (streams.size() != corpus.users.size())
    throw InternalError("build_feature_matrices: streams not aligned with corpus");
  FeatureAccumulator acc(lexica, std::move(orders));
  for (std::size_t u = 0; u < streams.size(); ++u) {
    if (streams[u].user_id != corpus.users[u].user_id)
      throw InternalError("build_feature_matrices: stream/user order mismatch");
    acc.add_user(streams[u]);
  }
  return acc.finish();
}

struct ColumnStat {
  std::uint32_t column = 0;
  double r = 0;  // 0 for zero-variance columns
  double p = 1;  // 1 for zero-variance columns
};

/// Pearson correlation of each candidate column with the labels, plus the
/// two-sided t-based p-value. Sparse-aware: a single pass over the stored
/// entries plus closed-form handling of the implicit zeros.
inline std::vector<ColumnStat> column_correlations(const FeatureMatrix &m,
                                                   std::span<const double> labels,
                                                   std::span<const std::uint32_t> candidates) {
  const std::size_t n = m.rows();
  if (labels.size() != n) throw DataError("column_correlations: labels not aligned with rows");
  if (n < 3) throw DataError("column_correlations: need at least 3 users");
  const double y_mean = mean(labels);
  double syy = 0;
  for (double y : labels) {
    double d = y - y_mean;
    syy += d * d;
  }
  if (syy <= 0) throw DataError("column_correlations: labels have zero variance");

  double sum_yc = 0;
  for (double y : labels) sum_yc += y - y_mean;

  std::vector<double> sx(m.cols(), 0.0), sxx(m.cols(), 0.0), sxy(m.cols(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double yc = labels[r] - y_mean;
    auto cols_span = m.row_cols(r);
    auto vals_span = m.row_vals(r);
    for (std::size_t k = 0; k < cols_span.size(); ++k) {
      double v = vals_span[k];
      sx[cols_span[k]] += v;
      sxx[cols_span[k]] += v * v;
      sxy[cols_span[k]] += v * yc;  // implicit zeros contribute nothing
    }
  }

  std::vector<ColumnStat> out;
  out.reserve(candidates.size());
  const double nd = static_cast<double>(n);
  for (std::uint32_t c : candidates) {
    ColumnStat st;
    st.column = c;
    double var_num = sxx[c] - sx[c] * sx[c] / nd;
    if (var_num > 1e-14 * std::max(1.0, sxx[c])) {
      double cov_num = sxy[c] - sx[c] * (sum_yc / nd);
      double r = cov_num / std::sqrt(var_num * syy);
      st.r = std::clamp(r, -1.0, 1.0);
      st.p = pearson_p_two_sided(st.r, n);
    }
    out.push_back(st);
  }
  return out;
}

inline std::vector<std::uint32_t> all_columns(const FeatureMatrix &m) {
  std::vector<std::uint32_t> cols(m.cols());
  std::iota(cols.begin(), cols.end(), 0u);
  return cols;
}

/// user_id,feature,value triplets preceded by a family header line.
inline void write_triplets_csv(const FeatureMatrix &m, std::ostream &out) {
  out << "# family=" << m.family << '\n';
  out << "user_id,feature,value\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto cols_span = m.row_cols(r);
    auto vals_span = m.row_vals(r);
    for (std::size_t k = 0; k < cols_span.size(); ++k) {
      out << csv::format_field(m.row_ids[r]) << ','
          << csv::format_field(m.column_ids[cols_span[k]]) << ','
          << csv::format_double(vals_span[k]) << '\n';
    }
  }
}

}  // namespace trustlex
