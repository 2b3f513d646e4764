#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trustlex/model.hpp"
#include "trustlex/stats.hpp"

namespace trustlex {

/// A corpus with word counts filled in and feature matrices built over the
/// whole corpus. Splits are taken as row subsets; anything *fitted* (filter,
/// selection, projection, scaling) sees training rows only.
struct Featurized {
  Corpus corpus;
  std::vector<FeatureMatrix> matrices;

  std::vector<FeatureMatrix> rows(std::span<const std::size_t> idx) const {
    std::vector<FeatureMatrix> out;
    out.reserve(matrices.size());
    for (const auto &m : matrices) out.push_back(m.select_rows(idx));
    return out;
  }
  std::size_t word_count(std::size_t user) const {
    const auto &wc = corpus.users[user].word_count;
    internal_check(wc.has_value(), "word_count requested before tokenization");
    return *wc;
  }
};

/// Tokenizes and featurizes a corpus, streaming user by user so token
/// streams never live all at once. jobs > 1 tokenizes blocks of users in
/// parallel; results are identical for any job count.
inline Featurized featurize_corpus(Corpus corpus, const std::vector<Lexicon> &lexica,
                                   std::vector<int> orders, int jobs = 1) {
  FeatureAccumulator acc(lexica, std::move(orders));
  const std::size_t n = corpus.users.size();
  const std::size_t block = 256;
  std::vector<TokenStream> streams;
  for (std::size_t begin = 0; begin < n; begin += block) {
    std::size_t end = std::min(n, begin + block);
    streams.assign(end - begin, {});
    if (jobs > 1) {
      std::size_t workers = std::min<std::size_t>(jobs, end - begin);
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t i = begin + t; i < end; i += workers)
            streams[i - begin] = tokenize_user(corpus.users[i]);
        });
      for (auto &th : pool) th.join();
    } else {
      for (std::size_t i = begin; i < end; ++i) streams[i - begin] = tokenize_user(corpus.users[i]);
    }
    for (auto &s : streams) acc.add_user(s);
  }
  Featurized fz;
  fz.corpus = std::move(corpus);
  fz.matrices = acc.finish();
  return fz;
}

struct BinRow {
  double lo = 0;
  double hi = std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  double value = 0;
};

struct SweepCell {
  std::size_t size = 0;
  std::string scheme;
  std::size_t repeats = 0;
  double mean_n_train = 0;
  double mean_r = 0;
  double mean_r_dis = 0;
  double mean_mse = 0;
};

struct EvaluationReport {
  std::string setting;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double mse = 0;
  double pearson_r = 0;
  double r_dis = 0;
  double r_aa = 0.70;
  double r_bb = 0.70;
  std::vector<std::string> user_ids;  // test users, corpus order
  std::vector<double> y_true;
  std::vector<double> y_pred;
  std::vector<std::size_t> word_counts;
  std::vector<BinRow> bins;       // filled by error_by_wordcount
  std::vector<SweepCell> sweep;   // filled by training_size_sweep
};

struct EvalParams {
  double wc_threshold = 0;  // membership floor for train and test groups
  double r_aa = 0.70;
  double r_bb = 0.70;
  std::vector<double> bin_edges = {0, 250, 500, 1000, 2500, 5000};
  std::string bin_metric = "mae";  // or "mse"
};

namespace detail {

inline void fill_metrics(EvaluationReport &rep) {
  rep.mse = trustlex::mse(rep.y_true, rep.y_pred);
  rep.pearson_r = pearson_r(rep.y_true, rep.y_pred);
  rep.r_dis = disattenuated_r(rep.pearson_r, rep.r_aa, rep.r_bb);
}

inline std::optional<double> label_of(const UserRecord &u, Version v) {
  return v == Version::q3 ? u.trust_3q : u.trust_10q;
}

inline bool above_threshold(const Featurized &fz, std::size_t user, double wc_threshold) {
  return static_cast<double>(fz.word_count(user)) >= wc_threshold;
}

}  // namespace detail

/// Seeded k-fold cross-validation over users carrying the given label
/// version (and clearing the word-count threshold). The entire pipeline --
/// reduction and ridge -- is refit on each fold's training side; metrics
/// pool the held-out predictions.
inline EvaluationReport cross_validate_kfold(const Featurized &fz, Version version,
                                             const TrainConfig &cfg, const EvalParams &ep,
                                             int folds, std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < fz.corpus.users.size(); ++i)
    if (detail::label_of(fz.corpus.users[i], version) && detail::above_threshold(fz, i, ep.wc_threshold))
      eligible.push_back(i);
  if (static_cast<int>(eligible.size()) < folds)
    throw DataError("cross-validation: only " + std::to_string(eligible.size()) +
                    " labeled users for " + std::to_string(folds) +
                    " folds; use fewer folds");

  std::vector<std::size_t> order(eligible.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "folds"));
  rng.shuffle(order);
  std::vector<int> fold_of(eligible.size());
  for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i]] = static_cast<int>(i % folds);

  std::vector<double> predictions(eligible.size());
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows, test_pos;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      if (fold_of[i] == f) {
        test_rows.push_back(eligible[i]);
        test_pos.push_back(i);
      } else {
        train_rows.push_back(eligible[i]);
      }
    }
    std::vector<double> labels;
    std::vector<std::size_t> wcs;
    for (std::size_t u : train_rows) {
      labels.push_back(*detail::label_of(fz.corpus.users[u], version));
      wcs.push_back(fz.word_count(u));
    }
    TrainConfig fold_cfg = cfg;
    fold_cfg.label_version = version_name(version);
    fold_cfg.seed = derive_seed(derive_seed(seed, "fold"), static_cast<std::uint64_t>(f));
    TraitModel model = fit_trait_model(fz.rows(train_rows), labels, wcs, fold_cfg);
    Eigen::VectorXd preds = predict(model, fz.rows(test_rows));
    for (std::size_t k = 0; k < test_pos.size(); ++k) predictions[test_pos[k]] = preds(static_cast<Eigen::Index>(k));
  }

  EvaluationReport rep;
  rep.setting = "cv";
  rep.r_aa = ep.r_aa;
  rep.r_bb = ep.r_bb;
  rep.n_train = eligible.size();
  rep.n_test = eligible.size();
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    std::size_t u = eligible[i];
    rep.user_ids.push_back(fz.corpus.users[u].user_id);
    rep.y_true.push_back(*detail::label_of(fz.corpus.users[u], version));
    rep.y_pred.push_back(predictions[i]);
    rep.word_counts.push_back(fz.word_count(u));
  }
  detail::fill_metrics(rep);
  return rep;
}

enum class Setting { S1, S2, S3 };

inline const char *setting_name(Setting s) {
  switch (s) {
    case Setting::S1: return "S1";
    case Setting::S2: return "S2";
    case Setting::S3: return "S3";
  }
  throw InternalError("unknown setting");
}

inline Setting parse_setting(std::string_view s) {
  if (s == "S1" || s == "s1") return Setting::S1;
  if (s == "S2" || s == "s2") return Setting::S2;
  if (s == "S3" || s == "s3") return Setting::S3;
  throw UsageError("unknown evaluation setting '" + std::string(s) + "' (expected S1, S2 or S3)");
}

/// The three train/test settings. S1: 10-fold CV among long-version users.
/// S2 and S3 share one model trained on users who only have the short
/// version; S2 scores the test group's 3q labels, S3 their 10q labels.
inline EvaluationReport run_setting(const Featurized &fz, Setting setting, const TrainConfig &cfg,
                                    const EvalParams &ep) {
  if (setting == Setting::S1) {
    EvaluationReport rep = cross_validate_kfold(fz, Version::q10, cfg, ep, 10,
                                                derive_seed(cfg.seed, "S1"));
    rep.setting = "S1";
    return rep;
  }

  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < fz.corpus.users.size(); ++i) {
    const auto &u = fz.corpus.users[i];
    if (!detail::above_threshold(fz, i, ep.wc_threshold)) continue;
    if (u.trust_10q)
      test_rows.push_back(i);
    else if (u.trust_3q)
      train_rows.push_back(i);
  }
  if (train_rows.empty()) throw DataError("run_setting: empty training group");
  if (test_rows.empty()) throw DataError("run_setting: empty test group");
  for (std::size_t u : test_rows)
    internal_check(!std::binary_search(train_rows.begin(), train_rows.end(), u),
                   "train and test groups must be disjoint");

  std::vector<double> labels;
  std::vector<std::size_t> wcs;
  for (std::size_t u : train_rows) {
    labels.push_back(*fz.corpus.users[u].trust_3q);
    wcs.push_back(fz.word_count(u));
  }
  TrainConfig s_cfg = cfg;
  s_cfg.label_version = "3q";
  s_cfg.seed = derive_seed(cfg.seed, "S23");  // S2 and S3 share the identical model
  TraitModel model = fit_trait_model(fz.rows(train_rows), labels, wcs, s_cfg);
  Eigen::VectorXd preds = predict(model, fz.rows(test_rows));

  EvaluationReport rep;
  rep.setting = setting_name(setting);
  rep.r_aa = ep.r_aa;
  rep.r_bb = ep.r_bb;
  rep.n_train = model.n_train;
  rep.n_test = test_rows.size();
  Version test_version = (setting == Setting::S2) ? Version::q3 : Version::q10;
  for (std::size_t k = 0; k < test_rows.size(); ++k) {
    std::size_t u = test_rows[k];
    auto label = detail::label_of(fz.corpus.users[u], test_version);
    internal_check(label.has_value(), "test user lost its label");
    rep.user_ids.push_back(fz.corpus.users[u].user_id);
    rep.y_true.push_back(*label);
    rep.y_pred.push_back(preds(static_cast<Eigen::Index>(k)));
    rep.word_counts.push_back(fz.word_count(u));
  }
  detail::fill_metrics(rep);
  return rep;
}

/// Mean absolute (or squared) error per word-count bin. Edges define
/// [e0,e1), ..., [e_last, inf). Empty bins come back absent, not as zeros.
inline std::vector<BinRow> error_by_wordcount(const EvaluationReport &rep,
                                              std::vector<double> edges,
                                              const std::string &metric = "mae") {
  if (rep.y_true.empty() || rep.y_true.size() != rep.y_pred.size() ||
      rep.y_true.size() != rep.word_counts.size())
    throw DataError("error_by_wordcount: report lacks per-user residuals or word counts");
  if (edges.empty()) throw UsageError("error_by_wordcount: need at least one bin edge");
  if (!std::is_sorted(edges.begin(), edges.end()))
    throw UsageError("error_by_wordcount: bin edges must be ascending");
  if (metric != "mae" && metric != "mse")
    throw UsageError("error_by_wordcount: metric must be mae or mse");

  std::vector<BinRow> bins(edges.size());
  for (std::size_t b = 0; b < edges.size(); ++b) {
    bins[b].lo = edges[b];
    bins[b].hi = (b + 1 < edges.size()) ? edges[b + 1] : std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < rep.y_true.size(); ++i) {
    double wc = static_cast<double>(rep.word_counts[i]);
    auto it = std::upper_bound(edges.begin(), edges.end(), wc);
    if (it == edges.begin()) continue;  // below the first edge
    std::size_t b = static_cast<std::size_t>(it - edges.begin()) - 1;
    double err = std::abs(rep.y_true[i] - rep.y_pred[i]);
    bins[b].value += (metric == "mae") ? err : err * err;
    ++bins[b].n;
  }
  std::vector<BinRow> out;
  for (auto &b : bins) {
    if (b.n == 0) continue;
    b.value /= static_cast<double>(b.n);
    out.push_back(b);
  }
  return out;
}

inline const std::vector<std::string> &sweep_scheme_names() {
  static const std::vector<std::string> names = {"threshold-1000", "threshold-200", "linear",
                                                 "logistic"};
  return names;
}

/// Fig.-2 style experiment: for each training size s, sample s users with at
/// least t_max words from the short-version-only pool (the sample is shared
/// across schemes), add lower-word-count users according to the scheme, fit
/// on 3q labels, evaluate against the fixed 10q test group, average over
/// repeats.
inline std::vector<SweepCell> training_size_sweep(const Featurized &fz,
                                                  const std::vector<std::size_t> &sizes,
                                                  const std::vector<std::string> &schemes,
                                                  const TrainConfig &cfg, const EvalParams &ep,
                                                  std::uint64_t seed, int repeats = 5) {
  if (sizes.empty()) throw UsageError("training_size_sweep: no sizes given");
  if (repeats < 1) throw UsageError("training_size_sweep: repeats must be >= 1");
  for (const auto &s : schemes)
    if (std::find(sweep_scheme_names().begin(), sweep_scheme_names().end(), s) ==
        sweep_scheme_names().end())
      throw UsageError("training_size_sweep: unknown scheme '" + s + "'");

  const double t_min = cfg.scheme.t_min, t_max = cfg.scheme.t_max;
  std::vector<std::size_t> high_pool, low_pool, test_rows;
  for (std::size_t i = 0; i < fz.corpus.users.size(); ++i) {
    const auto &u = fz.corpus.users[i];
    double wc = static_cast<double>(fz.word_count(i));
    if (u.trust_10q) {
      if (wc >= ep.wc_threshold) test_rows.push_back(i);
    } else if (u.trust_3q) {
      if (wc >= t_max)
        high_pool.push_back(i);
      else
        low_pool.push_back(i);
    }
  }
  if (test_rows.empty()) throw DataError("training_size_sweep: empty test group");
  for (std::size_t s : sizes)
    if (s > high_pool.size())
      throw DataError("training_size_sweep: size " + std::to_string(s) + " exceeds the " +
                      std::to_string(high_pool.size()) + " available high-word-count users");

  std::vector<double> test_labels;
  for (std::size_t u : test_rows) test_labels.push_back(*fz.corpus.users[u].trust_10q);
  auto test_mats = fz.rows(test_rows);

  std::vector<SweepCell> cells;
  for (std::size_t s : sizes) {
    std::vector<SweepCell> row;
    for (const auto &scheme : schemes) {
      SweepCell cell;
      cell.size = s;
      cell.scheme = scheme;
      cell.repeats = static_cast<std::size_t>(repeats);
      row.push_back(cell);
    }
    for (int rep = 0; rep < repeats; ++rep) {
      // one subsample per (size, repeat), shared by all schemes
      std::vector<std::size_t> pool = high_pool;
      Rng rng(derive_seed(derive_seed(seed, "sweep"), s * 1000003ULL + static_cast<std::uint64_t>(rep)));
      rng.shuffle(pool);
      std::vector<std::size_t> sampled(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(s));
      std::sort(sampled.begin(), sampled.end());

      for (std::size_t c = 0; c < schemes.size(); ++c) {
        const std::string &scheme = schemes[c];
        std::vector<std::size_t> train_rows = sampled;
        WeightScheme ws = cfg.scheme;
        if (scheme == "threshold-1000") {
          ws.kind = WeightKind::uniform;
        } else if (scheme == "threshold-200") {
          ws.kind = WeightKind::uniform;
          for (std::size_t u : low_pool)
            if (static_cast<double>(fz.word_count(u)) >= t_min) train_rows.push_back(u);
        } else {
          ws.kind = (scheme == "linear") ? WeightKind::linear : WeightKind::logistic;
          train_rows.insert(train_rows.end(), low_pool.begin(), low_pool.end());
        }
        std::sort(train_rows.begin(), train_rows.end());

        std::vector<double> labels;
        std::vector<std::size_t> wcs;
        for (std::size_t u : train_rows) {
          labels.push_back(*fz.corpus.users[u].trust_3q);
          wcs.push_back(fz.word_count(u));
        }
        TrainConfig cell_cfg = cfg;
        cell_cfg.scheme = ws;
        cell_cfg.label_version = "3q";
        cell_cfg.seed = derive_seed(derive_seed(seed, scheme),
                                    s * 1000003ULL + static_cast<std::uint64_t>(rep));
        TraitModel model = fit_trait_model(fz.rows(train_rows), labels, wcs, cell_cfg);
        Eigen::VectorXd preds = predict(model, test_mats);
        std::vector<double> yhat(preds.begin(), preds.end());

        SweepCell &cell = row[c];
        cell.mean_n_train += static_cast<double>(model.n_train);
        cell.mean_r += pearson_r(test_labels, yhat);
        cell.mean_r_dis += disattenuated_r(pearson_r(test_labels, yhat), ep.r_aa, ep.r_bb);
        cell.mean_mse += mse(test_labels, yhat);
      }
    }
    for (auto &cell : row) {
      cell.mean_n_train /= repeats;
      cell.mean_r /= repeats;
      cell.mean_r_dis /= repeats;
      cell.mean_mse /= repeats;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

inline nlohmann::json report_to_json(const EvaluationReport &rep) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto &b : rep.bins)
    bins.push_back({{"lo", b.lo},
                    {"hi", std::isinf(b.hi) ? nlohmann::json() : nlohmann::json(b.hi)},
                    {"n", b.n},
                    {"value", b.value}});
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto &c : rep.sweep)
    sweep.push_back({{"size", c.size},
                     {"scheme", c.scheme},
                     {"repeats", c.repeats},
                     {"mean_n_train", c.mean_n_train},
                     {"mean_r", c.mean_r},
                     {"mean_r_dis", c.mean_r_dis},
                     {"mean_mse", c.mean_mse}});
  return nlohmann::json{{"setting", rep.setting},
                        {"n_train", rep.n_train},
                        {"n_test", rep.n_test},
                        {"mse", rep.mse},
                        {"pearson_r", rep.pearson_r},
                        {"r_dis", rep.r_dis},
                        {"r_aa", rep.r_aa},
                        {"r_bb", rep.r_bb},
                        {"user_ids", rep.user_ids},
                        {"y_true", rep.y_true},
                        {"y_pred", rep.y_pred},
                        {"word_counts", rep.word_counts},
                        {"bins", std::move(bins)},
                        {"sweep", std::move(sweep)}};
}

inline void write_report_text(const EvaluationReport &rep, std::ostream &out) {
  auto line = [&](const std::string &key, const std::string &value) {
    out << std::left << std::setw(12) << key << value << '\n';
  };
  line("setting", rep.setting);
  line("n_train", std::to_string(rep.n_train));
  line("n_test", std::to_string(rep.n_test));
  line("mse", csv::format_double(rep.mse));
  line("pearson_r", csv::format_double(rep.pearson_r));
  line("r_dis", csv::format_double(rep.r_dis) + "  (r_aa=" + csv::format_double(rep.r_aa) +
                    ", r_bb=" + csv::format_double(rep.r_bb) + ")");
  if (!rep.bins.empty()) {
    out << "\nword-count bins\n";
    out << std::left << std::setw(16) << "bin" << std::setw(8) << "n" << "error\n";
    for (const auto &b : rep.bins) {
      std::string label = "[" + csv::format_double(b.lo) + "," +
                          (std::isinf(b.hi) ? std::string("inf") : csv::format_double(b.hi)) + ")";
      out << std::left << std::setw(16) << label << std::setw(8) << b.n
          << csv::format_double(b.value) << '\n';
    }
  }
  if (!rep.sweep.empty()) {
    out << "\ntraining-size sweep\n";
    out << std::left << std::setw(8) << "size" << std::setw(16) << "scheme" << std::setw(12)
        << "mean_r" << std::setw(12) << "mean_r_dis" << "mean_mse\n";
    for (const auto &c : rep.sweep)
      out << std::left << std::setw(8) << c.size << std::setw(16) << c.scheme << std::setw(12)
          << csv::format_double(c.mean_r) << std::setw(12) << csv::format_double(c.mean_r_dis)
          << csv::format_double(c.mean_mse) << '\n';
  }
}

inline void write_bins_csv(const std::vector<BinRow> &bins, std::ostream &out) {
  out << "lo,hi,n,value\n";
  for (const auto &b : bins)
    out << csv::format_double(b.lo) << ','
        << (std::isinf(b.hi) ? std::string("inf") : csv::format_double(b.hi)) << ',' << b.n << ','
        << csv::format_double(b.value) << '\n';
}

inline void write_sweep_csv(const std::vector<SweepCell> &cells, std::ostream &out) {
  out << "size,scheme,repeats,mean_n_train,mean_r,mean_r_dis,mean_mse\n";
  for (const auto &c : cells)
    out << c.size << ',' << c.scheme << ',' << c.repeats << ',' << csv::format_double(c.mean_n_train)
        << ',' << csv::format_double(c.mean_r) << ',' << csv::format_double(c.mean_r_dis) << ','
        << csv::format_double(c.mean_mse) << '\n';
}

}  // namespace trustlex
