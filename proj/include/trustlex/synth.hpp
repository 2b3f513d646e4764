#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustlex/csv.hpp"
#include "trustlex/error.hpp"
#include "trustlex/rng.hpp"
#include "trustlex/stats.hpp"

namespace trustlex {

/// Seeded generator planting a latent trait into vocabulary usage and
/// questionnaire responses, so the pipeline's qualitative claims can be
/// checked without any real study data.
struct SynthConfig {
  std::size_t n_short_users = 200;  // answer only the 3-question subset
  std::size_t n_long_users = 50;    // answer all items (both scores derivable)
  std::size_t positive_words = 5;
  std::size_t negative_words = 5;
  std::size_t neutral_words = 300;
  double signal_strength = 1.0;     // log-odds shift of loaded words per unit trait
  double wc_log_median = 400.0;     // word count ~ lognormal(log median, sigma)
  double wc_sigma = 1.1;
  double noise_std = 1.0;           // per-item response noise
  std::size_t items_total = 10;
  std::size_t items_3q = 3;
  double reverse_fraction = 0.3;
  std::size_t message_len_min = 5;
  std::size_t message_len_max = 30;
  std::uint64_t seed = 1;
};

struct SynthOutput {
  std::filesystem::path messages_path;
  std::filesystem::path responses_path;
  std::filesystem::path ground_truth_path;
  std::vector<std::string> user_ids;  // sorted, aligned with traits
  std::vector<double> traits;
  std::vector<std::size_t> word_counts;
  std::vector<std::string> positive_word_list;
  std::vector<std::string> negative_word_list;
};

namespace synth_detail {

inline void validate(const SynthConfig &c) {
  if (c.n_short_users + c.n_long_users == 0) throw UsageError("synth: need at least one user");
  if (c.positive_words < 1 || c.negative_words < 1 || c.neutral_words < 1)
    throw UsageError("synth: every word pool needs at least one word");
  if (!(c.noise_std > 0)) throw UsageError("synth: noise_std must be positive");
  if (!(c.signal_strength >= 0)) throw UsageError("synth: signal_strength must be >= 0");
  if (c.items_3q < 1 || c.items_3q > c.items_total)
    throw UsageError("synth: items_3q must lie in [1, items_total]");
  if (c.items_total > 99) throw UsageError("synth: at most 99 items supported");
  if (c.message_len_min < 1 || c.message_len_min > c.message_len_max)
    throw UsageError("synth: need 1 <= message_len_min <= message_len_max");
  if (!(c.reverse_fraction >= 0 && c.reverse_fraction < 1))
    throw UsageError("synth: reverse_fraction must lie in [0,1)");
  if (!(c.wc_log_median >= 1)) throw UsageError("synth: wc_log_median must be >= 1");
}

inline std::string pad_id(const char *prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

// evenly spread reverse-scored item positions (1-based)
inline std::set<std::size_t> reversed_positions(std::size_t items, double fraction) {
  std::set<std::size_t> out;
  std::size_t k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(items)));
  for (std::size_t j = 0; j < k; ++j) {
    double pos = (static_cast<double>(j) + 0.5) * static_cast<double>(items) / static_cast<double>(k);
    std::size_t p = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(pos)), 1, items);
    out.insert(p);
  }
  return out;
}

}  // namespace synth_detail

/// Writes messages.jsonl, responses.csv and ground_truth.csv under out_dir.
/// Per user: trait z ~ N(0,1); word count lognormal; tokens sampled from a
/// softmax-renormalized unigram distribution whose loaded-word logits shift
/// by z * signal_strength; item response = clamp(round(3 + z + noise), 1, 5),
/// stored inverted for reverse-scored items. Same seed, same bytes.
inline SynthOutput generate(const SynthConfig &cfg, const std::filesystem::path &out_dir) {
  synth_detail::validate(cfg);
  std::filesystem::create_directories(out_dir);

  SynthOutput out;
  out.messages_path = out_dir / "messages.jsonl";
  out.responses_path = out_dir / "responses.csv";
  out.ground_truth_path = out_dir / "ground_truth.csv";

  // vocabulary: ten common neutral words first, then the loaded words
  // interleaved, then the neutral tail; base probability is Zipf-like in
  // list position so loaded words are mid-frequency
  for (std::size_t i = 0; i < cfg.positive_words; ++i)
    out.positive_word_list.push_back(synth_detail::pad_id("posw", i, 2));
  for (std::size_t i = 0; i < cfg.negative_words; ++i)
    out.negative_word_list.push_back(synth_detail::pad_id("negw", i, 2));
  std::vector<std::string> vocab;
  std::vector<int> polarity;  // +1 / -1 / 0
  std::size_t neutral_head = std::min<std::size_t>(cfg.neutral_words, 10);
  std::size_t neutral_emitted = 0;
  for (; neutral_emitted < neutral_head; ++neutral_emitted) {
    vocab.push_back(synth_detail::pad_id("w", neutral_emitted, 3));
    polarity.push_back(0);
  }
  for (std::size_t i = 0; i < std::max(cfg.positive_words, cfg.negative_words); ++i) {
    if (i < cfg.positive_words) {
      vocab.push_back(out.positive_word_list[i]);
      polarity.push_back(+1);
    }
    if (i < cfg.negative_words) {
      vocab.push_back(out.negative_word_list[i]);
      polarity.push_back(-1);
    }
  }
  for (; neutral_emitted < cfg.neutral_words; ++neutral_emitted) {
    vocab.push_back(synth_detail::pad_id("w", neutral_emitted, 3));
    polarity.push_back(0);
  }
  std::vector<double> base_log(vocab.size());
  for (std::size_t j = 0; j < vocab.size(); ++j)
    base_log[j] = -std::log(static_cast<double>(j) + 3.0);

  const std::size_t n_users = cfg.n_short_users + cfg.n_long_users;
  auto reversed = synth_detail::reversed_positions(cfg.items_total, cfg.reverse_fraction);

  std::ofstream messages(out.messages_path, std::ios::binary);
  std::ofstream responses(out.responses_path, std::ios::binary);
  std::ofstream truth(out.ground_truth_path, std::ios::binary);
  if (!messages || !responses || !truth)
    throw DataError("synth: cannot write into " + out_dir.string());
  responses << "user_id,item_id,value,reverse_scored,in_3q\n";
  truth << "user_id,trait\n";

  std::vector<double> probs(vocab.size()), cumulative(vocab.size());
  for (std::size_t u = 0; u < n_users; ++u) {
    const bool long_version = u >= cfg.n_short_users;
    std::string user_id = synth_detail::pad_id("u", u, 5);
    Rng rng(derive_seed(derive_seed(cfg.seed, "user"), u));

    double z = rng.normal();
    out.user_ids.push_back(user_id);
    out.traits.push_back(z);

    double wc_raw = std::exp(std::log(cfg.wc_log_median) + cfg.wc_sigma * rng.normal());
    std::size_t wc = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(wc_raw)), 1,
                                             200000);
    out.word_counts.push_back(wc);

    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < vocab.size(); ++j) {
      double logit = base_log[j] + cfg.signal_strength * z * polarity[j];
      probs[j] = logit;
      max_logit = std::max(max_logit, logit);
    }
    double total = 0;
    for (std::size_t j = 0; j < vocab.size(); ++j) {
      probs[j] = std::exp(probs[j] - max_logit);
      total += probs[j];
    }
    double acc = 0;
    for (std::size_t j = 0; j < vocab.size(); ++j) {
      acc += probs[j] / total;
      cumulative[j] = acc;
    }
    cumulative.back() = 1.0;

    std::size_t emitted = 0, msg_index = 0;
    std::string text;
    while (emitted < wc) {
      std::size_t len = cfg.message_len_min +
                        static_cast<std::size_t>(rng.below(cfg.message_len_max - cfg.message_len_min + 1));
      len = std::min(len, wc - emitted);
      text.clear();
      for (std::size_t t = 0; t < len; ++t) {
        double x = rng.uniform01();
        std::size_t j = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
        if (j >= vocab.size()) j = vocab.size() - 1;
        if (t) text.push_back(' ');
        text += vocab[j];
      }
      emitted += len;
      nlohmann::json obj{{"user_id", user_id},
                         {"message_id", synth_detail::pad_id("m", msg_index++, 4)},
                         {"text", text}};
      messages << obj.dump() << '\n';
    }

    std::size_t items_answered = long_version ? cfg.items_total : cfg.items_3q;
    for (std::size_t item = 1; item <= items_answered; ++item) {
      double latent = 3.0 + z + cfg.noise_std * rng.normal();
      int value = static_cast<int>(std::clamp<long>(std::lround(latent), 1, 5));
      bool rev = reversed.count(item) > 0;
      if (rev) value = 6 - value;
      responses << user_id << ',' << synth_detail::pad_id("q", item, 2) << ',' << value << ','
                << (rev ? 1 : 0) << ',' << (item <= cfg.items_3q ? 1 : 0) << '\n';
    }

    truth << user_id << ',' << csv::format_double(z) << '\n';
  }
  return out;
}

/// Pearson correlation against the generator's latent traits; the oracle
/// upper-bound reference for any score or prediction vector.
inline double oracle_r(std::span<const double> traits, std::span<const double> values) {
  return pearson_r(traits, values);
}

}  // namespace trustlex
