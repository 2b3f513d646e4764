#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "trustlex/csv.hpp"
#include "trustlex/error.hpp"

namespace trustlex {

struct Message {
  std::string user_id;
  std::string message_id;
  std::string text;
  std::string created_at;  // empty when absent
};

struct QuestionnaireResponse {
  std::string user_id;
  std::string item_id;
  int value = 0;  // 1..5
  bool reverse_scored = false;
  bool in_3q = false;
};

/// One study participant. word_count is filled by the tokenizer; trust
/// scores are present only when the user covered the full item set of the
/// respective questionnaire version.
struct UserRecord {
  std::string user_id;
  std::vector<Message> messages;
  std::optional<std::size_t> word_count;
  std::optional<double> trust_3q;
  std::optional<double> trust_10q;
};

enum class Version { q3, q10 };

inline const char *version_name(Version v) { return v == Version::q3 ? "3q" : "10q"; }

inline Version parse_version(std::string_view s) {
  if (s == "3q") return Version::q3;
  if (s == "10q") return Version::q10;
  throw UsageError("unknown questionnaire version '" + std::string(s) + "' (expected 3q or 10q)");
}

// The item universe of the questionnaire, reconstructed from the responses
// file: every listed item belongs to the long version, in_3q marks the
// short-version subset.
struct InstrumentItem {
  std::string item_id;
  bool reverse_scored = false;
  bool in_3q = false;
};

struct Instrument {
  std::vector<InstrumentItem> items;  // sorted by item_id

  std::vector<std::string> version_items(Version v) const {
    std::vector<std::string> out;
    for (const auto &it : items)
      if (v == Version::q10 || it.in_3q) out.push_back(it.item_id);
    return out;
  }
};

struct Corpus {
  std::vector<UserRecord> users;  // sorted by user_id
  Instrument instrument;

  const UserRecord *find(std::string_view user_id) const {
    auto it = std::lower_bound(users.begin(), users.end(), user_id,
                               [](const UserRecord &u, std::string_view id) { return u.user_id < id; });
    if (it == users.end() || it->user_id != user_id) return nullptr;
    return &*it;
  }
};

/// Inverts a 1..5 questionnaire response: a 1 becomes a 5 and vice versa.
inline int reverse_score(int value) {
  if (value < 1 || value > 5)
    throw DataError("reverse_score: value out of range [1,5]: " + std::to_string(value));
  return 6 - value;
}

/// Mean of the responses to the requested version's items, with
/// reverse-scored items inverted first. The instrument defines which items
/// the version requires; each must appear exactly once.
inline double score_questionnaire(const std::vector<QuestionnaireResponse> &responses,
                                  const Instrument &instrument, Version version) {
  std::map<std::string, int> values;
  std::map<std::string, bool> reversed;
  std::vector<std::string> duplicates;
  std::set<std::string> wanted;
  for (const auto &item : instrument.items)
    if (version == Version::q10 || item.in_3q) {
      wanted.insert(item.item_id);
      reversed[item.item_id] = item.reverse_scored;
    }
  for (const auto &r : responses) {
    if (!wanted.count(r.item_id)) continue;  // items outside the version are ignored
    if (r.value < 1 || r.value > 5)
      throw DataError("score_questionnaire: value out of range [1,5] for item " + r.item_id);
    if (values.count(r.item_id)) duplicates.push_back(r.item_id);
    values[r.item_id] = r.value;
  }
  std::vector<std::string> missing;
  for (const auto &id : wanted)
    if (!values.count(id)) missing.push_back(id);
  if (!duplicates.empty() || !missing.empty()) {
    std::string msg = "score_questionnaire(" + std::string(version_name(version)) + "):";
    if (!missing.empty()) {
      msg += " missing items:";
      for (const auto &id : missing) msg += " " + id;
    }
    if (!duplicates.empty()) {
      msg += " duplicate items:";
      for (const auto &id : duplicates) msg += " " + id;
    }
    throw DataError(msg);
  }
  double sum = 0;
  for (const auto &[id, v] : values) sum += reversed[id] ? reverse_score(v) : v;
  return sum / static_cast<double>(values.size());
}

namespace detail {

inline std::string json_string_field(const nlohmann::json &obj, const char *key,
                                     const std::string &where, bool required) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw DataError(where + ": missing field '" + key + "'");
    return {};
  }
  if (!it->is_string()) throw DataError(where + ": field '" + key + "' must be a string");
  return it->get<std::string>();
}

inline bool parse_flag01(const std::string &s, const std::string &where, const char *field) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw DataError(where + ": field '" + std::string(field) + "' must be 0 or 1, got '" + s + "'");
}

}  // namespace detail

/// Reads messages (JSON lines) and questionnaire responses (CSV) into a
/// corpus with one record per user seen in either file. Trust scores are
/// computed for every user whose responses cover a version completely. An
/// empty responses path means "no questionnaire data" (prediction-only use).
inline Corpus load_corpus(const std::string &messages_path, const std::string &responses_path) {
  std::map<std::string, UserRecord> users;

  {
    std::ifstream in(messages_path);
    if (!in) throw DataError("cannot open messages file: " + messages_path);
    std::string line;
    std::size_t line_no = 0;
    std::unordered_set<std::string> seen_ids;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      std::string where = messages_path + ":" + std::to_string(line_no);
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error &e) {
        throw DataError(where + ": malformed JSON: " + e.what());
      }
      if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
      Message msg;
      msg.user_id = detail::json_string_field(obj, "user_id", where, true);
      msg.message_id = detail::json_string_field(obj, "message_id", where, true);
      msg.text = detail::json_string_field(obj, "text", where, true);
      msg.created_at = detail::json_string_field(obj, "created_at", where, false);
      if (msg.user_id.empty()) throw DataError(where + ": field 'user_id' must be non-empty");
      if (msg.text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw DataError(where + ": field 'text' is empty after trimming");
      std::string key = msg.user_id + "\x1f" + msg.message_id;
      if (!seen_ids.insert(key).second)
        throw DataError(where + ": duplicate (user_id, message_id): (" + msg.user_id + ", " +
                        msg.message_id + ")");
      users[msg.user_id].messages.push_back(std::move(msg));
    }
  }

  std::map<std::string, std::vector<QuestionnaireResponse>> responses;
  std::map<std::string, InstrumentItem> items;
  if (!responses_path.empty()) {
    std::ifstream in(responses_path);
    if (!in) throw DataError("cannot open responses file: " + responses_path);
    csv::Reader reader(in, responses_path);
    std::vector<std::string> fields;
    bool have_header = reader.next(fields);
    if (have_header) {
      const std::vector<std::string> expected = {"user_id", "item_id", "value", "reverse_scored",
                                                 "in_3q"};
      if (fields != expected)
        throw DataError(responses_path + ":1: expected header user_id,item_id,value,reverse_scored,in_3q");
      std::set<std::pair<std::string, std::string>> seen;
      while (reader.next(fields)) {
        std::string where = reader.where();
        if (fields.size() != 5) throw DataError(where + ": expected 5 fields, got " +
                                                std::to_string(fields.size()));
        QuestionnaireResponse r;
        r.user_id = fields[0];
        r.item_id = fields[1];
        if (r.user_id.empty()) throw DataError(where + ": field 'user_id' must be non-empty");
        if (r.item_id.empty()) throw DataError(where + ": field 'item_id' must be non-empty");
        try {
          std::size_t pos = 0;
          r.value = std::stoi(fields[2], &pos);
          if (pos != fields[2].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception &) {
          throw DataError(where + ": field 'value' is not an integer: '" + fields[2] + "'");
        }
        if (r.value < 1 || r.value > 5)
          throw DataError(where + ": field 'value' out of range [1,5]: " + fields[2]);
        r.reverse_scored = detail::parse_flag01(fields[3], where, "reverse_scored");
        r.in_3q = detail::parse_flag01(fields[4], where, "in_3q");
        if (!seen.insert({r.user_id, r.item_id}).second)
          throw DataError(where + ": duplicate response for (user " + r.user_id + ", item " +
                          r.item_id + ")");
        auto [it, inserted] = items.try_emplace(r.item_id,
                                                InstrumentItem{r.item_id, r.reverse_scored, r.in_3q});
        if (!inserted && (it->second.reverse_scored != r.reverse_scored || it->second.in_3q != r.in_3q))
          throw DataError(where + ": inconsistent flags for item " + r.item_id +
                          " (reverse_scored/in_3q must match earlier rows)");
        responses[r.user_id].push_back(std::move(r));
      }
    }
  }

  Corpus corpus;
  for (const auto &[id, item] : items) corpus.instrument.items.push_back(item);

  for (auto &[id, rs] : responses) users[id];  // ensure users with responses only
  for (auto &[id, record] : users) record.user_id = id;

  // A user gets a version's score iff their responses cover that version's
  // item set completely; partial coverage simply leaves the score unset.
  for (auto &[id, record] : users) {
    auto it = responses.find(id);
    if (it == responses.end()) continue;
    std::set<std::string> answered;
    for (const auto &r : it->second) answered.insert(r.item_id);
    auto covers = [&](Version v) {
      for (const auto &item : corpus.instrument.items) {
        bool wanted = (v == Version::q10) || item.in_3q;
        if (wanted && !answered.count(item.item_id)) return false;
      }
      return true;
    };
    bool any_3q = false;
    for (const auto &item : corpus.instrument.items) any_3q |= item.in_3q;
    if (any_3q && covers(Version::q3))
      record.trust_3q = score_questionnaire(it->second, corpus.instrument, Version::q3);
    if (!corpus.instrument.items.empty() && covers(Version::q10))
      record.trust_10q = score_questionnaire(it->second, corpus.instrument, Version::q10);
  }

  corpus.users.reserve(users.size());
  for (auto &[id, record] : users) corpus.users.push_back(std::move(record));
  return corpus;
}

/// user_id,trust_3q,trust_10q,word_count with empty cells for missing values.
inline void write_scored_csv(const Corpus &corpus, std::ostream &out) {
  out << "user_id,trust_3q,trust_10q,word_count\n";
  for (const auto &u : corpus.users) {
    out << csv::format_field(u.user_id) << ',';
    if (u.trust_3q) out << csv::format_double(*u.trust_3q);
    out << ',';
    if (u.trust_10q) out << csv::format_double(*u.trust_10q);
    out << ',';
    if (u.word_count) out << *u.word_count;
    out << '\n';
  }
}

}  // namespace trustlex
