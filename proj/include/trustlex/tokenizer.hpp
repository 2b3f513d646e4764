#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "trustlex/corpus.hpp"

namespace trustlex {

struct TokenStream {
  std::string user_id;
  std::vector<std::string> tokens;
  // index into tokens where each message starts; size == number of messages
  std::vector<std::size_t> message_starts;
};

namespace tok {

inline bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
inline bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
inline bool is_word_char(unsigned char c) { return c >= 0x80 || std::isalnum(c) || c == '_'; }

inline bool in_set(char c, std::string_view set) { return set.find(c) != std::string_view::npos; }

constexpr std::string_view kEyes = ":;=8xX";
constexpr std::string_view kNose = "-o*'^~";
constexpr std::string_view kMouth = ")(]}[{DdPpb\\/|oO0*@$sS3";
constexpr std::string_view kReverseMouth = ")(]}[{\\/|dDb";

/// Fixed eyes/nose/mouth pattern list, plus the heart variants. Matching
/// tokens are preserved verbatim (never lowercased).
inline bool is_emoticon(std::string_view s) {
  if (s.size() < 2) return false;
  if (s == "<3" || s == "</3") return true;
  // forward: eyes, optional nose, then one mouth character possibly repeated
  if (in_set(s[0], kEyes)) {
    std::size_t i = 1;
    if (i + 1 < s.size() && in_set(s[i], kNose)) ++i;
    if (i < s.size() && in_set(s[i], kMouth)) {
      char mouth = s[i];
      bool ok = true;
      for (std::size_t j = i; j < s.size(); ++j)
        if (s[j] != mouth) { ok = false; break; }
      if (ok) return true;
    }
  }
  // reverse: one repeated mouth character, optional nose, then eyes
  if (in_set(s.back(), kEyes)) {
    std::size_t end = s.size() - 1;  // index of eyes
    std::size_t i = end;
    if (i >= 1 && in_set(s[i - 1], kNose)) --i;
    if (i >= 1 && in_set(s[i - 1], kReverseMouth)) {
      char mouth = s[i - 1];
      bool ok = true;
      for (std::size_t j = 0; j < i; ++j)
        if (s[j] != mouth) { ok = false; break; }
      if (ok) return true;
    }
  }
  return false;
}

inline bool is_url(std::string_view s) {
  auto starts_with_ci = [&](std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
    return true;
  };
  return starts_with_ci("http://") || starts_with_ci("https://") || starts_with_ci("www.");
}

inline bool is_tag(std::string_view s) {
  return s.size() >= 2 && (s[0] == '#' || s[0] == '@') && is_word_char(static_cast<unsigned char>(s[1]));
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char &c : out)
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace tok

/// Social-media-aware tokenization: URLs collapse to "<url>", emoticons,
/// hashtags and @-mentions survive as single tokens, punctuation at token
/// edges splits off, everything except emoticons is lowercased. No other
/// normalization: spelling variants pass through verbatim.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && tok::is_space(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t start = pos;
    while (pos < text.size() && !tok::is_space(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == start) break;
    std::string_view chunk = text.substr(start, pos - start);

    // peel leading punctuation one character at a time, re-checking for a
    // recognizable remainder after each peel
    while (!chunk.empty()) {
      if (tok::is_emoticon(chunk) || tok::is_url(chunk) || tok::is_tag(chunk)) break;
      if (!tok::is_punct(static_cast<unsigned char>(chunk[0]))) break;
      out.emplace_back(1, chunk[0]);
      chunk.remove_prefix(1);
    }
    if (chunk.empty()) continue;
    if (tok::is_emoticon(chunk)) {
      out.emplace_back(chunk);
      continue;
    }
    if (tok::is_url(chunk)) {
      out.emplace_back("<url>");
      continue;
    }

    // split off the trailing punctuation run; keep it whole when it forms an
    // emoticon, otherwise emit it character by character
    std::size_t core_end = chunk.size();
    while (core_end > 0 && tok::is_punct(static_cast<unsigned char>(chunk[core_end - 1]))) --core_end;
    std::string_view core = chunk.substr(0, core_end);
    std::string_view tail = chunk.substr(core_end);
    if (core_end == 0) {
      for (char c : chunk) out.emplace_back(1, c);
      continue;
    }
    out.push_back(tok::ascii_lower(core));
    if (!tail.empty()) {
      if (tok::is_emoticon(tail)) {
        out.emplace_back(tail);
      } else {
        for (char c : tail) out.emplace_back(1, c);
      }
    }
  }
  return out;
}

/// Concatenates per-message tokenizations, records message start offsets and
/// stores the total token count in the record's word_count.
inline TokenStream tokenize_user(UserRecord &record) {
  TokenStream stream;
  stream.user_id = record.user_id;
  for (const Message &m : record.messages) {
    stream.message_starts.push_back(stream.tokens.size());
    auto toks = tokenize(m.text);
    stream.tokens.insert(stream.tokens.end(), std::make_move_iterator(toks.begin()),
                         std::make_move_iterator(toks.end()));
  }
  record.word_count = stream.tokens.size();
  return stream;
}

inline std::vector<TokenStream> tokenize_corpus(Corpus &corpus) {
  std::vector<TokenStream> streams;
  streams.reserve(corpus.users.size());
  for (auto &u : corpus.users) streams.push_back(tokenize_user(u));
  return streams;
}

}  // namespace trustlex
