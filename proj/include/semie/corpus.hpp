#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "semie/error.hpp"

namespace semie {

using TokenId = std::uint32_t;

/// Reserved prefix of anchor tokens. Whitespace-delimited chunks that start
/// with it survive tokenization verbatim.
inline constexpr std::string_view kAnchorPrefix = "A_";

inline bool is_anchor_token(std::string_view token) {
  return token.size() > kAnchorPrefix.size() && token.substr(0, kAnchorPrefix.size()) == kAnchorPrefix;
}

/// "Seat Belts" -> "A_Seat_Belts".
inline std::string anchor_token(std::string_view label) {
  std::string out(kAnchorPrefix);
  for (char c : label) out.push_back(std::isspace(static_cast<unsigned char>(c)) ? '_' : c);
  return out;
}

/// Inverse of anchor_token: "A_Seat_Belts" -> "Seat Belts".
inline std::string concept_name(std::string_view anchor) {
  if (anchor.substr(0, kAnchorPrefix.size()) == kAnchorPrefix) anchor.remove_prefix(kAnchorPrefix.size());
  std::string out(anchor);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

namespace detail {

// Bytes >= 0x80 count as word characters so UTF-8 letters stay intact.
inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace detail

/// Lowercases and splits on every non-alphanumeric byte. Chunks carrying the
/// anchor prefix are kept as-is so infused text can be re-ingested.
inline std::vector<std::string> tokenize(std::string_view raw) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    std::size_t end = i;
    while (end < raw.size() && !std::isspace(static_cast<unsigned char>(raw[end]))) ++end;
    const std::string_view chunk = raw.substr(i, end - i);
    if (is_anchor_token(chunk)) {
      tokens.emplace_back(chunk);
    } else {
      std::string current;
      for (char c : chunk) {
        const auto u = static_cast<unsigned char>(c);
        if (detail::is_word_byte(u)) {
          current.push_back(static_cast<char>(std::tolower(u)));
        } else if (!current.empty()) {
          tokens.push_back(std::move(current));
          current.clear();
        }
      }
      if (!current.empty()) tokens.push_back(std::move(current));
    }
    i = end;
  }
  return tokens;
}

struct Document {
  std::vector<std::string> tokens;
  std::string label;
};

struct Corpus {
  std::vector<Document> documents;
  std::size_t dropped = 0;  // records with no tokens left after tokenization

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }

  /// Distinct labels, sorted.
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& d : documents) out.push_back(d.label);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.tokens.size();
    return n;
  }
};

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat parse_format(std::string_view tag) {
  if (tag == "jsonl") return CorpusFormat::jsonl;
  if (tag == "csv") return CorpusFormat::csv;
  fail(ErrorKind::config, "unknown corpus format '" + std::string(tag) + "' (expected jsonl or csv)");
}

namespace detail {

inline void add_record(Corpus& corpus, std::string_view text, std::string label, std::size_t line) {
  if (label.empty()) fail(ErrorKind::input, "line " + std::to_string(line) + ": empty label");
  auto tokens = tokenize(text);
  if (tokens.empty()) {
    ++corpus.dropped;
    return;
  }
  corpus.documents.push_back(Document{std::move(tokens), std::move(label)});
}

inline void read_jsonl(std::istream& in, Corpus& corpus) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::input, "line " + std::to_string(lineno) + ": malformed JSON (" + e.what() + ")");
    }
    if (!record.is_object() || !record.contains("text") || !record.contains("label") ||
        !record["text"].is_string() || !record["label"].is_string()) {
      fail(ErrorKind::input, "line " + std::to_string(lineno) + ": record needs string fields \"text\" and \"label\"");
    }
    add_record(corpus, record["text"].get<std::string>(), record["label"].get<std::string>(), lineno);
  }
}

/// Reads one RFC 4180 record; quoted fields may span lines. Returns false at EOF.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& lineno) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  ++lineno;
  const std::size_t start = lineno;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++lineno;
        field.push_back(c);
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) fail(ErrorKind::input, "line " + std::to_string(start) + ": unterminated quoted field");
  fields.push_back(std::move(field));
  return true;
}

inline void read_csv(std::istream& in, Corpus& corpus) {
  std::vector<std::string> fields;
  std::size_t lineno = 0;
  if (!read_csv_record(in, fields, lineno)) return;
  if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
  const auto col = [&](std::string_view name) -> std::size_t {
    const auto it = std::find(fields.begin(), fields.end(), name);
    if (it == fields.end()) fail(ErrorKind::input, "line 1: CSV header lacks column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - fields.begin());
  };
  const std::size_t text_col = col("text");
  const std::size_t label_col = col("label");
  const std::size_t width = fields.size();
  while (read_csv_record(in, fields, lineno)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != width) {
      fail(ErrorKind::input, "line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                                 " fields, got " + std::to_string(fields.size()));
    }
    add_record(corpus, fields[text_col], std::move(fields[label_col]), lineno);
  }
}

}  // namespace detail

inline Corpus read_corpus(std::istream& in, CorpusFormat format) {
  Corpus corpus;
  if (format == CorpusFormat::jsonl) {
    detail::read_jsonl(in, corpus);
  } else {
    detail::read_csv(in, corpus);
  }
  if (corpus.empty()) fail(ErrorKind::input, "empty corpus");
  return corpus;
}

inline Corpus ingest(const std::string& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::input, "cannot read corpus file '" + path + "'");
  return read_corpus(in, format);
}

inline Corpus ingest(const std::string& path, std::string_view format) { return ingest(path, parse_format(format)); }

/// JSONL with the same {"text","label"} schema the reader accepts; tokens are
/// space-joined, so re-ingesting reproduces the documents exactly.
inline void write_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus.documents) {
    std::string text;
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      if (i) text.push_back(' ');
      text += doc.tokens[i];
    }
    out << nlohmann::json{{"text", text}, {"label", doc.label}}.dump() << '\n';
  }
}

/// Token <-> id map. Ids follow descending frequency, ties lexicographic.
/// Anchor tokens are always retained whatever their count.
class Vocab {
 public:
  Vocab() = default;

  static Vocab build(const Corpus& corpus, std::size_t min_count) {
    require(!corpus.empty(), ErrorKind::input, "empty corpus");
    require(min_count >= 1, ErrorKind::config, "min_count must be positive");
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& doc : corpus.documents)
      for (const auto& tok : doc.tokens) ++counts[tok];
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (auto& [tok, n] : counts)
      if (n >= min_count || is_anchor_token(tok)) kept.emplace_back(tok, n);
    if (kept.empty()) fail(ErrorKind::input, "empty vocabulary (no token reaches min_count)");
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocab v;
    for (auto& [tok, n] : kept) v.push(std::move(tok), n);
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  /// Number of non-anchor tokens.
  std::size_t regular_size() const { return tokens_.size() - anchors_.size(); }

  std::optional<TokenId> id(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t count(TokenId id) const { return counts_.at(id); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  bool is_anchor(TokenId id) const { return is_anchor_.at(id) != 0; }
  /// Anchor ids in ascending order.
  std::span<const TokenId> anchor_ids() const { return anchors_; }

  std::uint64_t total_count() const {
    std::uint64_t n = 0;
    for (auto c : counts_) n += c;
    return n;
  }

  /// Maps a document to ids; out-of-vocabulary tokens are skipped.
  std::vector<TokenId> encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens)
      if (auto id = this->id(t)) ids.push_back(*id);
    return ids;
  }

  /// One `token<TAB>id<TAB>count` line per entry, ordered by id.
  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\t' << counts_[i] << '\n';
  }

  static Vocab read(std::istream& in) {
    Vocab v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string tok;
      std::size_t id = 0;
      std::uint64_t n = 0;
      if (!std::getline(fields, tok, '\t') || !(fields >> id >> n) || id != v.size()) {
        fail(ErrorKind::input, "vocab line " + std::to_string(lineno) + ": expected token<TAB>id<TAB>count in id order");
      }
      if (v.contains(tok)) fail(ErrorKind::input, "vocab line " + std::to_string(lineno) + ": duplicate token");
      v.push(std::move(tok), n);
    }
    return v;
  }

 private:
  void push(std::string tok, std::uint64_t n) {
    const auto id = static_cast<TokenId>(tokens_.size());
    const bool anchor = is_anchor_token(tok);
    if (anchor) anchors_.push_back(id);
    is_anchor_.push_back(anchor ? 1 : 0);
    index_.emplace(tok, id);
    tokens_.push_back(std::move(tok));
    counts_.push_back(n);
  }

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::vector<char> is_anchor_;
  std::vector<TokenId> anchors_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace semie
