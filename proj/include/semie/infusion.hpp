#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "semie/corpus.hpp"
#include "semie/error.hpp"
#include "semie/rng.hpp"

namespace semie {

/// Class label -> anchor token.
class AnchorSet {
 public:
  AnchorSet() = default;

  static AnchorSet for_labels(const std::vector<std::string>& labels) {
    AnchorSet set;
    for (const auto& label : labels) set.add(label, anchor_token(label));
    return set;
  }

  static AnchorSet for_corpus(const Corpus& corpus) { return for_labels(corpus.labels()); }

  void add(const std::string& label, const std::string& anchor) {
    require(is_anchor_token(anchor), ErrorKind::config, "anchor '" + anchor + "' lacks the A_ prefix");
    require(!by_label_.count(label), ErrorKind::config, "duplicate anchor for label '" + label + "'");
    for (const auto& [l, a] : by_label_)
      require(a != anchor, ErrorKind::config, "labels '" + l + "' and '" + label + "' map to the same anchor");
    by_label_.emplace(label, anchor);
  }

  std::size_t size() const { return by_label_.size(); }
  bool has_label(const std::string& label) const { return by_label_.count(label) != 0; }

  const std::string& anchor(const std::string& label) const {
    const auto it = by_label_.find(label);
    if (it == by_label_.end()) fail(ErrorKind::input, "label '" + label + "' has no anchor");
    return it->second;
  }

  /// Anchors ordered by label.
  std::vector<std::string> anchors() const {
    std::vector<std::string> out;
    for (const auto& [l, a] : by_label_) out.push_back(a);
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return by_label_; }

  /// `label<TAB>anchor` per line.
  void write(std::ostream& out) const {
    for (const auto& [l, a] : by_label_) out << l << '\t' << a << '\n';
  }

  static AnchorSet read(std::istream& in) {
    AnchorSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        fail(ErrorKind::input, "anchors line " + std::to_string(lineno) + ": expected label<TAB>anchor");
      set.add(line.substr(0, tab), line.substr(tab + 1));
    }
    return set;
  }

 private:
  std::map<std::string, std::string> by_label_;
};

/// ceil(log2(doc_len) / 2), at least 1. Evaluated in integers: the result is
/// the smallest k >= 1 with 4^k >= doc_len.
inline std::size_t infusion_frequency(std::size_t doc_len) {
  require(doc_len >= 1, ErrorKind::input, "infusion_frequency: document length must be positive");
  std::size_t k = 1;
  unsigned __int128 power = 4;
  while (power < doc_len) {
    power *= 4;
    ++k;
  }
  return k;
}

/// Number of anchors placed into a document of the given length: one anchor per
/// gap, and there are doc_len + 1 gaps.
inline std::size_t anchor_count(std::size_t doc_len) { return std::min(infusion_frequency(doc_len), doc_len + 1); }

/// Inserts `anchor` into distinct gaps of the token sequence. Gaps are sampled
/// without replacement, so no two copies are ever adjacent.
inline Document infuse_document(const Document& doc, const std::string& anchor, Rng& rng) {
  const std::size_t len = doc.tokens.size();
  require(len >= 1, ErrorKind::input, "cannot infuse an empty document");
  const std::size_t k = anchor_count(len);

  // Partial Fisher-Yates over gap ids 0..len.
  std::vector<std::size_t> gaps(len + 1);
  std::iota(gaps.begin(), gaps.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(gaps[i], gaps[i + rng.index(len + 1 - i)]);
  std::vector<char> chosen(len + 1, 0);
  for (std::size_t i = 0; i < k; ++i) chosen[gaps[i]] = 1;

  Document out;
  out.label = doc.label;
  out.tokens.reserve(len + k);
  for (std::size_t g = 0; g <= len; ++g) {
    if (chosen[g]) out.tokens.push_back(anchor);
    if (g < len) out.tokens.push_back(doc.tokens[g]);
  }
  return out;
}

struct InfusionResult {
  Corpus corpus;
  std::vector<std::string> unused_anchors;  // anchors of classes with no documents
};

/// Infuses every document with its class anchor. Document i draws from an
/// independent stream derived from (seed, i).
inline InfusionResult infuse_corpus(const Corpus& corpus, const AnchorSet& anchors, std::uint64_t seed) {
  InfusionResult result;
  result.corpus.dropped = corpus.dropped;
  result.corpus.documents.reserve(corpus.size());
  std::map<std::string, std::size_t> used;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Document& doc = corpus.documents[i];
    for (const auto& tok : doc.tokens) {
      if (is_anchor_token(tok))
        fail(ErrorKind::input, "document " + std::to_string(i) + " already contains reserved anchor-like token '" +
                                   tok + "'");
    }
    const std::string& anchor = anchors.anchor(doc.label);
    Rng rng(derive_seed(seed, i));
    result.corpus.documents.push_back(infuse_document(doc, anchor, rng));
    ++used[anchor];
  }
  for (const auto& a : anchors.anchors())
    if (!used.count(a)) result.unused_anchors.push_back(a);
  return result;
}

}  // namespace semie
