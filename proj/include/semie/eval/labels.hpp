#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "semie/corpus.hpp"
#include "semie/embedding.hpp"
#include "semie/error.hpp"
#include "semie/infusion.hpp"

namespace semie {

inline constexpr const char* kUnlabeled = "unlabeled";

struct DimensionLabel {
  std::size_t dimension = 0;
  std::string label;  // top-ranked anchor, or "unlabeled"
  double label_value = 0.0;
  std::vector<std::string> top_words;
};

namespace detail {

inline std::vector<std::size_t> anchor_row_ids(const EmbeddingMatrix& m, const std::vector<std::string>& anchors) {
  std::vector<std::size_t> rows;
  for (const auto& a : anchors) {
    const auto r = m.row_of(a);
    if (!r) fail(ErrorKind::input, "matrix has no row for anchor '" + a + "'");
    rows.push_back(*r);
  }
  return rows;
}

/// Non-anchor rows with a non-zero value in column c, by descending value then row id.
inline std::vector<std::size_t> top_rows(const EmbeddingMatrix& m, Eigen::Index c, std::size_t top_k,
                                         double above = 0.0, bool require_above = false) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (m.is_anchor_row(r)) continue;
    const float x = m.values()(static_cast<Eigen::Index>(r), c);
    if (require_above ? static_cast<double>(x) > above : x != 0.0f) rows.push_back(r);
  }
  const auto value = [&](std::size_t r) { return m.values()(static_cast<Eigen::Index>(r), c); };
  const std::size_t keep = std::min(top_k, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end(),
                    [&](std::size_t a, std::size_t b) { return value(a) != value(b) ? value(a) > value(b) : a < b; });
  rows.resize(keep);
  return rows;
}

}  // namespace detail

/// Labels every dimension with its highest-valued anchor and lists its top_k
/// non-anchor words. Dimensions where every anchor is zero stay unlabeled.
inline std::vector<DimensionLabel> label_dimensions(const EmbeddingMatrix& m, const AnchorSet& anchors,
                                                    std::size_t top_k) {
  const auto anchor_names = anchors.anchors();
  const auto anchor_rows = detail::anchor_row_ids(m, anchor_names);
  std::vector<DimensionLabel> out;
  out.reserve(m.dim());
  for (std::size_t d = 0; d < m.dim(); ++d) {
    const auto c = static_cast<Eigen::Index>(d);
    DimensionLabel lab;
    lab.dimension = d;
    lab.label = kUnlabeled;
    bool any_active = false;
    for (std::size_t i = 0; i < anchor_rows.size(); ++i) {
      const double x = m.values()(static_cast<Eigen::Index>(anchor_rows[i]), c);
      if (x != 0.0 && (!any_active || x > lab.label_value)) {
        any_active = true;
        lab.label = anchor_names[i];
        lab.label_value = x;
      }
    }
    for (std::size_t r : detail::top_rows(m, c, top_k)) lab.top_words.push_back(m.token(r));
    out.push_back(std::move(lab));
  }
  return out;
}

inline std::vector<DimensionLabel> label_dimensions(const SparseEmbeddingMatrix& s, const AnchorSet& anchors,
                                                    std::size_t top_k) {
  return label_dimensions(s.matrix(), anchors, top_k);
}

/// `dimension<TAB>label<TAB>word,word,...`
inline void write_labels(std::ostream& out, const std::vector<DimensionLabel>& labels) {
  for (const auto& l : labels) {
    out << l.dimension << '\t' << l.label << '\t';
    for (std::size_t i = 0; i < l.top_words.size(); ++i) out << (i ? "," : "") << l.top_words[i];
    out << '\n';
  }
}

enum class TripleKind { discriminative, non_discriminative };

struct Triple {
  std::string concept1;
  std::string concept2;
  std::string feature;
  TripleKind kind = TripleKind::discriminative;
  std::size_t dimension = 0;
  double value = 0.0;
};

struct TripleReport {
  std::string anchor1;
  std::string anchor2;
  std::vector<Triple> discriminative;
  std::vector<Triple> non_discriminative;
  std::vector<std::size_t> one_active;   // dimensions where exactly one anchor is active
  std::vector<std::size_t> both_active;
  std::vector<std::size_t> none_active;
};

/// Splits dimensions by which of the two anchors is active (value > eps).
/// One active: its top_k words are discriminative features of that anchor's
/// concept. Both active: shared, non-discriminative features. A feature seen in
/// several dimensions keeps its highest value.
inline TripleReport extract_triples(const EmbeddingMatrix& m, const std::string& a1, const std::string& a2, double eps,
                                    std::size_t top_k) {
  if (a1 == a2) fail(ErrorKind::input, "extract_triples: the two anchors must differ");
  require(eps >= 0.0, ErrorKind::config, "extract_triples: eps must be non-negative");
  const auto rows = detail::anchor_row_ids(m, {a1, a2});
  TripleReport rep;
  rep.anchor1 = a1;
  rep.anchor2 = a2;
  const std::string c1 = concept_name(a1);
  const std::string c2 = concept_name(a2);

  std::map<std::pair<std::string, std::string>, Triple> disc;  // (concept1, feature)
  std::map<std::string, Triple> nondisc;
  const auto keep_max = [](auto& table, const auto& key, Triple t) {
    auto it = table.find(key);
    if (it == table.end()) {
      table.emplace(key, std::move(t));
    } else if (t.value > it->second.value) {
      it->second = std::move(t);
    }
  };

  for (std::size_t d = 0; d < m.dim(); ++d) {
    const auto c = static_cast<Eigen::Index>(d);
    const bool on1 = m.values()(static_cast<Eigen::Index>(rows[0]), c) > eps;
    const bool on2 = m.values()(static_cast<Eigen::Index>(rows[1]), c) > eps;
    if (!on1 && !on2) {
      rep.none_active.push_back(d);
      continue;
    }
    (on1 && on2 ? rep.both_active : rep.one_active).push_back(d);
    for (std::size_t r : detail::top_rows(m, c, top_k, eps, true)) {
      Triple t;
      t.feature = m.token(r);
      t.dimension = d;
      t.value = m.values()(static_cast<Eigen::Index>(r), c);
      if (on1 && on2) {
        t.concept1 = c1;
        t.concept2 = c2;
        t.kind = TripleKind::non_discriminative;
        auto key = t.feature;
        keep_max(nondisc, key, std::move(t));
      } else {
        t.concept1 = on1 ? c1 : c2;
        t.concept2 = on1 ? c2 : c1;
        auto key = std::make_pair(t.concept1, t.feature);
        keep_max(disc, key, std::move(t));
      }
    }
  }

  const auto by_value = [](const Triple& a, const Triple& b) {
    return a.value != b.value ? a.value > b.value : std::tie(a.concept1, a.feature) < std::tie(b.concept1, b.feature);
  };
  for (auto& [k, t] : disc) rep.discriminative.push_back(std::move(t));
  for (auto& [k, t] : nondisc) rep.non_discriminative.push_back(std::move(t));
  std::sort(rep.discriminative.begin(), rep.discriminative.end(), by_value);
  std::sort(rep.non_discriminative.begin(), rep.non_discriminative.end(), by_value);
  return rep;
}

inline TripleReport extract_triples(const SparseEmbeddingMatrix& s, const std::string& a1, const std::string& a2,
                                    double eps, std::size_t top_k) {
  return extract_triples(s.matrix(), a1, a2, eps, top_k);
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace detail

/// CSV: concept1,concept2,feature,kind,dimension,value
inline void write_triples_header(std::ostream& out) { out << "concept1,concept2,feature,kind,dimension,value\n"; }

inline void write_triples(std::ostream& out, const TripleReport& rep) {
  const auto row = [&](const Triple& t) {
    out << detail::csv_field(t.concept1) << ',' << detail::csv_field(t.concept2) << ',' << detail::csv_field(t.feature)
        << ',' << (t.kind == TripleKind::discriminative ? "disc" : "nondisc") << ',' << t.dimension << ',';
    detail::put_float(out, static_cast<float>(t.value));
    out << '\n';
  };
  for (const auto& t : rep.discriminative) row(t);
  for (const auto& t : rep.non_discriminative) row(t);
}

}  // namespace semie
