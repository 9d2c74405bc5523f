#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semie/embedding.hpp"
#include "semie/error.hpp"
#include "semie/infusion.hpp"

namespace semie {

/// Ascending order of one column. Equal values are ordered by row id.
struct ColumnRanking {
  std::vector<std::size_t> order;  // order[r] = row holding rank r
  std::vector<std::size_t> rank;   // rank[row]
};

template <typename Derived>
ColumnRanking column_ranks(const Eigen::DenseBase<Derived>& column) {
  const auto n = static_cast<std::size_t>(column.size());
  for (Eigen::Index i = 0; i < column.size(); ++i)
    require(!std::isnan(static_cast<double>(column(i))), ErrorKind::input, "column_ranks: NaN in column");
  ColumnRanking out;
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    return column(static_cast<Eigen::Index>(a)) < column(static_cast<Eigen::Index>(b));
  });
  out.rank.resize(n);
  for (std::size_t r = 0; r < n; ++r) out.rank[out.order[r]] = r;
  return out;
}

/// anchor_value / |anchor_rank - word_rank|
inline double semantic_weight(double anchor_value, std::size_t anchor_rank, std::size_t word_rank) {
  if (anchor_rank == word_rank) fail(ErrorKind::internal, "semantic_weight: anchor and word share a rank");
  const std::size_t distance = anchor_rank > word_rank ? anchor_rank - word_rank : word_rank - anchor_rank;
  return anchor_value / static_cast<double>(distance);
}

enum class AnchorAggregation {
  sum,      // every anchor contributes
  nearest,  // only the anchor closest in rank; ties go to the earlier anchor
};

/// For every column, ranks the rows once and adds to each non-anchor row the
/// semantic weight of each anchor. Anchor rows are copied unchanged.
template <typename Derived>
typename Derived::PlainObject infuse_semantics(const Eigen::MatrixBase<Derived>& e,
                                               std::span<const std::size_t> anchor_rows,
                                               AnchorAggregation aggregation = AnchorAggregation::sum) {
  using Plain = typename Derived::PlainObject;
  using Scalar = typename Derived::Scalar;
  const auto n = static_cast<std::size_t>(e.rows());
  std::vector<char> is_anchor(n, 0);
  for (std::size_t a : anchor_rows) {
    require(a < n, ErrorKind::input, "infuse_semantics: anchor row out of range");
    require(!is_anchor[a], ErrorKind::input, "infuse_semantics: duplicate anchor row");
    is_anchor[a] = 1;
  }

  Plain out = e;
  for (Eigen::Index c = 0; c < e.cols(); ++c) {
    const ColumnRanking ranking = column_ranks(e.col(c));
    for (std::size_t w = 0; w < n; ++w) {
      if (is_anchor[w]) continue;
      const std::size_t word_rank = ranking.rank[w];
      double value = static_cast<double>(e(static_cast<Eigen::Index>(w), c));
      if (aggregation == AnchorAggregation::sum) {
        for (std::size_t a : anchor_rows)
          value += semantic_weight(static_cast<double>(e(static_cast<Eigen::Index>(a), c)), ranking.rank[a], word_rank);
      } else if (!anchor_rows.empty()) {
        std::size_t best = anchor_rows[0];
        std::size_t best_gap = n;
        for (std::size_t a : anchor_rows) {
          const std::size_t ar = ranking.rank[a];
          const std::size_t gap = ar > word_rank ? ar - word_rank : word_rank - ar;
          if (gap < best_gap) {
            best_gap = gap;
            best = a;
          }
        }
        value += semantic_weight(static_cast<double>(e(static_cast<Eigen::Index>(best), c)), ranking.rank[best], word_rank);
      }
      out(static_cast<Eigen::Index>(w), c) = static_cast<Scalar>(value);
    }
  }
  return out;
}

/// Token-bound variant: every anchor of `anchors` must have a row in `e`.
inline EmbeddingMatrix infuse_semantics(const EmbeddingMatrix& e, const AnchorSet& anchors,
                                        AnchorAggregation aggregation = AnchorAggregation::sum) {
  std::vector<std::size_t> rows;
  for (const auto& a : anchors.anchors()) {
    const auto r = e.row_of(a);
    if (!r) fail(ErrorKind::input, "infuse_semantics: embedding has no row for anchor '" + a + "'");
    rows.push_back(*r);
  }
  return EmbeddingMatrix(e.tokens(), infuse_semantics(e.values(), rows, aggregation));
}

}  // namespace semie
