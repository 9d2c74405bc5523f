#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "semie/embedding.hpp"
#include "semie/error.hpp"
#include "semie/rng.hpp"

namespace semie {

/// Four top-ranked words of one dimension plus an intruder, in shuffled order.
struct IntrusionTest {
  std::size_t dimension = 0;
  std::array<std::string, 4> top_words;
  std::string intruder;
  std::array<std::string, 5> options;
  std::size_t answer = 0;  // index of the intruder in options

  nlohmann::json to_json(bool blind) const {
    nlohmann::json j{{"dim", dimension}, {"options", options}};
    if (!blind) j["answer"] = intruder;
    return j;
  }
};

struct IntrusionOptions {
  /// Rank only the non-zero entries of a dimension when picking the bottom
  /// half. Intended for sparse non-negative matrices, where zeros dominate.
  bool nonzero_ranking = false;
  double top_fraction = 0.1;
};

struct IntrusionBatch {
  std::vector<IntrusionTest> tests;
  std::vector<std::size_t> skipped_dimensions;  // no valid top-4 or no eligible intruder
};

/// Generates one test per sampled dimension. Anchor rows are removed first.
///
/// A word is in the top fraction of a dimension when fewer than
/// ceil(top_fraction * rows) rows hold a strictly larger value and its value is
/// above the dimension's minimum. It is in the bottom half of a dimension's
/// ranked list L when at least ceil(|L|/2) members of L hold a strictly larger
/// value.
inline IntrusionBatch generate_intrusion_tests(const EmbeddingMatrix& input, std::size_t n_dims, std::uint64_t seed,
                                               const IntrusionOptions& opt = {}) {
  const EmbeddingMatrix m = input.without_anchors();
  const auto n = static_cast<Eigen::Index>(m.rows());
  const auto k = static_cast<Eigen::Index>(m.dim());
  require(k >= 2, ErrorKind::input, "intrusion tests need at least 2 dimensions");
  require(n >= 5, ErrorKind::input, "intrusion tests need at least 5 non-anchor words");
  const Eigen::MatrixXf& v = m.values();

  // Per dimension: value threshold for the top fraction and the column minimum.
  const auto cutoff = static_cast<Eigen::Index>(std::ceil(opt.top_fraction * static_cast<double>(n)));
  std::vector<float> top_threshold(static_cast<std::size_t>(k));
  std::vector<float> col_min(static_cast<std::size_t>(k));
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<float> col(v.col(c).data(), v.col(c).data() + n);
    std::nth_element(col.begin(), col.begin() + (cutoff - 1), col.end(), std::greater<>());
    top_threshold[static_cast<std::size_t>(c)] = col[static_cast<std::size_t>(cutoff - 1)];
    col_min[static_cast<std::size_t>(c)] = v.col(c).minCoeff();
  }
  // top_count[r] = number of dimensions in whose top fraction row r sits.
  std::vector<std::size_t> top_count(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<char>> in_top(static_cast<std::size_t>(k), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const float x = v(r, c);
      if (x >= top_threshold[static_cast<std::size_t>(c)] && x > col_min[static_cast<std::size_t>(c)]) {
        in_top[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = 1;
        ++top_count[static_cast<std::size_t>(r)];
      }
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> dims(static_cast<std::size_t>(k));
  std::iota(dims.begin(), dims.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(dims));
  dims.resize(std::min<std::size_t>(n_dims, dims.size()));
  std::sort(dims.begin(), dims.end());

  IntrusionBatch batch;
  for (std::size_t dim : dims) {
    const auto c = static_cast<Eigen::Index>(dim);
    std::vector<std::size_t> list;
    for (Eigen::Index r = 0; r < n; ++r)
      if (!opt.nonzero_ranking || v(r, c) != 0.0f) list.push_back(static_cast<std::size_t>(r));
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return v(static_cast<Eigen::Index>(a), c) > v(static_cast<Eigen::Index>(b), c);
    });
    if (list.size() < 5 || v(static_cast<Eigen::Index>(list.front()), c) == v(static_cast<Eigen::Index>(list.back()), c)) {
      batch.skipped_dimensions.push_back(dim);
      continue;
    }
    // Bottom half: positions whose value is beaten by at least ceil(|L|/2) entries.
    const std::size_t need = (list.size() + 1) / 2;
    std::vector<std::size_t> eligible;
    for (std::size_t pos = need; pos < list.size(); ++pos) {
      const std::size_t r = list[pos];
      const float x = v(static_cast<Eigen::Index>(r), c);
      // First position holding x gives the number of strictly larger entries.
      std::size_t first = pos;
      while (first > 0 && v(static_cast<Eigen::Index>(list[first - 1]), c) == x) --first;
      if (first < need) continue;
      const std::size_t elsewhere = top_count[r] - (in_top[dim][r] ? 1 : 0);
      if (elsewhere > 0) eligible.push_back(r);
    }
    if (eligible.empty()) {
      batch.skipped_dimensions.push_back(dim);
      continue;
    }
    IntrusionTest t;
    t.dimension = dim;
    for (std::size_t i = 0; i < 4; ++i) t.top_words[i] = m.token(list[i]);
    t.intruder = m.token(eligible[rng.index(eligible.size())]);
    std::array<std::size_t, 5> perm{0, 1, 2, 3, 4};
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t i = 0; i < 5; ++i) {
      t.options[i] = perm[i] < 4 ? t.top_words[perm[i]] : t.intruder;
      if (perm[i] == 4) t.answer = i;
    }
    batch.tests.push_back(std::move(t));
  }
  if (batch.tests.empty()) fail(ErrorKind::numerical, "intrusion tests: no eligible dimension");
  return batch;
}

struct Judgement {
  std::size_t predicted = 0;  // index into options
  bool correct = false;
};

/// Predicts the option with the lowest mean cosine similarity to the other
/// four in a reference space. Ties resolve to the earliest option.
inline Judgement auto_judge(const IntrusionTest& test, const EmbeddingMatrix& reference) {
  std::array<Eigen::VectorXd, 5> vecs;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto row = reference.row_of(test.options[i]);
    if (!row) fail(ErrorKind::input, "auto_judge: word '" + test.options[i] + "' missing from reference embeddings");
    vecs[i] = reference.values().row(static_cast<Eigen::Index>(*row)).cast<double>().transpose();
  }
  const auto cosine = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double denom = a.norm() * b.norm();
    return denom > 0.0 ? a.dot(b) / denom : 0.0;
  };
  Judgement j;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t o = 0; o < 5; ++o)
      if (o != i) s += cosine(vecs[i], vecs[o]);
    s /= 4.0;
    if (s < best) {
      best = s;
      j.predicted = i;
    }
  }
  j.correct = j.predicted == test.answer;
  return j;
}

/// Mean correctness of auto_judge over a test set.
inline double proxy_precision(const std::vector<IntrusionTest>& tests, const EmbeddingMatrix& reference) {
  if (tests.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& t : tests) hits += auto_judge(t, reference).correct ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(tests.size());
}

}  // namespace semie
