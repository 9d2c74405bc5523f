#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "semie/corpus.hpp"
#include "semie/error.hpp"
#include "semie/rng.hpp"
#include "semie/sgns.hpp"

namespace semie {

// ---------------------------------------------------------------------------
// PIP loss

/// Squared Frobenius norm of E E^T - Ehat Ehat^T, evaluated through the small
/// Gram matrices so the n x n products are never formed.
template <typename A, typename B>
double pip_loss_squared(const Eigen::MatrixBase<A>& e, const Eigen::MatrixBase<B>& ehat) {
  require(e.rows() == ehat.rows(), ErrorKind::input, "pip_loss: row count mismatch");
  const Eigen::MatrixXd E = e.template cast<double>();
  const Eigen::MatrixXd H = ehat.template cast<double>();
  const double a = (E.transpose() * E).squaredNorm();
  const double b = (H.transpose() * H).squaredNorm();
  const double c = (E.transpose() * H).squaredNorm();
  return std::max(0.0, a + b - 2.0 * c);
}

template <typename A, typename B>
double pip_loss(const Eigen::MatrixBase<A>& e, const Eigen::MatrixBase<B>& ehat) {
  return std::sqrt(pip_loss_squared(e, ehat));
}

// ---------------------------------------------------------------------------
// Signal matrix

/// Positive PMI of a symmetric co-occurrence matrix:
///   max(0, log(X_ij * total / (row_i * col_j))) for X_ij > 0.
inline Eigen::SparseMatrix<double> signal_matrix(const Eigen::SparseMatrix<double>& cooc) {
  require(cooc.rows() == cooc.cols(), ErrorKind::input, "signal_matrix: co-occurrence matrix must be square");
  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(cooc.rows());
  Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(cooc.cols());
  double total = 0;
  for (Eigen::Index k = 0; k < cooc.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(cooc, k); it; ++it) {
      require(it.value() >= 0.0, ErrorKind::input, "signal_matrix: negative co-occurrence count");
      row_sum[it.row()] += it.value();
      col_sum[it.col()] += it.value();
      total += it.value();
    }
  }
  if (!(total > 0.0)) fail(ErrorKind::numerical, "signal_matrix: co-occurrence matrix is all zero");
  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index k = 0; k < cooc.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(cooc, k); it; ++it) {
      if (it.value() <= 0.0) continue;
      const double pmi = std::log(it.value() * total / (row_sum[it.row()] * col_sum[it.col()]));
      if (pmi > 0.0) triplets.emplace_back(it.row(), it.col(), pmi);
    }
  }
  Eigen::SparseMatrix<double> out(cooc.rows(), cooc.cols());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

// ---------------------------------------------------------------------------
// Truncated SVD

namespace detail {

inline Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

}  // namespace detail

/// Leading `k` singular values, descending. Uses a randomized range finder
/// with `power_iterations` subspace iterations; falls back to a dense SVD when
/// the sketch would not be smaller than the matrix.
inline std::vector<double> top_singular_values(const Eigen::SparseMatrix<double>& a, std::size_t k,
                                               std::uint64_t seed, int power_iterations = 8) {
  const auto n_small = static_cast<std::size_t>(std::min(a.rows(), a.cols()));
  k = std::min(k, n_small);
  std::vector<double> out;
  if (k == 0) return out;
  const std::size_t oversample = std::max<std::size_t>(10, k / 4);
  Eigen::VectorXd values;
  if (k + oversample >= n_small) {
    const Eigen::MatrixXd dense(a);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(dense);
    values = svd.singularValues();
  } else {
    const auto l = static_cast<Eigen::Index>(k + oversample);
    Rng rng(seed);
    Eigen::MatrixXd omega(a.cols(), l);
    for (Eigen::Index i = 0; i < omega.size(); ++i) omega.data()[i] = rng.normal();
    Eigen::MatrixXd q = detail::orthonormal_basis(a * omega);
    for (int it = 0; it < power_iterations; ++it) {
      const Eigen::MatrixXd z = detail::orthonormal_basis(a.transpose() * q);
      q = detail::orthonormal_basis(a * z);
    }
    const Eigen::MatrixXd b = q.transpose() * a;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(b);
    values = svd.singularValues();
  }
  out.assign(values.data(), values.data() + std::min<Eigen::Index>(values.size(), static_cast<Eigen::Index>(k)));
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

// ---------------------------------------------------------------------------
// Noise estimation

/// Per-entry noise scale from two independent half-sample signal matrices:
///   ||S1 - S2||_F / (2 sqrt(entries)).
template <typename A, typename B>
double noise_from_halves(const A& s1, const B& s2) {
  require(s1.rows() == s2.rows() && s1.cols() == s2.cols(), ErrorKind::input, "noise estimate: shape mismatch");
  const double entries = static_cast<double>(s1.rows()) * static_cast<double>(s1.cols());
  require(entries > 0, ErrorKind::input, "noise estimate: empty matrices");
  return (s1 - s2).norm() / (2.0 * std::sqrt(entries));
}

/// Noise scale for an explicit split: documents with in_first[i] set form the
/// first half. Both signal matrices are restricted to tokens that occur in
/// both halves.
inline double estimate_noise_split(const Corpus& corpus, const Vocab& vocab, std::size_t window,
                                   const std::vector<char>& in_first) {
  require(corpus.size() >= 2, ErrorKind::input, "noise estimate needs at least 2 documents");
  require(in_first.size() == corpus.size(), ErrorKind::internal, "split mask size mismatch");
  Corpus halves[2];
  for (std::size_t i = 0; i < corpus.size(); ++i) halves[in_first[i] ? 0 : 1].documents.push_back(corpus.documents[i]);
  require(!halves[0].empty() && !halves[1].empty(), ErrorKind::input, "noise estimate: one half is empty");

  const auto c1 = cooccurrence(halves[0], vocab, window);
  const auto c2 = cooccurrence(halves[1], vocab, window);
  std::vector<Eigen::Index> shared;
  {
    Eigen::VectorXd r1 = Eigen::VectorXd::Zero(c1.rows());
    Eigen::VectorXd r2 = Eigen::VectorXd::Zero(c2.rows());
    for (Eigen::Index k = 0; k < c1.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(c1, k); it; ++it) r1[it.row()] += it.value();
    for (Eigen::Index k = 0; k < c2.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(c2, k); it; ++it) r2[it.row()] += it.value();
    for (Eigen::Index i = 0; i < r1.size(); ++i)
      if (r1[i] > 0 && r2[i] > 0) shared.push_back(i);
  }
  if (shared.empty()) fail(ErrorKind::numerical, "noise estimate: the two halves share no vocabulary");

  const auto to_shared = [&](const Eigen::SparseMatrix<double>& s) {
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(s.rows()), -1);
    for (std::size_t i = 0; i < shared.size(); ++i) pos[static_cast<std::size_t>(shared[i])] = static_cast<Eigen::Index>(i);
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index k = 0; k < s.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(s, k); it; ++it) {
        const auto r = pos[static_cast<std::size_t>(it.row())];
        const auto c = pos[static_cast<std::size_t>(it.col())];
        if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
      }
    }
    const auto n = static_cast<Eigen::Index>(shared.size());
    Eigen::SparseMatrix<double> out(n, n);
    out.setFromTriplets(t.begin(), t.end());
    return out;
  };
  const Eigen::SparseMatrix<double> s1 = to_shared(signal_matrix(c1));
  const Eigen::SparseMatrix<double> s2 = to_shared(signal_matrix(c2));
  return noise_from_halves(s1, s2);
}

/// Noise scale from a seeded random split of the documents into halves.
inline double estimate_noise(const Corpus& corpus, const Vocab& vocab, std::size_t window, std::uint64_t seed) {
  require(corpus.size() >= 2, ErrorKind::input, "noise estimate needs at least 2 documents");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<char> in_first(corpus.size(), 0);
  for (std::size_t i = 0; i < order.size() / 2; ++i) in_first[order[i]] = 1;
  return estimate_noise_split(corpus, vocab, window, in_first);
}

// ---------------------------------------------------------------------------
// Dimension selection

struct SpectralEstimate {
  std::vector<double> singular_values;  // descending, non-negative
  double sigma = 0.0;                   // per-entry noise scale
  double alpha = 0.5;                   // embedding = U * diag(s^alpha)
  std::size_t side = 0;                 // signal matrix side length
  std::size_t k_max = 512;

  void validate() const {
    require(!singular_values.empty(), ErrorKind::input, "spectral estimate: empty spectrum");
    require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::input, "spectral estimate: sigma must be finite and >= 0");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::config, "spectral estimate: alpha must be in [0,1]");
    require(k_max >= 1, ErrorKind::config, "spectral estimate: k_max must be >= 1");
    for (std::size_t i = 0; i < singular_values.size(); ++i) {
      require(singular_values[i] >= 0.0 && std::isfinite(singular_values[i]), ErrorKind::input,
              "spectral estimate: singular values must be finite and non-negative");
      if (i) require(singular_values[i] <= singular_values[i - 1], ErrorKind::input,
                     "spectral estimate: singular values must be non-increasing");
    }
  }

  std::size_t candidates() const { return std::min(k_max, singular_values.size()); }

  /// Soft threshold at sigma * sqrt(side).
  double corrected(std::size_t i) const {
    return std::max(0.0, singular_values[i] - sigma * std::sqrt(static_cast<double>(side)));
  }
};

/// PIP loss between the embedding built from the observed spectrum truncated
/// at d and the full embedding built from the noise-corrected spectrum, both
/// sharing singular vectors:
///   loss(d)^2 = sum_{i<=d} (s_i^2a - c_i^2a)^2 + sum_{i>d} c_i^4a
/// Entry d-1 holds loss(d).
inline std::vector<double> pip_loss_curve(const SpectralEstimate& est) {
  est.validate();
  const std::size_t k = est.candidates();
  const double two_alpha = 2.0 * est.alpha;
  std::vector<double> kept(k), dropped(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double observed = std::pow(est.singular_values[i], two_alpha);
    const double clean = std::pow(est.corrected(i), two_alpha);
    kept[i] = (observed - clean) * (observed - clean);
    dropped[i] = clean * clean;
  }
  // Suffix sums accumulated backwards so the tail never suffers cancellation.
  std::vector<double> tail(k + 1, 0.0);
  for (std::size_t i = k; i-- > 0;) tail[i] = tail[i + 1] + dropped[i];
  std::vector<double> curve(k);
  double head = 0.0;
  for (std::size_t d = 1; d <= k; ++d) {
    head += kept[d - 1];
    curve[d - 1] = std::sqrt(head + tail[d]);
  }
  return curve;
}

/// argmin of pip_loss_curve. Losses within a relative 1e-7 of the minimum
/// count as ties and resolve to the smallest d.
inline std::size_t optimal_dimension(const SpectralEstimate& est) {
  const auto curve = pip_loss_curve(est);
  const double best = *std::min_element(curve.begin(), curve.end());
  const double cutoff = best * (1.0 + 1e-7) + std::numeric_limits<double>::min();
  for (std::size_t d = 1; d <= curve.size(); ++d)
    if (curve[d - 1] <= cutoff) return d;
  return curve.size();
}

struct DimensionConfig {
  std::size_t window = 5;
  double alpha = 0.5;
  std::size_t k_max = 512;
  std::uint64_t seed = 1;
};

/// Co-occurrence -> PPMI -> leading spectrum, with the noise level taken from
/// a random half split of the documents.
inline SpectralEstimate estimate_spectrum(const Corpus& corpus, const Vocab& vocab, const DimensionConfig& cfg) {
  const auto signal = signal_matrix(cooccurrence(corpus, vocab, cfg.window));
  SpectralEstimate est;
  est.alpha = cfg.alpha;
  est.k_max = std::min<std::size_t>(cfg.k_max, vocab.size());
  est.side = vocab.size();
  est.singular_values = top_singular_values(signal, est.k_max, derive_seed(cfg.seed, 0x5bd));
  est.sigma = estimate_noise(corpus, vocab, cfg.window, derive_seed(cfg.seed, 0x2a1f));
  return est;
}

}  // namespace semie
