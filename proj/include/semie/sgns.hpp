#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "semie/corpus.hpp"
#include "semie/embedding.hpp"
#include "semie/error.hpp"
#include "semie/rng.hpp"

namespace semie {

struct TrainConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;  // decays linearly to 1e-4 of its start value
  double subsample = 1e-3;       // 0 disables subsampling
  double holdout_fraction = 0.01;
  std::uint64_t seed = 1;
  std::size_t threads = 1;  // 1 = deterministic

  void validate() const {
    require(dim >= 1, ErrorKind::config, "dim must be >= 1");
    require(window >= 1, ErrorKind::config, "window must be >= 1");
    require(negatives >= 1, ErrorKind::config, "negatives must be >= 1");
    require(epochs >= 1, ErrorKind::config, "epochs must be >= 1");
    require(learning_rate > 0.0, ErrorKind::config, "learning rate must be positive");
    require(subsample >= 0.0, ErrorKind::config, "subsample threshold must be non-negative");
    require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, ErrorKind::config, "holdout fraction must be in [0,1)");
    require(threads >= 1, ErrorKind::config, "threads must be >= 1");
  }
};

struct TrainResult {
  EmbeddingMatrix embeddings;        // input vectors, one row per vocab id
  std::vector<double> heldout_loss;  // mean objective on the held-out sample after each epoch
  std::size_t heldout_documents = 0;
};

namespace sgns {

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// -log(sigmoid(x)), stable for large |x|.
template <typename T>
T neg_log_sigmoid(T x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

/// One logistic term of the objective: label 1 for the observed context, 0 for
/// a negative sample. Returns the loss and d(loss)/d(score).
template <typename T>
std::pair<T, T> logistic_term(T score, bool positive) {
  if (positive) return {neg_log_sigmoid(score), sigmoid(score) - T(1)};
  return {neg_log_sigmoid(-score), sigmoid(score)};
}

/// Objective of one (center, context, negatives) sample:
///   -log s(u_ctx . v) - sum_n log s(-u_n . v)
template <typename In, typename Out>
typename In::Scalar sample_loss(const Eigen::MatrixBase<In>& in, const Eigen::MatrixBase<Out>& out, TokenId center,
                                TokenId context, std::span<const TokenId> negatives) {
  using T = typename In::Scalar;
  T loss = logistic_term<T>(in.row(center).dot(out.row(context)), true).first;
  for (TokenId n : negatives) loss += logistic_term<T>(in.row(center).dot(out.row(n)), false).first;
  return loss;
}

/// Analytic gradient of sample_loss with respect to both parameter matrices.
template <typename T>
void sample_gradient(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& in,
                     const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& out, TokenId center, TokenId context,
                     std::span<const TokenId> negatives, Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& grad_in,
                     Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& grad_out) {
  grad_in.setZero(in.rows(), in.cols());
  grad_out.setZero(out.rows(), out.cols());
  const auto term = [&](TokenId target, bool positive) {
    const T g = logistic_term<T>(in.row(center).dot(out.row(target)), positive).second;
    grad_in.row(center) += g * out.row(target);
    grad_out.row(target) += g * in.row(center);
  };
  term(context, true);
  for (TokenId n : negatives) term(n, false);
}

/// In-place SGD step on raw rows, the training hot path. Output rows are
/// updated as each term is visited; the center row receives the accumulated
/// gradient at the end. With distinct targets this is exactly one gradient
/// step of sample_loss. Returns the sample loss before the step.
template <typename T>
T sgd_step(T* center_row, std::span<T* const> targets, std::size_t n_positive, std::size_t dim, T lr,
           std::span<T> scratch) {
  std::fill(scratch.begin(), scratch.end(), T(0));
  T loss = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    T* u = targets[t];
    T score = 0;
    for (std::size_t k = 0; k < dim; ++k) score += center_row[k] * u[k];
    const auto [l, g] = logistic_term<T>(score, t < n_positive);
    loss += l;
    for (std::size_t k = 0; k < dim; ++k) scratch[k] += g * u[k];
    for (std::size_t k = 0; k < dim; ++k) u[k] -= lr * g * center_row[k];
  }
  for (std::size_t k = 0; k < dim; ++k) center_row[k] -= lr * scratch[k];
  return loss;
}

/// Sampler over unigram counts raised to 3/4.
class NegativeSampler {
 public:
  explicit NegativeSampler(const std::vector<std::uint64_t>& counts) {
    cumulative_.reserve(counts.size());
    double acc = 0;
    for (auto c : counts) {
      acc += std::pow(static_cast<double>(c), 0.75);
      cumulative_.push_back(acc);
    }
  }

  TokenId draw(Rng& rng) const {
    const double x = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
    return static_cast<TokenId>(std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1));
  }

 private:
  std::vector<double> cumulative_;
};

struct HeldoutSample {
  TokenId center;
  TokenId context;
  std::vector<TokenId> negatives;
};

}  // namespace sgns

/// Skip-gram with negative sampling. Anchor tokens are never subsampled.
inline TrainResult train(const Corpus& corpus, const Vocab& vocab, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.dim >= vocab.size())
    fail(ErrorKind::config, "embedding dimension " + std::to_string(cfg.dim) + " must be smaller than vocabulary size " +
                                std::to_string(vocab.size()));

  const std::size_t V = vocab.size();
  const std::size_t dim = cfg.dim;

  std::vector<std::vector<TokenId>> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus.documents) docs.push_back(vocab.encode(d.tokens));

  // Held-out documents: Bernoulli(holdout_fraction), at least one when there are two or more.
  std::vector<char> heldout(docs.size(), 0);
  std::size_t n_heldout = 0;
  if (cfg.holdout_fraction > 0.0 && docs.size() >= 2) {
    Rng pick(derive_seed(cfg.seed, 0x401d));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (pick.bernoulli(cfg.holdout_fraction)) {
        heldout[i] = 1;
        ++n_heldout;
      }
    }
    if (n_heldout == 0) {
      heldout[pick.index(docs.size())] = 1;
      n_heldout = 1;
    }
  }

  std::vector<std::size_t> train_docs;
  std::uint64_t train_words = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!heldout[i] && docs[i].size() >= 1) {
      train_docs.push_back(i);
      train_words += docs[i].size();
    }
  }

  const sgns::NegativeSampler sampler(vocab.counts());

  std::vector<double> keep_prob(V, 1.0);
  if (cfg.subsample > 0.0) {
    const double threshold = cfg.subsample * static_cast<double>(vocab.total_count());
    for (std::size_t i = 0; i < V; ++i) {
      if (vocab.is_anchor(static_cast<TokenId>(i))) continue;
      const double f = static_cast<double>(vocab.count(static_cast<TokenId>(i)));
      keep_prob[i] = std::min(1.0, (std::sqrt(f / threshold) + 1.0) * threshold / f);
    }
  }

  std::vector<sgns::HeldoutSample> heldout_samples;
  {
    Rng rng(derive_seed(cfg.seed, 0x5a3b));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (!heldout[i]) continue;
      const auto& ids = docs[i];
      for (std::size_t p = 0; p < ids.size(); ++p) {
        for (std::size_t q = p >= cfg.window ? p - cfg.window : 0; q < std::min(ids.size(), p + cfg.window + 1); ++q) {
          if (q == p) continue;
          sgns::HeldoutSample s{ids[p], ids[q], {}};
          while (s.negatives.size() < cfg.negatives) {
            const TokenId n = sampler.draw(rng);
            if (n != s.context) s.negatives.push_back(n);
          }
          heldout_samples.push_back(std::move(s));
        }
      }
    }
  }

  // Row-major so each token's vector is contiguous.
  using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMatrix in(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(dim));
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(dim));
  {
    Rng init(derive_seed(cfg.seed, 0x1417));
    const double half = 0.5 / static_cast<double>(dim);
    for (Eigen::Index r = 0; r < in.rows(); ++r)
      for (Eigen::Index c = 0; c < in.cols(); ++c) in(r, c) = static_cast<float>(init.uniform(-half, half));
  }

  TrainResult result;
  const double total_steps = static_cast<double>(cfg.epochs) * static_cast<double>(train_words) + 1.0;
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.threads, train_docs.size()));

  auto run_shard = [&](std::size_t epoch, std::size_t shard) {
    Rng rng(derive_seed(derive_seed(cfg.seed, 1000 + epoch), shard));
    std::vector<float> scratch(dim);
    std::vector<float*> targets(cfg.negatives + 1);
    std::vector<TokenId> kept;
    std::uint64_t seen = 0;
    const std::uint64_t base = static_cast<std::uint64_t>(epoch) * train_words;
    for (std::size_t k = shard; k < train_docs.size(); k += n_threads) {
      const auto& ids = docs[train_docs[k]];
      kept.clear();
      for (TokenId id : ids)
        if (keep_prob[id] >= 1.0 || rng.uniform() < keep_prob[id]) kept.push_back(id);
      seen += ids.size();
      const double progress = static_cast<double>(base + seen * n_threads) / total_steps;
      const float lr = static_cast<float>(cfg.learning_rate * std::max(1e-4, 1.0 - progress));
      for (std::size_t p = 0; p < kept.size(); ++p) {
        const std::size_t reach = cfg.window - rng.index(cfg.window);
        const std::size_t lo = p >= reach ? p - reach : 0;
        const std::size_t hi = std::min(kept.size(), p + reach + 1);
        for (std::size_t q = lo; q < hi; ++q) {
          if (q == p) continue;
          const TokenId context = kept[q];
          targets[0] = out.row(context).data();
          std::size_t n = 1;
          for (std::size_t j = 0; j < cfg.negatives; ++j) {
            const TokenId neg = sampler.draw(rng);
            if (neg == context) continue;
            targets[n++] = out.row(neg).data();
          }
          sgns::sgd_step<float>(in.row(kept[p]).data(), std::span<float* const>(targets.data(), n), 1, dim, lr,
                                scratch);
        }
      }
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (n_threads == 1) {
      run_shard(epoch, 0);
    } else {
      // Lock-free shared updates across workers.
      std::vector<std::jthread> workers;
      for (std::size_t t = 0; t < n_threads; ++t) workers.emplace_back(run_shard, epoch, t);
    }
    if (!heldout_samples.empty()) {
      double loss = 0;
      for (const auto& s : heldout_samples) loss += sgns::sample_loss(in, out, s.center, s.context, s.negatives);
      result.heldout_loss.push_back(loss / static_cast<double>(heldout_samples.size()));
    }
    require(in.allFinite(), ErrorKind::numerical, "SGNS diverged: non-finite embedding after epoch " +
                                                      std::to_string(epoch + 1));
  }

  result.heldout_documents = n_heldout;
  result.embeddings = EmbeddingMatrix(vocab.tokens(), Eigen::MatrixXf(in));
  return result;
}

/// Symmetric co-occurrence counts within `window`, each pair weighted by
/// 1/offset. Out-of-vocabulary tokens are removed before windowing.
inline Eigen::SparseMatrix<double> cooccurrence(const Corpus& corpus, const Vocab& vocab, std::size_t window) {
  require(window >= 1, ErrorKind::config, "window must be >= 1");
  std::vector<Eigen::Triplet<double>> triplets;
  for (const auto& doc : corpus.documents) {
    const auto ids = vocab.encode(doc.tokens);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      for (std::size_t off = 1; off <= window && p + off < ids.size(); ++off) {
        const double w = 1.0 / static_cast<double>(off);
        triplets.emplace_back(ids[p], ids[p + off], w);
        triplets.emplace_back(ids[p + off], ids[p], w);
      }
    }
  }
  const auto V = static_cast<Eigen::Index>(vocab.size());
  Eigen::SparseMatrix<double> m(V, V);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace semie
