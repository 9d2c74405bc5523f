#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "semie/embedding.hpp"
#include "semie/error.hpp"
#include "semie/rng.hpp"

namespace semie {

/// Sparse non-negative coding of dense embeddings:
///   min_{D,S>=0}  sum_w ||x_w - s_w D||^2 + l1 ||S||_1 + l2 ||D||_F^2,  ||d_k|| = 1
/// solved by alternating exact block minimization, so the objective never
/// increases between outer iterations.
struct SnnConfig {
  double l1 = 0.5;
  double l2 = 1e-5;
  std::size_t iters = 30;       // outer iterations
  double tolerance = 1e-4;      // stop on relative objective change below this
  double code_tolerance = 1e-6; // per-row coordinate descent
  std::size_t max_code_sweeps = 1000;
  double zero_threshold = 1e-9;
  double sparsity_floor = 0.80;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const {
    require(l1 > 0.0, ErrorKind::config, "snn: l1 must be positive");
    require(l2 >= 0.0, ErrorKind::config, "snn: l2 must be non-negative");
    require(iters >= 1, ErrorKind::config, "snn: iters must be >= 1");
    require(threads >= 1, ErrorKind::config, "snn: threads must be >= 1");
  }
};

/// K x d, unit-norm rows.
struct Dictionary {
  Eigen::MatrixXd atoms;

  std::size_t size() const { return static_cast<std::size_t>(atoms.rows()); }
};

struct SnnFit {
  Dictionary dictionary;
  SparseEmbeddingMatrix codes;
  std::vector<double> objective;  // [0] at initialization, then one entry per outer iteration
  double reconstruction_error = 0.0;  // ||X - S D||_F / ||X||_F
  double sparsity = 0.0;
  bool meets_sparsity_floor = false;
};

namespace snn_detail {

/// Non-negative lasso for one row by coordinate descent, warm-started from
/// `code`. Works on f(s) = s'Gs - 2b's + l1 sum(s) and stops once the largest
/// violation of the optimality conditions falls below tolerance * max(1, |b|).
inline void solve_code(const Eigen::MatrixXd& gram, const Eigen::VectorXd& b, double l1, double tolerance,
                       std::size_t max_sweeps, Eigen::Ref<Eigen::VectorXd> code) {
  const Eigen::Index k = code.size();
  Eigen::VectorXd grad = gram * code - b;  // (Gs - b)
  const double limit = tolerance * std::max(1.0, b.norm());
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double violation = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double gjj = gram(j, j);
      if (gjj <= 0.0) continue;
      const double slope = 2.0 * grad[j] + l1;
      violation = std::max(violation, code[j] > 0.0 ? std::abs(slope) : -slope);
      const double next = std::max(0.0, code[j] - (grad[j] + 0.5 * l1) / gjj);
      const double delta = next - code[j];
      if (delta != 0.0) {
        code[j] = next;
        grad.noalias() += delta * gram.col(j);
      }
    }
    if (violation <= limit) break;
  }
}

template <typename Fn>
void parallel_rows(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n < 2 * threads) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
}

}  // namespace snn_detail

inline double snn_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& codes, const Eigen::MatrixXd& atoms,
                            double l1, double l2) {
  return (x - codes * atoms).squaredNorm() + l1 * codes.sum() + l2 * atoms.squaredNorm();
}

/// Non-negative code of one dense row against a fitted dictionary.
inline Eigen::VectorXd encode(const Eigen::VectorXd& row, const Dictionary& dict, double l1,
                              double tolerance = 1e-6, std::size_t max_sweeps = 10000) {
  require(row.size() == dict.atoms.cols(), ErrorKind::input, "encode: row dimension does not match dictionary");
  const Eigen::MatrixXd gram = dict.atoms * dict.atoms.transpose();
  const Eigen::VectorXd b = dict.atoms * row;
  Eigen::VectorXd code = Eigen::VectorXd::Zero(dict.atoms.rows());
  snn_detail::solve_code(gram, b, l1, tolerance, max_sweeps, code);
  return code;
}

inline SnnFit fit(const EmbeddingMatrix& e, std::size_t k, const SnnConfig& cfg) {
  cfg.validate();
  const std::size_t d = e.dim();
  if (k < d) fail(ErrorKind::config, "snn: undercomplete dictionary (K=" + std::to_string(k) + " < d=" + std::to_string(d) + ")");
  require(e.rows() >= 1, ErrorKind::input, "snn: empty embedding matrix");

  const Eigen::MatrixXd x = e.values().cast<double>();
  const auto n = x.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  Rng rng(cfg.seed);

  Dictionary dict;
  dict.atoms.resize(kk, x.cols());
  for (Eigen::Index j = 0; j < kk; ++j) {
    Eigen::VectorXd atom = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)))).transpose();
    while (atom.norm() == 0.0) {
      for (Eigen::Index c = 0; c < atom.size(); ++c) atom[c] = rng.normal();
    }
    dict.atoms.row(j) = atom.normalized().transpose();
  }

  Eigen::MatrixXd codes = Eigen::MatrixXd::Zero(n, kk);
  SnnFit result;
  result.objective.push_back(snn_objective(x, codes, dict.atoms, cfg.l1, cfg.l2));

  for (std::size_t iter = 0; iter < cfg.iters; ++iter) {
    // Codes: independent per-row problems.
    const Eigen::MatrixXd gram = dict.atoms * dict.atoms.transpose();
    const Eigen::MatrixXd rhs = dict.atoms * x.transpose();  // K x n
    Eigen::MatrixXd codes_t = codes.transpose();            // column per row
    snn_detail::parallel_rows(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t i) {
      const auto col = static_cast<Eigen::Index>(i);
      snn_detail::solve_code(gram, rhs.col(col), cfg.l1, cfg.code_tolerance, cfg.max_code_sweeps, codes_t.col(col));
    });
    codes = codes_t.transpose();

    // Dictionary: exact minimization over each unit-norm atom in turn.
    const Eigen::MatrixXd ss = codes.transpose() * codes;  // K x K
    const Eigen::MatrixXd sx = codes.transpose() * x;      // K x d
    for (Eigen::Index j = 0; j < kk; ++j) {
      if (ss(j, j) <= 0.0) continue;  // unused atom does not enter the objective
      Eigen::RowVectorXd u = sx.row(j) - ss.row(j) * dict.atoms + ss(j, j) * dict.atoms.row(j);
      const double norm = u.norm();
      if (norm > 0.0) dict.atoms.row(j) = u / norm;
    }

    const double obj = snn_objective(x, codes, dict.atoms, cfg.l1, cfg.l2);
    if (!std::isfinite(obj)) fail(ErrorKind::numerical, "snn: non-finite objective at iteration " + std::to_string(iter + 1));
    const double prev = result.objective.back();
    if (obj > prev + 1e-9 * std::max(1.0, std::abs(prev))) {
      fail(ErrorKind::internal, "snn: objective increased at iteration " + std::to_string(iter + 1) + " (" +
                                    std::to_string(prev) + " -> " + std::to_string(obj) + ")");
    }
    result.objective.push_back(obj);
    if (std::abs(prev - obj) < cfg.tolerance * std::max(std::abs(prev), 1e-300)) break;
  }

  codes = codes.unaryExpr([&](double v) { return v < cfg.zero_threshold ? 0.0 : v; });
  const double xnorm = x.norm();
  result.reconstruction_error = xnorm > 0.0 ? (x - codes * dict.atoms).norm() / xnorm : 0.0;
  result.dictionary = std::move(dict);
  result.codes = SparseEmbeddingMatrix(EmbeddingMatrix(e.tokens(), codes.cast<float>()));
  result.sparsity = result.codes.sparsity();
  result.meets_sparsity_floor = result.sparsity >= cfg.sparsity_floor;
  return result;
}

}  // namespace semie
