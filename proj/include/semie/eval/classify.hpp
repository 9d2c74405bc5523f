#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "semie/corpus.hpp"
#include "semie/embedding.hpp"
#include "semie/error.hpp"
#include "semie/rng.hpp"

namespace semie {

/// Unweighted mean of the vectors of in-vocabulary token occurrences. Empty
/// when no token of the document has a row.
inline std::optional<Eigen::VectorXd> doc_vector(const Document& doc, const EmbeddingMatrix& e) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(e.dim()));
  std::size_t n = 0;
  for (const auto& tok : doc.tokens) {
    if (const auto row = e.row_of(tok)) {
      sum += e.values().row(static_cast<Eigen::Index>(*row)).cast<double>().transpose();
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

struct ClassifierConfig {
  std::size_t epochs = 50;
  double l2 = 1e-4;
  double learning_rate = 0.1;  // eta_t = eta0 / (1 + eta0 * l2 * t)
};

/// One-vs-rest linear hinge-loss classifier over standardized features.
struct ClassifierModel {
  Eigen::MatrixXd weights;  // classes x dim
  Eigen::VectorXd bias;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  std::size_t predict(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = ((x - mean).array() / scale.array()).matrix();
    Eigen::Index best = 0;
    (weights * z + bias).maxCoeff(&best);
    return static_cast<std::size_t>(best);
  }
};

/// Stochastic subgradient descent on the l2-regularized hinge loss, one
/// binary problem per class.
inline ClassifierModel train_classifier(const std::vector<Eigen::VectorXd>& xs, const std::vector<std::size_t>& ys,
                                        std::size_t n_classes, const ClassifierConfig& cfg, std::uint64_t seed) {
  require(!xs.empty() && xs.size() == ys.size(), ErrorKind::input, "classifier: empty or mismatched training set");
  require(n_classes >= 2, ErrorKind::input, "classifier: need at least 2 classes");
  const Eigen::Index dim = xs.front().size();
  ClassifierModel model;
  model.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& x : xs) model.mean += x;
  model.mean /= static_cast<double>(xs.size());
  model.scale = Eigen::VectorXd::Zero(dim);
  for (const auto& x : xs) model.scale += (x - model.mean).cwiseAbs2();
  model.scale = (model.scale / static_cast<double>(xs.size())).cwiseSqrt();
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(model.scale[i] > 1e-12)) model.scale[i] = 1.0;

  std::vector<Eigen::VectorXd> zs;
  zs.reserve(xs.size());
  for (const auto& x : xs) zs.push_back(((x - model.mean).array() / model.scale.array()).matrix());

  model.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_classes), dim);
  model.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_classes));
  std::vector<std::size_t> order(zs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  double t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const double eta = cfg.learning_rate / (1.0 + cfg.learning_rate * cfg.l2 * t);
      t += 1.0;
      for (std::size_t c = 0; c < n_classes; ++c) {
        const auto ci = static_cast<Eigen::Index>(c);
        const double y = ys[i] == c ? 1.0 : -1.0;
        const double margin = y * (model.weights.row(ci).dot(zs[i]) + model.bias[ci]);
        model.weights.row(ci) *= (1.0 - eta * cfg.l2);
        if (margin < 1.0) {
          model.weights.row(ci) += eta * y * zs[i].transpose();
          model.bias[ci] += eta * y;
        }
      }
    }
  }
  return model;
}

struct ClassificationReport {
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t per_class_train = 0;
  std::size_t per_class_test = 0;
  bool scaled_down = false;
  std::size_t excluded_documents = 0;  // no in-vocabulary tokens
  std::map<std::string, double> per_class_accuracy;
  double accuracy = 0.0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"train_size", train_size},
                          {"test_size", test_size},
                          {"per_class_train", per_class_train},
                          {"per_class_test", per_class_test},
                          {"scaled_down", scaled_down},
                          {"excluded_documents", excluded_documents},
                          {"per_class_accuracy", per_class_accuracy},
                          {"accuracy", accuracy}};
  }
};

/// Balanced train/test split per class, averaged-vector features, combined
/// test accuracy. Classes short of per_class_train + per_class_test documents
/// shrink both sizes by a common factor. `e` must not contain anchor rows.
inline ClassificationReport train_eval_classifier(const EmbeddingMatrix& e, const Corpus& corpus,
                                                  std::size_t per_class_train, std::size_t per_class_test,
                                                  std::uint64_t seed, const ClassifierConfig& cfg = {}) {
  require(e.anchor_rows().empty(), ErrorKind::input, "classifier: remove anchor rows before classification");
  require(per_class_train >= 1 && per_class_test >= 1, ErrorKind::config, "classifier: split sizes must be positive");
  const auto labels = corpus.labels();
  if (labels.size() < 2) fail(ErrorKind::input, "classifier: fewer than 2 classes");

  ClassificationReport report;
  std::map<std::string, std::size_t> class_of;
  for (std::size_t i = 0; i < labels.size(); ++i) class_of[labels[i]] = i;
  std::vector<std::vector<Eigen::VectorXd>> by_class(labels.size());
  for (const auto& doc : corpus.documents) {
    if (auto v = doc_vector(doc, e)) {
      by_class[class_of[doc.label]].push_back(std::move(*v));
    } else {
      ++report.excluded_documents;
    }
  }

  std::size_t smallest = by_class.front().size();
  for (const auto& c : by_class) smallest = std::min(smallest, c.size());
  std::size_t n_train = per_class_train;
  std::size_t n_test = per_class_test;
  if (smallest < n_train + n_test) {
    require(smallest >= 2, ErrorKind::input, "classifier: a class has fewer than 2 usable documents");
    const double factor = static_cast<double>(smallest) / static_cast<double>(n_train + n_test);
    n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(n_train) * factor)));
    n_test = std::max<std::size_t>(1, std::min(smallest - n_train,
                                               static_cast<std::size_t>(std::floor(static_cast<double>(n_test) * factor))));
    report.scaled_down = true;
  }
  report.per_class_train = n_train;
  report.per_class_test = n_test;

  Rng rng(seed);
  std::vector<Eigen::VectorXd> train_x, test_x;
  std::vector<std::size_t> train_y, test_y;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<std::size_t> idx(by_class[c].size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < n_train; ++i) {
      train_x.push_back(by_class[c][idx[i]]);
      train_y.push_back(c);
    }
    for (std::size_t i = n_train; i < n_train + n_test; ++i) {
      test_x.push_back(by_class[c][idx[i]]);
      test_y.push_back(c);
    }
  }

  const auto model = train_classifier(train_x, train_y, labels.size(), cfg, derive_seed(seed, 0xc1a55));
  std::vector<std::size_t> hits(labels.size(), 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    if (model.predict(test_x[i]) == test_y[i]) {
      ++correct;
      ++hits[test_y[i]];
    }
  }
  report.train_size = train_x.size();
  report.test_size = test_x.size();
  report.accuracy = static_cast<double>(correct) / static_cast<double>(test_x.size());
  for (std::size_t c = 0; c < labels.size(); ++c)
    report.per_class_accuracy[labels[c]] = static_cast<double>(hits[c]) / static_cast<double>(n_test);
  return report;
}

}  // namespace semie
