#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "semie/eval/classify.hpp"
#include "semie/eval/intrusion.hpp"
#include "semie/eval/labels.hpp"

using namespace semie;

namespace {

EmbeddingMatrix matrix(std::vector<std::string> tokens, std::initializer_list<std::initializer_list<float>> rows) {
  Eigen::MatrixXf v(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (float x : r) v(i, j++) = x;
    ++i;
  }
  return EmbeddingMatrix(std::move(tokens), v);
}

// Rows w0..w{n-1} plus optional anchor rows, entries zero with probability
// `zero`, else uniform in (0, 1].
EmbeddingMatrix random_sparse(std::size_t n, std::size_t k, double zero, Rng& rng, std::size_t anchors = 0) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n; ++i) tokens.push_back("w" + std::to_string(i));
  for (std::size_t i = 0; i < anchors; ++i) tokens.push_back("A_c" + std::to_string(i));
  Eigen::MatrixXf v(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v.data()[i] = rng.bernoulli(zero) ? 0.0f : static_cast<float>(1.0 - rng.uniform());
  return EmbeddingMatrix(std::move(tokens), v);
}

}  // namespace

TEST(DocVector, MeanOverOccurrences) {
  const auto e = matrix({"a", "b"}, {{1, 0}, {0, 3}});
  const auto v = doc_vector(Document{{"a", "a", "b"}, "x"}, e);
  ASSERT_TRUE(v);
  EXPECT_DOUBLE_EQ((*v)[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ((*v)[1], 1.0);
  EXPECT_EQ(*doc_vector(Document{{"b"}, "x"}, e), Eigen::Vector2d(0, 3));
  EXPECT_FALSE(doc_vector(Document{{"zzz"}, "x"}, e));
}

TEST(DocVector, MatchesScalarLoop) {
  Rng rng(1);
  const auto e = random_sparse(30, 6, 0.0, rng);
  for (int t = 0; t < 50; ++t) {
    Document doc{{}, "x"};
    const auto len = 1 + rng.index(40);
    for (std::uint64_t i = 0; i < len; ++i) doc.tokens.push_back("w" + std::to_string(rng.index(35)));  // some OOV
    std::vector<double> sum(6, 0.0);
    std::size_t n = 0;
    for (const auto& tok : doc.tokens) {
      const auto r = e.row_of(tok);
      if (!r) continue;
      ++n;
      for (Eigen::Index c = 0; c < 6; ++c) sum[static_cast<std::size_t>(c)] += e.values()(static_cast<Eigen::Index>(*r), c);
    }
    const auto v = doc_vector(doc, e);
    ASSERT_EQ(v.has_value(), n > 0);
    if (!v) continue;
    for (Eigen::Index c = 0; c < 6; ++c) EXPECT_NEAR((*v)[c], sum[static_cast<std::size_t>(c)] / double(n), 1e-6);
    std::vector<std::string> shuffled = doc.tokens;
    rng.shuffle(std::span<std::string>(shuffled));
    EXPECT_LT((*doc_vector(Document{shuffled, "x"}, e) - *v).norm(), 1e-6);
  }
}

TEST(Classifier, SeparableClasses) {
  // Class words sit on opposite sides of the first axis; the rest is noise.
  Rng rng(2);
  std::vector<std::string> tokens;
  Eigen::MatrixXf v(40, 5);
  for (Eigen::Index i = 0; i < 40; ++i) {
    tokens.push_back((i < 20 ? "pos" : "neg") + std::to_string(i));
    v(i, 0) = i < 20 ? 1.0f : -1.0f;
    for (Eigen::Index c = 1; c < 5; ++c) v(i, c) = static_cast<float>(rng.normal());
  }
  const EmbeddingMatrix e(tokens, v);
  Corpus corpus;
  for (int d = 0; d < 400; ++d) {
    const bool pos = d % 2 == 0;
    Document doc{{}, pos ? "p" : "n"};
    for (int k = 0; k < 5; ++k) doc.tokens.push_back(tokens[(pos ? 0 : 20) + rng.index(20)]);
    corpus.documents.push_back(doc);
  }
  const auto rep = train_eval_classifier(e, corpus, 100, 50, 3);
  EXPECT_GE(rep.accuracy, 0.95);
  EXPECT_EQ(rep.test_size, 100u);
  EXPECT_FALSE(rep.scaled_down);
}

TEST(Classifier, ShuffledLabelsGiveChance) {
  Rng rng(4);
  const std::size_t classes = 4;
  const auto e = random_sparse(2000, 8, 0.0, rng);
  Corpus corpus;
  for (std::size_t d = 0; d < 2000; ++d)
    corpus.documents.push_back(Document{{"w" + std::to_string(d)}, "c" + std::to_string(rng.index(classes))});
  const auto rep = train_eval_classifier(e, corpus, 200, 250, 5);
  EXPECT_NEAR(rep.accuracy, 1.0 / classes, 0.05);
}

TEST(Classifier, ShortClassesScaleDown) {
  Rng rng(6);
  const auto e = random_sparse(100, 4, 0.0, rng);
  Corpus corpus;
  for (std::size_t d = 0; d < 100; ++d)
    corpus.documents.push_back(Document{{"w" + std::to_string(d)}, d < 40 ? "a" : "b"});
  corpus.documents.push_back(Document{{"unknown"}, "a"});
  const auto rep = train_eval_classifier(e, corpus, 80, 20, 1);
  EXPECT_TRUE(rep.scaled_down);
  EXPECT_EQ(rep.per_class_train, 32u);
  EXPECT_EQ(rep.per_class_test, 8u);
  EXPECT_EQ(rep.excluded_documents, 1u);
}

TEST(Classifier, Errors) {
  Rng rng(7);
  const auto e = random_sparse(10, 3, 0.0, rng);
  Corpus one;
  for (int d = 0; d < 10; ++d) one.documents.push_back(Document{{"w" + std::to_string(d)}, "only"});
  EXPECT_THROW(train_eval_classifier(e, one, 4, 2, 1), Error);
  const auto with_anchor = random_sparse(10, 3, 0.0, rng, 1);
  EXPECT_THROW(train_eval_classifier(with_anchor, one, 4, 2, 1), Error);
}

TEST(Intrusion, GeneratedTestsAreValid) {
  Rng rng(8);
  const auto e = random_sparse(300, 100, 0.85, rng, 3);
  IntrusionOptions opt;
  opt.nonzero_ranking = true;
  const auto batch = generate_intrusion_tests(e, 100, 9, opt);
  const auto plain = e.without_anchors();
  EXPECT_GT(batch.tests.size(), 50u);
  EXPECT_EQ(batch.tests.size() + batch.skipped_dimensions.size(), 100u);
  for (const auto& t : batch.tests) {
    EXPECT_EQ(oracle::intrusion_violation(plain, t, true), "") << "dim " << t.dimension;
    EXPECT_EQ(t.options[t.answer], t.intruder);
    for (const auto& w : t.options) EXPECT_FALSE(is_anchor_token(w));
  }
}

TEST(Intrusion, MostlyZeroColumnsNeedNonzeroRanking) {
  // Over full columns the bottom half is all zeros and never beaten by half the list.
  Rng rng(8);
  const auto e = random_sparse(300, 100, 0.85, rng);
  EXPECT_THROW(generate_intrusion_tests(e, 100, 9), Error);
}

TEST(Intrusion, DenseMatrixTestsAreValid) {
  Rng rng(10);
  auto e = random_sparse(200, 20, 0.0, rng);
  for (Eigen::Index i = 0; i < e.values().size(); ++i) e.values().data()[i] = static_cast<float>(rng.normal());
  const auto batch = generate_intrusion_tests(e, 20, 11);
  EXPECT_EQ(batch.tests.size(), 20u);
  for (const auto& t : batch.tests) EXPECT_EQ(oracle::intrusion_violation(e, t, false), "");
}

TEST(Intrusion, ConstantDimensionIsSkipped) {
  Rng rng(12);
  auto e = random_sparse(50, 4, 0.0, rng);
  e.values().col(2).setConstant(0.5f);
  const auto batch = generate_intrusion_tests(e, 4, 1);
  EXPECT_EQ(batch.skipped_dimensions, (std::vector<std::size_t>{2}));
}

TEST(Intrusion, NoEligibleDimensionIsAnError) {
  EmbeddingMatrix e({"a", "b", "c", "d", "e", "f"}, Eigen::MatrixXf::Ones(6, 3));
  EXPECT_THROW(generate_intrusion_tests(e, 3, 1), Error);
}

TEST(Intrusion, DeterministicForSeed) {
  Rng rng(13);
  const auto e = random_sparse(100, 30, 0.8, rng);
  IntrusionOptions opt;
  opt.nonzero_ranking = true;
  const auto a = generate_intrusion_tests(e, 10, 5, opt), b = generate_intrusion_tests(e, 10, 5, opt);
  ASSERT_EQ(a.tests.size(), b.tests.size());
  for (std::size_t i = 0; i < a.tests.size(); ++i) EXPECT_EQ(a.tests[i].options, b.tests[i].options);
}

TEST(Intrusion, BlindJsonHasNoAnswer) {
  IntrusionTest t;
  t.options = {"a", "b", "c", "d", "e"};
  t.intruder = "c";
  EXPECT_FALSE(t.to_json(true).contains("answer"));
  EXPECT_EQ(t.to_json(false)["answer"], "c");
}

TEST(AutoJudge, OrthogonalWordIsPicked) {
  const auto ref = matrix({"a", "b", "c", "d", "x"}, {{1, 0}, {1, 0}, {1, 0}, {1, 0}, {0, 1}});
  IntrusionTest t;
  t.options = {"a", "x", "b", "c", "d"};
  t.answer = 1;
  const auto j = auto_judge(t, ref);
  EXPECT_EQ(j.predicted, 1u);
  EXPECT_TRUE(j.correct);
}

TEST(AutoJudge, TiesGoToFirstOption) {
  const auto ref = matrix({"a", "b", "c", "d", "x"}, {{1, 1}, {1, 1}, {1, 1}, {1, 1}, {1, 1}});
  IntrusionTest t;
  t.options = {"a", "b", "c", "d", "x"};
  t.answer = 4;
  const auto j = auto_judge(t, ref);
  EXPECT_EQ(j.predicted, 0u);
  EXPECT_FALSE(j.correct);
  EXPECT_EQ(proxy_precision({t}, ref), 0.0);
  t.options[0] = "missing";
  EXPECT_THROW(auto_judge(t, ref), Error);
}

TEST(Labels, HighestAnchorWinsAndZeroAnchorsAreUnlabeled) {
  const auto m = matrix({"w1", "w2", "w3", "A_x", "A_y"}, {{0.5f, 0}, {0.9f, 0.2f}, {0, 0.1f}, {0.3f, 0}, {0.7f, 0}});
  const auto labels = label_dimensions(m, AnchorSet::for_labels({"x", "y"}), 5);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].label, "A_y");
  EXPECT_EQ(labels[0].top_words, (std::vector<std::string>{"w2", "w1"}));
  EXPECT_EQ(labels[1].label, kUnlabeled);
  EXPECT_EQ(labels[1].top_words, (std::vector<std::string>{"w2", "w3"}));
  std::ostringstream out;
  write_labels(out, labels);
  EXPECT_EQ(out.str(), "0\tA_y\tw2,w1\n1\tunlabeled\tw2,w3\n");
}

TEST(Labels, TopKIsRespected) {
  Rng rng(14);
  const auto m = random_sparse(50, 6, 0.0, rng, 2);
  const auto labels = label_dimensions(m, AnchorSet::for_labels({"c0", "c1"}), 5);
  for (const auto& l : labels) {
    ASSERT_EQ(l.top_words.size(), 5u);
    for (const auto& w : l.top_words) {
      EXPECT_FALSE(is_anchor_token(w));
      EXPECT_LE(oracle::count_greater(m.without_anchors().values(), static_cast<Eigen::Index>(l.dimension),
                                      m.values()(static_cast<Eigen::Index>(*m.row_of(w)), static_cast<Eigen::Index>(l.dimension))),
                4u);
    }
  }
}

TEST(Triples, PartitionByActiveAnchors) {
  // dim 0: only x, dim 1: both, dim 2: only y, dim 3: none.
  const auto m = matrix({"f1", "f2", "f3", "A_x", "A_y"},
                        {{0.9f, 0.4f, 0.0f, 0.8f}, {0.2f, 0.6f, 0.7f, 0.0f}, {0.0f, 0.0f, 0.3f, 0.0f},
                         {0.5f, 0.5f, 0.0f, 0.0f}, {0.0f, 0.1f, 0.4f, 0.0f}});
  const auto rep = extract_triples(m, "A_x", "A_y", 1e-6, 5);
  EXPECT_EQ(rep.one_active, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(rep.both_active, (std::vector<std::size_t>{1}));
  EXPECT_EQ(rep.none_active, (std::vector<std::size_t>{3}));
  ASSERT_EQ(rep.discriminative.size(), 4u);
  EXPECT_EQ(rep.discriminative[0].concept1, "x");
  EXPECT_EQ(rep.discriminative[0].feature, "f1");
  ASSERT_EQ(rep.non_discriminative.size(), 2u);
  EXPECT_EQ(rep.non_discriminative[0].feature, "f2");
  EXPECT_EQ(rep.non_discriminative[1].feature, "f1");
  std::ostringstream out;
  write_triples_header(out);
  write_triples(out, rep);
  EXPECT_EQ(out.str(),
            "concept1,concept2,feature,kind,dimension,value\n"
            "x,y,f1,disc,0,0.899999976\n"
            "y,x,f2,disc,2,0.699999988\n"
            "y,x,f3,disc,2,0.300000012\n"
            "x,y,f2,disc,0,0.200000003\n"
            "x,y,f2,nondisc,1,0.600000024\n"
            "x,y,f1,nondisc,1,0.400000006\n");
}

TEST(Triples, DuplicateFeaturesKeepHighestValue) {
  const auto m = matrix({"f", "A_x", "A_y"}, {{0.2f, 0.6f}, {1, 1}, {0, 0}});
  const auto rep = extract_triples(m, "A_x", "A_y", 1e-6, 5);
  ASSERT_EQ(rep.discriminative.size(), 1u);
  EXPECT_EQ(rep.discriminative[0].dimension, 1u);
  EXPECT_FLOAT_EQ(static_cast<float>(rep.discriminative[0].value), 0.6f);
}

TEST(Triples, ZeroAnchorsGiveEmptyReport) {
  Rng rng(15);
  auto m = random_sparse(20, 5, 0.5, rng, 2);
  m.values().bottomRows(2).setZero();
  const auto rep = extract_triples(m, "A_c0", "A_c1", 1e-6, 5);
  EXPECT_TRUE(rep.discriminative.empty());
  EXPECT_TRUE(rep.non_discriminative.empty());
  EXPECT_EQ(rep.none_active.size(), 5u);
}

TEST(Triples, Errors) {
  const auto m = matrix({"f", "A_x"}, {{1}, {1}});
  EXPECT_THROW(extract_triples(m, "A_x", "A_x", 1e-6, 5), Error);
  EXPECT_THROW(extract_triples(m, "A_x", "A_missing", 1e-6, 5), Error);
  EXPECT_EQ(detail::csv_field("a,\"b\""), "\"a,\"\"b\"\"\"");
}
