#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <json.hpp>

#include "semie/corpus.hpp"
#include "semie/embedding.hpp"
#include "semie/error.hpp"
#include "semie/eval/classify.hpp"
#include "semie/eval/intrusion.hpp"
#include "semie/eval/labels.hpp"
#include "semie/infusion.hpp"
#include "semie/pipdim.hpp"
#include "semie/semantics.hpp"
#include "semie/sgns.hpp"
#include "semie/snn.hpp"

namespace semie {

/// Everything a `run` needs. Read from `key = value` lines; see README for
/// the full key list.
struct PipelineConfig {
  std::string corpus;
  CorpusFormat format = CorpusFormat::jsonl;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;  // required, no wall-clock fallback
  std::size_t min_count = 5;

  std::size_t dim = 0;  // 0 = choose with the PIP criterion
  bool per_arm_dim = false;
  DimensionConfig pipdim;
  TrainConfig train;
  AnchorAggregation aggregation = AnchorAggregation::sum;
  SnnConfig snn;
  std::size_t snn_factor = 10;  // K = snn_factor * d

  std::size_t train_per_class = 1600;
  std::size_t test_per_class = 400;
  std::size_t n_dims = 100;
  std::size_t top_k = 5;
  double eps = 1e-6;
  bool nonzero_ranking = true;  // intrusion bottom half over non-zero entries of SNN dimensions

  void validate() const {
    require(seed.has_value(), ErrorKind::config, "config: 'seed' is required");
    require(!corpus.empty(), ErrorKind::config, "config: 'corpus' is required");
    require(!out_dir.empty(), ErrorKind::config, "config: 'out_dir' is required");
    require(min_count >= 1, ErrorKind::config, "config: min_count must be >= 1");
    require(snn_factor >= 1, ErrorKind::config, "config: snn.factor must be >= 1");
    require(train_per_class >= 1 && test_per_class >= 1, ErrorKind::config, "config: eval split sizes must be positive");
    require(n_dims >= 1 && top_k >= 1, ErrorKind::config, "config: eval.n_dims and eval.top_k must be positive");
    require(eps >= 0.0, ErrorKind::config, "config: eval.eps must be non-negative");
    require(pipdim.window >= 1 && pipdim.k_max >= 1, ErrorKind::config, "config: pipdim window and k_max must be >= 1");
    require(pipdim.alpha >= 0.0 && pipdim.alpha <= 1.0, ErrorKind::config, "config: pipdim.alpha must be in [0,1]");
    TrainConfig t = train;
    t.dim = 1;
    t.validate();
    snn.validate();
  }

  /// Per-stage seeds, all derived from `seed`.
  std::map<std::string, std::uint64_t> stage_seeds() const {
    const std::uint64_t s = seed.value_or(0);
    return {{"infuse", derive_seed(s, 1)}, {"dim", derive_seed(s, 2)},  {"train", derive_seed(s, 3)},
            {"snn", derive_seed(s, 4)},    {"eval", derive_seed(s, 5)}};
  }

  nlohmann::json to_json() const;
  static PipelineConfig parse(std::istream& in);
  static PipelineConfig load(const std::filesystem::path& path);
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::config, "config: bad value '" + v + "' for '" + key + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::config, "config: bad boolean '" + v + "' for '" + key + "'");
}

inline const char* aggregation_name(AnchorAggregation a) { return a == AnchorAggregation::sum ? "sum" : "nearest"; }

inline AnchorAggregation parse_aggregation(const std::string& v) {
  if (v == "sum") return AnchorAggregation::sum;
  if (v == "nearest") return AnchorAggregation::nearest;
  fail(ErrorKind::config, "config: semie.aggregation must be 'sum' or 'nearest', got '" + v + "'");
}

}  // namespace detail

inline PipelineConfig PipelineConfig::parse(std::istream& in) {
  PipelineConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const auto size = [](std::size_t& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = detail::parse_number<std::size_t>(k, v); };
  };
  const auto real = [](double& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = detail::parse_number<double>(k, v); };
  };
  const auto flag = [](bool& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = detail::parse_bool(k, v); };
  };
  const std::map<std::string, Setter> keys{
      {"corpus", [&](auto&, const std::string& v) { c.corpus = v; }},
      {"format", [&](auto&, const std::string& v) { c.format = parse_format(v); }},
      {"out_dir", [&](auto&, const std::string& v) { c.out_dir = v; }},
      {"seed", [&](const std::string& k, const std::string& v) { c.seed = detail::parse_number<std::uint64_t>(k, v); }},
      {"min_count", size(c.min_count)},
      {"dim", size(c.dim)},
      {"per_arm_dim", flag(c.per_arm_dim)},
      {"pipdim.window", size(c.pipdim.window)},
      {"pipdim.k_max", size(c.pipdim.k_max)},
      {"pipdim.alpha", real(c.pipdim.alpha)},
      {"train.window", size(c.train.window)},
      {"train.negatives", size(c.train.negatives)},
      {"train.epochs", size(c.train.epochs)},
      {"train.learning_rate", real(c.train.learning_rate)},
      {"train.subsample", real(c.train.subsample)},
      {"train.holdout_fraction", real(c.train.holdout_fraction)},
      {"train.threads", size(c.train.threads)},
      {"semie.aggregation", [&](auto&, const std::string& v) { c.aggregation = detail::parse_aggregation(v); }},
      {"snn.l1", real(c.snn.l1)},
      {"snn.l2", real(c.snn.l2)},
      {"snn.iters", size(c.snn.iters)},
      {"snn.tolerance", real(c.snn.tolerance)},
      {"snn.factor", size(c.snn_factor)},
      {"snn.threads", size(c.snn.threads)},
      {"eval.train_per_class", size(c.train_per_class)},
      {"eval.test_per_class", size(c.test_per_class)},
      {"eval.n_dims", size(c.n_dims)},
      {"eval.top_k", size(c.top_k)},
      {"eval.eps", real(c.eps)},
      {"eval.nonzero_ranking", flag(c.nonzero_ranking)},
  };
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, "config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) fail(ErrorKind::config, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (seen.count(key))
      fail(ErrorKind::config, "config line " + std::to_string(lineno) + ": duplicate key '" + key + "' (first on line " +
                                  std::to_string(seen[key]) + ")");
    seen[key] = lineno;
    it->second(key, value);
  }
  c.validate();
  return c;
}

inline PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot read config file '" + path.string() + "'");
  return parse(in);
}

inline nlohmann::json PipelineConfig::to_json() const {
  return nlohmann::json{
      {"corpus", corpus},
      {"format", format == CorpusFormat::jsonl ? "jsonl" : "csv"},
      {"out_dir", out_dir.string()},
      {"seed", seed.value_or(0)},
      {"min_count", min_count},
      {"dim", dim},
      {"per_arm_dim", per_arm_dim},
      {"pipdim", {{"window", pipdim.window}, {"k_max", pipdim.k_max}, {"alpha", pipdim.alpha}}},
      {"train",
       {{"window", train.window},
        {"negatives", train.negatives},
        {"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"subsample", train.subsample},
        {"holdout_fraction", train.holdout_fraction},
        {"threads", train.threads}}},
      {"semie", {{"aggregation", detail::aggregation_name(aggregation)}}},
      {"snn",
       {{"l1", snn.l1}, {"l2", snn.l2}, {"iters", snn.iters}, {"tolerance", snn.tolerance}, {"factor", snn_factor},
        {"threads", snn.threads}}},
      {"eval",
       {{"train_per_class", train_per_class},
        {"test_per_class", test_per_class},
        {"n_dims", n_dims},
        {"top_k", top_k},
        {"eps", eps},
        {"nonzero_ranking", nonzero_ranking}}},
  };
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::input, "cannot hash '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    fail(ErrorKind::internal, "sha256: digest init failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

/// File names written by run_pipeline, in stage order.
inline const std::vector<std::string>& pipeline_artifacts() {
  static const std::vector<std::string> names{
      "corpus.jsonl",           "anchors.tsv",           "infused.jsonl",         "vocab.tsv",
      "vocab_baseline.tsv",     "pip_curve.csv",         "e_inf.vec",             "e_opt.vec",
      "e_semie.vec",            "snn_semie.snn",         "snn_opt.snn",           "classification.json",
      "intrusion_semie.jsonl",  "intrusion_opt.jsonl",   "labels.tsv",            "triples.csv",
  };
  return names;
}

struct ArmMetrics {
  double dense_accuracy = 0.0;
  double snn_accuracy = 0.0;
  double dense_intrusion = 0.0;  // auto_judge proxy precision
  double snn_intrusion = 0.0;
  std::size_t dense_tests = 0;
  std::size_t snn_tests = 0;
  double snn_sparsity = 0.0;
};

struct PipelineResult {
  std::size_t dim = 0;
  std::size_t baseline_dim = 0;
  ArmMetrics opt;
  ArmMetrics semie;
  nlohmann::json manifest;
};

namespace detail {

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::input, "cannot write '" + path.string() + "'");
  fn(out);
  out.flush();
  if (!out) fail(ErrorKind::input, "write failed for '" + path.string() + "'");
}

inline void write_intrusion(const std::filesystem::path& path, const IntrusionBatch& batch) {
  write_file(path, [&](std::ostream& out) {
    for (const auto& t : batch.tests) out << t.to_json(false).dump() << '\n';
  });
}

}  // namespace detail

/// ingest -> infuse -> dim -> train -> semie -> snn -> eval. A failing stage
/// is recorded in manifest.json before the error propagates, with "stage
/// <name>: " prefixed to its message.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, bool force = false) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path dir = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::config, "cannot create output directory '" + dir.string() + "': " + ec.message());
  if (!force) {
    for (const auto& name : pipeline_artifacts())
      if (fs::exists(dir / name))
        fail(ErrorKind::config, "'" + (dir / name).string() + "' exists; pass --force to overwrite");
    if (fs::exists(dir / "manifest.json"))
      fail(ErrorKind::config, "'" + (dir / "manifest.json").string() + "' exists; pass --force to overwrite");
  }

  const auto seeds = cfg.stage_seeds();
  PipelineResult result;
  nlohmann::json& manifest = result.manifest;
  manifest["config"] = cfg.to_json();
  manifest["seeds"] = seeds;
  manifest["stages"] = nlohmann::json::array();

  const auto write_manifest = [&] {
    detail::write_file(dir / "manifest.json", [&](std::ostream& out) { out << manifest.dump(2) << '\n'; });
  };
  const auto stage = [&](const std::string& name, const std::vector<std::string>& outputs, auto&& body) {
    const auto start = std::chrono::steady_clock::now();
    nlohmann::json entry{{"name", name}};
    try {
      body();
    } catch (const Error& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
      manifest["stages"].push_back(entry);
      manifest["status"] = "failed";
      write_manifest();
      throw Error(e.kind(), "stage " + name + ": " + e.what());
    }
    entry["status"] = "ok";
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& f : outputs) hashes[f] = sha256_file(dir / f);
    entry["artifacts"] = hashes;
    manifest["stages"].push_back(entry);
  };

  Corpus corpus;
  AnchorSet anchors;
  Corpus infused;
  Vocab vocab, base_vocab;
  std::size_t d = 0, d_base = 0;
  EmbeddingMatrix e_inf, e_opt, e_semie;
  SnnFit snn_semie, snn_opt;
  ClassifierConfig ccfg;

  stage("ingest", {"corpus.jsonl"}, [&] {
    corpus = ingest(cfg.corpus, cfg.format);
    manifest["corpus"] = {{"documents", corpus.size()}, {"dropped", corpus.dropped}, {"tokens", corpus.token_count()}};
    detail::write_file(dir / "corpus.jsonl", [&](std::ostream& out) { write_jsonl(out, corpus); });
  });

  stage("infuse", {"anchors.tsv", "infused.jsonl"}, [&] {
    anchors = AnchorSet::for_corpus(corpus);
    auto res = infuse_corpus(corpus, anchors, seeds.at("infuse"));
    infused = std::move(res.corpus);
    manifest["anchors"] = anchors.anchors();
    detail::write_file(dir / "anchors.tsv", [&](std::ostream& out) { anchors.write(out); });
    detail::write_file(dir / "infused.jsonl", [&](std::ostream& out) { write_jsonl(out, infused); });
  });

  stage("dim", {"vocab.tsv", "vocab_baseline.tsv", "pip_curve.csv"}, [&] {
    vocab = Vocab::build(infused, cfg.min_count);
    base_vocab = Vocab::build(corpus, cfg.min_count);
    if (!base_vocab.anchor_ids().empty()) fail(ErrorKind::internal, "baseline vocabulary contains anchor tokens");
    DimensionConfig dc = cfg.pipdim;
    dc.seed = seeds.at("dim");
    std::vector<double> curve;
    if (cfg.dim > 0) {
      d = cfg.dim;
    } else {
      const auto est = estimate_spectrum(infused, vocab, dc);
      curve = pip_loss_curve(est);
      d = optimal_dimension(est);
      manifest["noise_sigma"] = est.sigma;
    }
    d_base = d;
    if (cfg.per_arm_dim && cfg.dim == 0) d_base = optimal_dimension(estimate_spectrum(corpus, base_vocab, dc));
    require(d < vocab.size() && d_base < base_vocab.size(), ErrorKind::numerical,
            "chosen dimension " + std::to_string(std::max(d, d_base)) + " is not below the vocabulary size");
    manifest["dim"] = d;
    manifest["baseline_dim"] = d_base;
    manifest["vocab"] = {{"infused", vocab.size()}, {"baseline", base_vocab.size()}};
    detail::write_file(dir / "vocab.tsv", [&](std::ostream& out) { vocab.write(out); });
    detail::write_file(dir / "vocab_baseline.tsv", [&](std::ostream& out) { base_vocab.write(out); });
    detail::write_file(dir / "pip_curve.csv", [&](std::ostream& out) {
      out << "d,loss\n";
      for (std::size_t i = 0; i < curve.size(); ++i) {
        out << i + 1 << ',';
        detail::put_float(out, static_cast<float>(curve[i]));
        out << '\n';
      }
    });
  });

  stage("train", {"e_inf.vec", "e_opt.vec"}, [&] {
    TrainConfig tc = cfg.train;
    tc.seed = seeds.at("train");
    tc.dim = d;
    auto inf = train(infused, vocab, tc);
    tc.dim = d_base;
    auto base = train(corpus, base_vocab, tc);
    e_inf = std::move(inf.embeddings);
    e_opt = std::move(base.embeddings);
    manifest["heldout_loss"] = {{"E_INF", inf.heldout_loss}, {"E_OPT", base.heldout_loss}};
    detail::write_file(dir / "e_inf.vec", [&](std::ostream& out) { write_dense(out, e_inf); });
    detail::write_file(dir / "e_opt.vec", [&](std::ostream& out) { write_dense(out, e_opt); });
  });

  stage("semie", {"e_semie.vec"}, [&] {
    e_semie = infuse_semantics(e_inf, anchors, cfg.aggregation);
    detail::write_file(dir / "e_semie.vec", [&](std::ostream& out) { write_dense(out, e_semie); });
  });

  stage("snn", {"snn_semie.snn", "snn_opt.snn"}, [&] {
    SnnConfig sc = cfg.snn;
    sc.seed = seeds.at("snn");
    snn_semie = fit(e_semie, cfg.snn_factor * d, sc);
    snn_opt = fit(e_opt, cfg.snn_factor * d_base, sc);
    const auto summary = [](const SnnFit& f) {
      return nlohmann::json{{"atoms", f.dictionary.size()},
                            {"sparsity", f.sparsity},
                            {"meets_sparsity_floor", f.meets_sparsity_floor},
                            {"reconstruction_error", f.reconstruction_error},
                            {"objective", f.objective}};
    };
    manifest["snn"] = {{"E_SEMIE", summary(snn_semie)}, {"E_OPT", summary(snn_opt)}};
    detail::write_file(dir / "snn_semie.snn", [&](std::ostream& out) { write_sparse(out, snn_semie.codes); });
    detail::write_file(dir / "snn_opt.snn", [&](std::ostream& out) { write_sparse(out, snn_opt.codes); });
  });

  stage("eval",
        {"classification.json", "intrusion_semie.jsonl", "intrusion_opt.jsonl", "labels.tsv", "triples.csv"}, [&] {
          const std::uint64_t s = seeds.at("eval");
          const EmbeddingMatrix semie_dense = e_semie.without_anchors();
          const EmbeddingMatrix semie_snn = snn_semie.codes.matrix().without_anchors();
          const auto classify = [&](const EmbeddingMatrix& m) {
            return train_eval_classifier(m, corpus, cfg.train_per_class, cfg.test_per_class, derive_seed(s, 1), ccfg);
          };
          const auto opt_dense = classify(e_opt);
          const auto opt_snn = classify(snn_opt.codes.matrix());
          const auto se_dense = classify(semie_dense);
          const auto se_snn = classify(semie_snn);
          detail::write_file(dir / "classification.json", [&](std::ostream& out) {
            out << nlohmann::json{{"E_OPT", {{"dense", opt_dense.to_json()}, {"snn", opt_snn.to_json()}}},
                                  {"E_SEMIE", {{"dense", se_dense.to_json()}, {"snn", se_snn.to_json()}}}}
                       .dump(2)
                << '\n';
          });

          IntrusionOptions dense_opt;
          IntrusionOptions sparse_opt;
          sparse_opt.nonzero_ranking = cfg.nonzero_ranking;
          const auto intrude = [&](const EmbeddingMatrix& m, const IntrusionOptions& o, const EmbeddingMatrix& ref,
                                   double& precision, std::size_t& count) {
            auto batch = generate_intrusion_tests(m, cfg.n_dims, derive_seed(s, 2), o);
            precision = proxy_precision(batch.tests, ref);
            count = batch.tests.size();
            return batch;
          };
          ArmMetrics& mo = result.opt;
          ArmMetrics& ms = result.semie;
          intrude(e_opt, dense_opt, e_opt, mo.dense_intrusion, mo.dense_tests);
          intrude(semie_dense, dense_opt, semie_dense, ms.dense_intrusion, ms.dense_tests);
          const auto opt_batch = intrude(snn_opt.codes.matrix(), sparse_opt, e_opt, mo.snn_intrusion, mo.snn_tests);
          const auto se_batch = intrude(snn_semie.codes.matrix(), sparse_opt, semie_dense, ms.snn_intrusion, ms.snn_tests);
          detail::write_intrusion(dir / "intrusion_semie.jsonl", se_batch);
          detail::write_intrusion(dir / "intrusion_opt.jsonl", opt_batch);
          mo.dense_accuracy = opt_dense.accuracy;
          mo.snn_accuracy = opt_snn.accuracy;
          ms.dense_accuracy = se_dense.accuracy;
          ms.snn_accuracy = se_snn.accuracy;
          mo.snn_sparsity = snn_opt.sparsity;
          ms.snn_sparsity = snn_semie.sparsity;

          const auto labels = label_dimensions(snn_semie.codes, anchors, cfg.top_k);
          detail::write_file(dir / "labels.tsv", [&](std::ostream& out) { write_labels(out, labels); });
          const auto names = anchors.anchors();
          std::size_t n_disc = 0, n_nondisc = 0;
          detail::write_file(dir / "triples.csv", [&](std::ostream& out) {
            write_triples_header(out);
            for (std::size_t i = 0; i < names.size(); ++i) {
              for (std::size_t j = i + 1; j < names.size(); ++j) {
                const auto rep = extract_triples(snn_semie.codes, names[i], names[j], cfg.eps, cfg.top_k);
                n_disc += rep.discriminative.size();
                n_nondisc += rep.non_discriminative.size();
                write_triples(out, rep);
              }
            }
          });
          std::size_t labeled = 0;
          for (const auto& l : labels) labeled += l.label != kUnlabeled ? 1 : 0;
          manifest["interpretability"] = {{"labeled_dimensions", labeled},
                                          {"dimensions", labels.size()},
                                          {"discriminative_triples", n_disc},
                                          {"non_discriminative_triples", n_nondisc}};
        });

  const auto arm = [](const ArmMetrics& m) {
    return nlohmann::json{{"dense", {{"accuracy", m.dense_accuracy}, {"intrusion_precision", m.dense_intrusion},
                                     {"intrusion_tests", m.dense_tests}}},
                          {"snn", {{"accuracy", m.snn_accuracy}, {"intrusion_precision", m.snn_intrusion},
                                   {"intrusion_tests", m.snn_tests}, {"sparsity", m.snn_sparsity}}}};
  };
  manifest["comparison"] = {{"E_OPT", arm(result.opt)}, {"E_SEMIE", arm(result.semie)}};
  manifest["status"] = "ok";
  write_manifest();
  result.dim = d;
  result.baseline_dim = d_base;
  return result;
}

}  // namespace semie
