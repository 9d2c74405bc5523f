#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "semie/pipeline.hpp"

namespace fs = std::filesystem;
using namespace semie;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::input, "cannot read '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path, bool force) {
  if (!force && fs::exists(path)) fail(ErrorKind::config, "'" + path + "' exists; pass --force to overwrite");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::input, "cannot write '" + path + "'");
  return out;
}

// Writes to `path`, or stdout when path is empty or "-".
template <typename Fn>
void emit(const std::string& path, bool force, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  auto out = open_out(path, force);
  fn(out);
}

// .snn files hold sparse codes, anything else the dense text format.
EmbeddingMatrix load_matrix(const std::string& path) {
  auto in = open_in(path);
  if (fs::path(path).extension() == ".snn") return read_sparse(in).matrix();
  return read_dense(in);
}

AnchorSet load_anchors(const std::string& path) {
  auto in = open_in(path);
  return AnchorSet::read(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantically infused word embeddings: training, sparse coding and evaluation"};
  app.require_subcommand(1);
  bool force = false;
  app.add_flag("--force", force, "Overwrite existing output files");

  // ingest
  std::string in_path, format = "jsonl", out_path, vocab_out;
  std::size_t min_count = 5;
  auto* ingest_cmd = app.add_subcommand("ingest", "Tokenize a corpus and write it as JSONL");
  ingest_cmd->add_option("--in", in_path, "Corpus file")->required();
  ingest_cmd->add_option("--format", format, "jsonl or csv");
  ingest_cmd->add_option("--out", out_path, "Tokenized JSONL output (default stdout)");
  ingest_cmd->add_option("--vocab", vocab_out, "Also write the vocabulary here");
  ingest_cmd->add_option("--min-count", min_count, "Vocabulary frequency cutoff");

  // infuse
  std::uint64_t seed = 0;
  std::string anchors_out;
  auto* infuse_cmd = app.add_subcommand("infuse", "Insert class anchor tokens into every document");
  infuse_cmd->add_option("--in", in_path, "Corpus file")->required();
  infuse_cmd->add_option("--format", format, "jsonl or csv");
  infuse_cmd->add_option("--out", out_path, "Infused JSONL output")->required();
  infuse_cmd->add_option("--seed", seed, "Random seed")->required();
  infuse_cmd->add_option("--anchors", anchors_out, "Write the label/anchor table here");

  // dim
  DimensionConfig dim_cfg;
  std::string curve_out;
  auto* dim_cmd = app.add_subcommand("dim", "Choose the embedding dimension by minimizing the estimated PIP loss");
  dim_cmd->add_option("--in", in_path, "Corpus file")->required();
  dim_cmd->add_option("--format", format, "jsonl or csv");
  dim_cmd->add_option("--min-count", min_count, "Vocabulary frequency cutoff");
  dim_cmd->add_option("--kmax", dim_cfg.k_max, "Largest candidate dimension");
  dim_cmd->add_option("--window", dim_cfg.window, "Co-occurrence window");
  dim_cmd->add_option("--alpha", dim_cfg.alpha, "Singular value exponent");
  dim_cmd->add_option("--seed", dim_cfg.seed, "Random seed")->required();
  dim_cmd->add_option("--curve", curve_out, "Write d,loss CSV here");

  // train
  TrainConfig train_cfg;
  auto* train_cmd = app.add_subcommand("train", "Train skip-gram embeddings with negative sampling");
  train_cmd->add_option("--in", in_path, "Corpus file")->required();
  train_cmd->add_option("--format", format, "jsonl or csv");
  train_cmd->add_option("--min-count", min_count, "Vocabulary frequency cutoff");
  train_cmd->add_option("--dim", train_cfg.dim, "Embedding dimension")->required();
  train_cmd->add_option("--window", train_cfg.window, "Maximum context window");
  train_cmd->add_option("--negatives", train_cfg.negatives, "Negative samples per pair");
  train_cmd->add_option("--epochs", train_cfg.epochs, "Passes over the corpus");
  train_cmd->add_option("--lr", train_cfg.learning_rate, "Initial learning rate");
  train_cmd->add_option("--subsample", train_cfg.subsample, "Frequent-word subsampling threshold (0 = off)");
  train_cmd->add_option("--holdout", train_cfg.holdout_fraction, "Fraction of documents held out for the loss");
  train_cmd->add_option("--threads", train_cfg.threads, "Worker threads (1 = deterministic)");
  train_cmd->add_option("--seed", train_cfg.seed, "Random seed")->required();
  train_cmd->add_option("--out", out_path, "Embedding output (.vec)")->required();

  // infuse-semantics
  std::string emb_path, anchors_path, aggregation = "sum";
  auto* semie_cmd = app.add_subcommand("infuse-semantics", "Reweight embedding columns by anchor rank distance");
  semie_cmd->add_option("--emb", emb_path, "Dense embeddings trained on an infused corpus")->required();
  semie_cmd->add_option("--anchors", anchors_path, "Label/anchor table")->required();
  semie_cmd->add_option("--aggregation", aggregation, "sum or nearest");
  semie_cmd->add_option("--out", out_path, "Output embeddings (.vec)")->required();

  // snn
  SnnConfig snn_cfg;
  std::size_t factor = 10, atoms = 0;
  auto* snn_cmd = app.add_subcommand("snn", "Sparse non-negative overcomplete coding of dense embeddings");
  snn_cmd->add_option("--emb", emb_path, "Dense embeddings")->required();
  snn_cmd->add_option("--l1", snn_cfg.l1, "Sparsity penalty");
  snn_cmd->add_option("--l2", snn_cfg.l2, "Dictionary penalty");
  snn_cmd->add_option("--iters", snn_cfg.iters, "Outer iterations");
  snn_cmd->add_option("--factor", factor, "Atoms per input dimension");
  snn_cmd->add_option("--atoms", atoms, "Number of atoms (overrides --factor)");
  snn_cmd->add_option("--threads", snn_cfg.threads, "Worker threads");
  snn_cmd->add_option("--seed", snn_cfg.seed, "Random seed")->required();
  snn_cmd->add_option("--out", out_path, "Sparse codes output (.snn)")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate embeddings");
  eval_cmd->require_subcommand(1);
  std::string ref_path, a1, a2;
  std::size_t per_train = 1600, per_test = 400, n_dims = 100, top_k = 5;
  std::uint64_t eval_seed = 0;
  double eps = 1e-6;
  bool blind = false, nonzero = false;

  auto* classify_cmd = eval_cmd->add_subcommand("classify", "Averaged-vector linear classifier accuracy");
  classify_cmd->add_option("--emb", emb_path, "Embeddings (.vec or .snn); anchor rows are dropped")->required();
  classify_cmd->add_option("--in", in_path, "Labeled corpus")->required();
  classify_cmd->add_option("--format", format, "jsonl or csv");
  classify_cmd->add_option("--train", per_train, "Training documents per class");
  classify_cmd->add_option("--test", per_test, "Test documents per class");
  classify_cmd->add_option("--seed", eval_seed, "Random seed")->required();
  classify_cmd->add_option("--out", out_path, "JSON report (default stdout)");

  auto* intrude_cmd = eval_cmd->add_subcommand("intrude", "Generate word intrusion tests");
  intrude_cmd->add_option("--emb", emb_path, "Embeddings (.vec or .snn)")->required();
  intrude_cmd->add_option("--n-dims", n_dims, "Dimensions to sample");
  intrude_cmd->add_option("--seed", eval_seed, "Random seed")->required();
  intrude_cmd->add_flag("--nonzero-ranking", nonzero, "Bottom half over non-zero entries only");
  intrude_cmd->add_flag("--blind", blind, "Omit the answer key");
  intrude_cmd->add_option("--ref", ref_path, "Dense reference embeddings; prints the automatic judge's precision");
  intrude_cmd->add_option("--out", out_path, "JSONL tests (default stdout)");

  auto* label_cmd = eval_cmd->add_subcommand("label", "Label dimensions by their top anchor");
  label_cmd->add_option("--emb", emb_path, "Embeddings (.vec or .snn) with anchor rows")->required();
  label_cmd->add_option("--anchors", anchors_path, "Label/anchor table")->required();
  label_cmd->add_option("--top-k", top_k, "Top words per dimension");
  label_cmd->add_option("--out", out_path, "TSV output (default stdout)");

  auto* triples_cmd = eval_cmd->add_subcommand("triples", "Discriminative and shared features of anchor pairs");
  triples_cmd->add_option("--emb", emb_path, "Embeddings (.vec or .snn) with anchor rows")->required();
  triples_cmd->add_option("--a1", a1, "First anchor (default: every pair from --anchors)");
  triples_cmd->add_option("--a2", a2, "Second anchor");
  triples_cmd->add_option("--anchors", anchors_path, "Label/anchor table");
  triples_cmd->add_option("--eps", eps, "Activity threshold");
  triples_cmd->add_option("--top-k", top_k, "Top words per dimension");
  triples_cmd->add_option("--out", out_path, "CSV output (default stdout)");

  // run
  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run the whole pipeline from a config file");
  run_cmd->add_option("--config", config_path, "Key-value config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  try {
    if (*ingest_cmd) {
      const Corpus corpus = ingest(in_path, format);
      emit(out_path, force, [&](std::ostream& out) { write_jsonl(out, corpus); });
      if (!vocab_out.empty()) {
        auto out = open_out(vocab_out, force);
        Vocab::build(corpus, min_count).write(out);
      }
      std::cerr << corpus.size() << " documents, " << corpus.dropped << " dropped\n";
    } else if (*infuse_cmd) {
      const Corpus corpus = ingest(in_path, format);
      const AnchorSet anchors = AnchorSet::for_corpus(corpus);
      const auto res = infuse_corpus(corpus, anchors, seed);
      emit(out_path, force, [&](std::ostream& out) { write_jsonl(out, res.corpus); });
      if (!anchors_out.empty()) {
        auto out = open_out(anchors_out, force);
        anchors.write(out);
      }
    } else if (*dim_cmd) {
      const Corpus corpus = ingest(in_path, format);
      const Vocab vocab = Vocab::build(corpus, min_count);
      const auto est = estimate_spectrum(corpus, vocab, dim_cfg);
      if (!curve_out.empty()) {
        auto out = open_out(curve_out, force);
        const auto curve = pip_loss_curve(est);
        out << "d,loss\n";
        for (std::size_t i = 0; i < curve.size(); ++i) {
          out << i + 1 << ',';
          detail::put_float(out, static_cast<float>(curve[i]));
          out << '\n';
        }
      }
      std::cout << optimal_dimension(est) << '\n';
    } else if (*train_cmd) {
      const Corpus corpus = ingest(in_path, format);
      const Vocab vocab = Vocab::build(corpus, min_count);
      const auto res = train(corpus, vocab, train_cfg);
      auto out = open_out(out_path, force);
      write_dense(out, res.embeddings);
      for (std::size_t i = 0; i < res.heldout_loss.size(); ++i)
        std::cerr << "epoch " << i + 1 << " held-out loss " << res.heldout_loss[i] << '\n';
    } else if (*semie_cmd) {
      const auto e = load_matrix(emb_path);
      const auto anchors = load_anchors(anchors_path);
      const auto agg = detail::parse_aggregation(aggregation);
      auto out = open_out(out_path, force);
      write_dense(out, infuse_semantics(e, anchors, agg));
    } else if (*snn_cmd) {
      const auto e = load_matrix(emb_path);
      const std::size_t k = atoms > 0 ? atoms : factor * e.dim();
      const auto res = fit(e, k, snn_cfg);
      auto out = open_out(out_path, force);
      write_sparse(out, res.codes);
      std::cerr << "sparsity " << res.sparsity << ", reconstruction error " << res.reconstruction_error << '\n';
      if (!res.meets_sparsity_floor)
        std::cerr << "warning: sparsity below " << snn_cfg.sparsity_floor << "; consider a larger --l1\n";
    } else if (*classify_cmd) {
      const auto e = load_matrix(emb_path).without_anchors();
      const Corpus corpus = ingest(in_path, format);
      const auto rep = train_eval_classifier(e, corpus, per_train, per_test, eval_seed);
      emit(out_path, force, [&](std::ostream& out) { out << rep.to_json().dump(2) << '\n'; });
    } else if (*intrude_cmd) {
      const auto e = load_matrix(emb_path);
      IntrusionOptions opt;
      opt.nonzero_ranking = nonzero;
      const auto batch = generate_intrusion_tests(e, n_dims, eval_seed, opt);
      emit(out_path, force, [&](std::ostream& out) {
        for (const auto& t : batch.tests) out << t.to_json(blind).dump() << '\n';
      });
      std::cerr << batch.tests.size() << " tests, " << batch.skipped_dimensions.size() << " dimensions skipped\n";
      if (!ref_path.empty())
        std::cerr << "proxy precision " << proxy_precision(batch.tests, load_matrix(ref_path)) << '\n';
    } else if (*label_cmd) {
      const auto e = load_matrix(emb_path);
      const auto labels = label_dimensions(e, load_anchors(anchors_path), top_k);
      emit(out_path, force, [&](std::ostream& out) { write_labels(out, labels); });
    } else if (*triples_cmd) {
      const auto e = load_matrix(emb_path);
      std::vector<std::pair<std::string, std::string>> pairs;
      if (!a1.empty() || !a2.empty()) {
        require(!a1.empty() && !a2.empty(), ErrorKind::config, "--a1 and --a2 go together");
        pairs.emplace_back(a1, a2);
      } else {
        require(!anchors_path.empty(), ErrorKind::config, "give --a1/--a2 or --anchors");
        const auto names = load_anchors(anchors_path).anchors();
        for (std::size_t i = 0; i < names.size(); ++i)
          for (std::size_t j = i + 1; j < names.size(); ++j) pairs.emplace_back(names[i], names[j]);
      }
      emit(out_path, force, [&](std::ostream& out) {
        write_triples_header(out);
        for (const auto& [x, y] : pairs) write_triples(out, extract_triples(e, x, y, eps, top_k));
      });
    } else if (*run_cmd) {
      const auto cfg = PipelineConfig::load(config_path);
      const auto res = run_pipeline(cfg, force);
      std::cout << "d = " << res.dim << '\n';
      std::cout << res.manifest["comparison"].dump(2) << '\n';
      std::cout << "artifacts in " << cfg.out_dir.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::internal);
  }
  return 0;
}
