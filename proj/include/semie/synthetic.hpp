#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "semie/corpus.hpp"
#include "semie/rng.hpp"

namespace semie {

/// Labeled corpus with known structure: each class owns a block of exclusive
/// words, every pair of classes owns a block of pair-shared words, and all
/// classes draw from one global shared block.
struct PlantedSpec {
  std::size_t classes = 5;
  std::size_t docs_per_class = 400;
  std::size_t exclusive_words = 150;  // per class
  std::size_t shared_words = 100;     // global
  std::size_t pair_shared_words = 0;  // per unordered pair of classes
  std::size_t min_length = 100;
  std::size_t max_length = 200;
  double exclusive_rate = 0.6;  // chance a token comes from the class block
  double pair_rate = 0.0;       // chance it comes from a pair block of its class
  std::uint64_t seed = 1;
};

struct PlantedCorpus {
  Corpus corpus;
  std::vector<std::string> labels;
  std::map<std::string, std::string> word_class;  // exclusive word -> its class label
  std::set<std::string> shared;                   // global and pair-shared words

  bool is_exclusive(const std::string& word) const { return word_class.count(word) != 0; }
  bool is_shared(const std::string& word) const { return shared.count(word) != 0; }
};

inline std::string planted_label(std::size_t c) {
  std::string name = "Class ";
  name.push_back(static_cast<char>('A' + c % 26));
  if (c >= 26) name += std::to_string(c / 26);
  return name;
}

inline PlantedCorpus make_planted_corpus(const PlantedSpec& spec) {
  PlantedCorpus out;
  Rng rng(spec.seed);
  std::vector<std::vector<std::string>> blocks(spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    out.labels.push_back(planted_label(c));
    for (std::size_t w = 0; w < spec.exclusive_words; ++w) {
      blocks[c].push_back("c" + std::to_string(c) + "w" + std::to_string(w));
      out.word_class[blocks[c].back()] = out.labels[c];
    }
  }
  std::vector<std::string> shared;
  for (std::size_t w = 0; w < spec.shared_words; ++w) {
    shared.push_back("sh" + std::to_string(w));
    out.shared.insert(shared.back());
  }
  // pair_blocks[a][b] for a != b, same block both ways.
  std::vector<std::vector<std::vector<std::string>>> pair_blocks(
      spec.classes, std::vector<std::vector<std::string>>(spec.classes));
  for (std::size_t a = 0; a < spec.classes; ++a) {
    for (std::size_t b = a + 1; b < spec.classes; ++b) {
      for (std::size_t w = 0; w < spec.pair_shared_words; ++w) {
        const std::string word = "p" + std::to_string(a) + "x" + std::to_string(b) + "w" + std::to_string(w);
        pair_blocks[a][b].push_back(word);
        out.shared.insert(word);
      }
      pair_blocks[b][a] = pair_blocks[a][b];
    }
  }
  const bool has_pairs = spec.pair_shared_words > 0 && spec.classes > 1;
  for (std::size_t i = 0; i < spec.docs_per_class; ++i) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      Document doc;
      doc.label = out.labels[c];
      const std::size_t len = spec.min_length + rng.index(spec.max_length - spec.min_length + 1);
      for (std::size_t t = 0; t < len; ++t) {
        const double u = rng.uniform();
        if (u < spec.exclusive_rate || (shared.empty() && !has_pairs)) {
          doc.tokens.push_back(blocks[c][rng.index(blocks[c].size())]);
        } else if (has_pairs && (u < spec.exclusive_rate + spec.pair_rate || shared.empty())) {
          std::size_t other = rng.index(spec.classes - 1);
          if (other >= c) ++other;
          const auto& block = pair_blocks[c][other];
          doc.tokens.push_back(block[rng.index(block.size())]);
        } else {
          doc.tokens.push_back(shared[rng.index(shared.size())]);
        }
      }
      out.corpus.documents.push_back(std::move(doc));
    }
  }
  return out;
}

}  // namespace semie
