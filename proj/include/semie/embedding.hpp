#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "semie/corpus.hpp"
#include "semie/error.hpp"

namespace semie {

/// Dense matrix whose rows are bound to tokens. Values are single precision,
/// which the 9-significant-digit text format round-trips exactly.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::vector<std::string> tokens, Eigen::MatrixXf values)
      : tokens_(std::move(tokens)), values_(std::move(values)) {
    require(static_cast<Eigen::Index>(tokens_.size()) == values_.rows(), ErrorKind::internal,
            "embedding row count does not match token count");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], i).second)
        fail(ErrorKind::input, "duplicate embedding row for token '" + tokens_[i] + "'");
    }
  }

  std::size_t rows() const { return tokens_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t row) const { return tokens_.at(row); }
  const Eigen::MatrixXf& values() const { return values_; }
  Eigen::MatrixXf& values() { return values_; }

  std::optional<std::size_t> row_of(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool is_anchor_row(std::size_t row) const { return is_anchor_token(tokens_.at(row)); }

  std::vector<std::size_t> anchor_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (is_anchor_row(i)) out.push_back(i);
    return out;
  }

  /// Copy with every anchor row removed.
  EmbeddingMatrix without_anchors() const {
    std::vector<std::string> toks;
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!is_anchor_row(i)) {
        toks.push_back(tokens_[i]);
        keep.push_back(static_cast<Eigen::Index>(i));
      }
    }
    Eigen::MatrixXf vals(static_cast<Eigen::Index>(keep.size()), values_.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) vals.row(static_cast<Eigen::Index>(r)) = values_.row(keep[r]);
    return EmbeddingMatrix(std::move(toks), std::move(vals));
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  std::vector<std::string> tokens_;
  Eigen::MatrixXf values_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void put_float(std::ostream& out, float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  out << buf;
}

inline float parse_float(const std::string& s, std::size_t lineno) {
  errno = 0;
  char* end = nullptr;
  const float v = std::strtof(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    fail(ErrorKind::input, "line " + std::to_string(lineno) + ": bad number '" + s + "'");
  return v;
}

inline std::pair<std::size_t, std::size_t> read_header(std::istream& in, const char* what) {
  std::string line;
  std::size_t rows = 0;
  std::size_t cols = 0;
  if (!std::getline(in, line)) fail(ErrorKind::input, std::string(what) + ": missing header");
  std::istringstream header(line);
  if (!(header >> rows >> cols)) fail(ErrorKind::input, std::string(what) + ": header must be `rows cols`");
  return {rows, cols};
}

}  // namespace detail

/// Line 1 `V d`, then `token v1 ... vd`.
inline void write_dense(std::ostream& out, const EmbeddingMatrix& e) {
  out << e.rows() << ' ' << e.dim() << '\n';
  for (std::size_t r = 0; r < e.rows(); ++r) {
    out << e.token(r);
    for (std::size_t c = 0; c < e.dim(); ++c) {
      out << ' ';
      detail::put_float(out, e.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
    out << '\n';
  }
}

inline EmbeddingMatrix read_dense(std::istream& in) {
  const auto [rows, dim] = detail::read_header(in, "embedding file");
  std::vector<std::string> tokens;
  tokens.reserve(rows);
  Eigen::MatrixXf values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t lineno = r + 2;
    if (!std::getline(in, line)) fail(ErrorKind::input, "embedding file truncated at line " + std::to_string(lineno));
    std::istringstream fields(line);
    std::string tok;
    fields >> tok;
    std::string num;
    std::size_t c = 0;
    while (fields >> num) {
      if (c >= dim) fail(ErrorKind::input, "line " + std::to_string(lineno) + ": too many values");
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c++)) = detail::parse_float(num, lineno);
    }
    if (tok.empty() || c != dim) fail(ErrorKind::input, "line " + std::to_string(lineno) + ": expected token and " +
                                                            std::to_string(dim) + " values");
    tokens.push_back(std::move(tok));
  }
  return EmbeddingMatrix(std::move(tokens), std::move(values));
}

/// Non-negative codes in a dense container. Entries are either exactly zero or
/// strictly positive.
class SparseEmbeddingMatrix {
 public:
  SparseEmbeddingMatrix() = default;
  explicit SparseEmbeddingMatrix(EmbeddingMatrix codes) : codes_(std::move(codes)) {
    require((codes_.values().array() >= 0.0f).all(), ErrorKind::internal, "sparse codes must be non-negative");
  }

  const EmbeddingMatrix& matrix() const { return codes_; }
  std::size_t rows() const { return codes_.rows(); }
  std::size_t dim() const { return codes_.dim(); }

  /// Fraction of exactly-zero entries.
  double sparsity() const {
    const auto& v = codes_.values();
    if (v.size() == 0) return 1.0;
    return static_cast<double>((v.array() == 0.0f).count()) / static_cast<double>(v.size());
  }

 private:
  EmbeddingMatrix codes_;
};

/// Line 1 `V K`, then `token idx:val ...` listing non-zeros by ascending index.
inline void write_sparse(std::ostream& out, const SparseEmbeddingMatrix& s) {
  const auto& e = s.matrix();
  out << e.rows() << ' ' << e.dim() << '\n';
  for (std::size_t r = 0; r < e.rows(); ++r) {
    out << e.token(r);
    for (std::size_t c = 0; c < e.dim(); ++c) {
      const float v = e.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      if (v != 0.0f) {
        out << ' ' << c << ':';
        detail::put_float(out, v);
      }
    }
    out << '\n';
  }
}

inline SparseEmbeddingMatrix read_sparse(std::istream& in) {
  const auto [rows, dim] = detail::read_header(in, "sparse embedding file");
  std::vector<std::string> tokens;
  Eigen::MatrixXf values = Eigen::MatrixXf::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t lineno = r + 2;
    if (!std::getline(in, line)) fail(ErrorKind::input, "sparse file truncated at line " + std::to_string(lineno));
    std::istringstream fields(line);
    std::string tok;
    if (!(fields >> tok)) fail(ErrorKind::input, "line " + std::to_string(lineno) + ": missing token");
    std::string entry;
    long prev = -1;
    while (fields >> entry) {
      const auto colon = entry.find(':');
      if (colon == std::string::npos) fail(ErrorKind::input, "line " + std::to_string(lineno) + ": expected idx:val");
      char* end = nullptr;
      const long idx = std::strtol(entry.c_str(), &end, 10);
      if (end != entry.c_str() + colon || idx <= prev || idx >= static_cast<long>(dim))
        fail(ErrorKind::input, "line " + std::to_string(lineno) + ": bad or unordered index in '" + entry + "'");
      const float v = detail::parse_float(entry.substr(colon + 1), lineno);
      if (!(v > 0.0f)) fail(ErrorKind::input, "line " + std::to_string(lineno) + ": sparse values must be positive");
      values(static_cast<Eigen::Index>(r), idx) = v;
      prev = idx;
    }
    tokens.push_back(std::move(tok));
  }
  return SparseEmbeddingMatrix(EmbeddingMatrix(std::move(tokens), std::move(values)));
}

}  // namespace semie
