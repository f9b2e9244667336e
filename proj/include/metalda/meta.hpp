#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "metalda/corpus.hpp"

namespace metalda {

using MetaIndex = std::uint32_t;

// Sparse binary matrix with both row and column adjacency. Column 0 is the
// always-on default and is present in every row.
class BinaryMatrix {
 public:
  static constexpr MetaIndex kDefault = 0;

  BinaryMatrix() = default;
  // `rows` entries need not be sorted or include the default; both are fixed
  // up here. Every index must be < names.size().
  BinaryMatrix(std::vector<std::vector<MetaIndex>> rows,
               std::vector<std::string> names);

  std::size_t row_count() const { return rows_.size(); }
  std::size_t column_count() const { return names_.size(); }

  std::span<const MetaIndex> row(std::size_t r) const { return rows_[r]; }
  std::span<const std::uint32_t> column(MetaIndex c) const { return columns_[c]; }
  const std::vector<std::string>& names() const { return names_; }

  // True when column 0 is the only column, i.e. the meta information is the
  // default alone.
  bool default_only() const { return names_.size() == 1; }

  // Total number of active (row, column) cells.
  std::size_t nonzeros() const;

  friend bool operator==(const BinaryMatrix& a, const BinaryMatrix& b) {
    return a.rows_ == b.rows_ && a.names_ == b.names_;
  }

 private:
  std::vector<std::vector<MetaIndex>> rows_;
  std::vector<std::vector<std::uint32_t>> columns_;
  std::vector<std::string> names_;
};

// F: documents x labels.
struct LabelMatrix : BinaryMatrix {
  using BinaryMatrix::BinaryMatrix;
};

// G: tokens x features.
struct FeatureMatrix : BinaryMatrix {
  using BinaryMatrix::BinaryMatrix;
};

inline const std::string kDefaultName = "__default__";

// Label index space built from the corpus' label strings in first-seen order.
LabelMatrix build_label_matrix(const Corpus& corpus);
// Maps documents onto an existing label index space (e.g. a trained model's);
// labels outside it are dropped, leaving the default.
LabelMatrix build_label_matrix(const Corpus& corpus,
                               const std::vector<std::string>& label_names);
// Every document gets only the default label.
LabelMatrix default_label_matrix(std::size_t documents);
FeatureMatrix default_feature_matrix(std::size_t tokens);

struct EmbeddingTable {
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t dimension = 0;
  std::size_t duplicates = 0;

  const std::vector<double>* find(const std::string& token) const {
    auto it = vectors.find(token);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

// GloVe-style text: `token v1 ... vJ` per line.
EmbeddingTable load_embeddings(std::istream& in);
EmbeddingTable load_embeddings_file(const std::string& path);

// Per-dimension ternary code of a single embedding: +1 above the mean of the
// positive components, -1 below the mean of the negative ones, else 0.
std::vector<int> ternarize(std::span<const double> embedding);

// Feature names for a J-dimensional binarization: default, then
// dim0_pos, dim0_neg, dim1_pos, ...
std::vector<std::string> binarized_feature_names(std::size_t dimension);

FeatureMatrix binarize_embeddings(const EmbeddingTable& table,
                                  std::span<const std::string> tokens);
inline FeatureMatrix binarize_embeddings(const EmbeddingTable& table,
                                         const Vocabulary& vocab) {
  return binarize_embeddings(table, vocab.tokens());
}

struct FeatureLoadResult {
  FeatureMatrix matrix;
  std::size_t skipped_lines = 0;  // tokens not in the target token list
};

// `token<TAB>feat,feat` lines. With `fixed_names` non-empty, features are
// mapped into that index space and unknown feature names are dropped;
// otherwise names are assigned in first-seen order after the default.
FeatureLoadResult load_feature_matrix(std::istream& in,
                                      std::span<const std::string> tokens,
                                      const std::vector<std::string>& fixed_names = {});
FeatureLoadResult load_feature_matrix_file(const std::string& path,
                                           std::span<const std::string> tokens,
                                           const std::vector<std::string>& fixed_names = {});

// Writes rows in the same `token<TAB>feat,feat` format, default included.
void write_feature_file(std::ostream& out, const FeatureMatrix& g,
                        std::span<const std::string> tokens);

}  // namespace metalda
