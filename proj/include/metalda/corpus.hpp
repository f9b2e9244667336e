#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace metalda {

using TokenId = std::uint32_t;

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // Returns the index of `token`, inserting it if absent.
  TokenId intern(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;

  const std::string& token(TokenId id) const { return tokens_[id]; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  // Number of documents containing each token, as last computed by the
  // corpus that owns this vocabulary.
  std::vector<std::uint32_t> doc_frequency;

 private:
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::string> tokens_;
};

struct Document {
  std::string id;
  std::vector<TokenId> tokens;
  std::vector<std::string> labels;
};

struct Corpus {
  std::vector<Document> documents;
  std::shared_ptr<const Vocabulary> vocabulary;

  std::size_t size() const { return documents.size(); }
  std::size_t token_count() const;
};

struct DocumentHalves {
  std::vector<TokenId> first_half;
  std::vector<TokenId> second_half;
};

struct PruneStats {
  std::size_t documents = 0;
  std::size_t vocabulary_before = 0;
  std::size_t vocabulary_after = 0;
  std::size_t tokens_removed = 0;
  std::size_t empty_documents = 0;
};

// Reads `doc_id<TAB>label,label<TAB>tok tok ...` lines. Blank lines are
// skipped; anything else with fewer than three tab fields is a ParseError.
Corpus parse_corpus(std::istream& in);
Corpus parse_corpus_file(const std::string& path);

// Drops tokens outside [min_df, max_df_ratio * D] document frequency and
// re-indexes the rest in their original order. Document frequencies are
// recomputed from the corpus' own documents, so min_df = 1 and
// max_df_ratio = 1 compacts a vocabulary shared with other corpora.
Corpus prune_vocabulary(const Corpus& corpus, std::uint32_t min_df = 5,
                        double max_df_ratio = 0.95, PruneStats* stats = nullptr);

// Seeded uniform shuffle; the first ceil(fraction * D) documents go to train.
std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus,
                                           double train_fraction,
                                           std::uint64_t seed);

DocumentHalves split_document_halves(const std::vector<TokenId>& tokens);
inline DocumentHalves split_document_halves(const Document& doc) {
  return split_document_halves(doc.tokens);
}

void write_corpus(std::ostream& out, const Corpus& corpus);

}  // namespace metalda
