#include "metalda/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "metalda/error.hpp"

namespace metalda {

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  for (auto& t : tokens) intern(t);
}

TokenId Vocabulary::intern(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.tokens.size();
  return n;
}

namespace {

std::vector<std::uint32_t> document_frequency(const std::vector<Document>& docs,
                                              std::size_t vocab_size) {
  std::vector<std::uint32_t> df(vocab_size, 0);
  std::vector<std::size_t> last_seen(vocab_size, static_cast<std::size_t>(-1));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (TokenId v : docs[d].tokens) {
      if (last_seen[v] != d) {
        last_seen[v] = d;
        ++df[v];
      }
    }
  }
  return df;
}

std::vector<std::string> split_labels(std::string_view field) {
  std::vector<std::string> labels;
  std::size_t start = 0;
  while (start <= field.size()) {
    auto end = field.find(',', start);
    if (end == std::string_view::npos) end = field.size();
    auto label = field.substr(start, end - start);
    if (!label.empty() &&
        std::find(labels.begin(), labels.end(), label) == labels.end()) {
      labels.emplace_back(label);
    }
    start = end + 1;
  }
  return labels;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
  auto vocab = std::make_shared<Vocabulary>();
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    const auto tab1 = line.find('\t');
    const auto tab2 =
        tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw ParseError("expected 3 tab-separated fields (id, labels, tokens)",
                       line_no);
    }
    Document doc;
    doc.id = line.substr(0, tab1);
    doc.labels = split_labels(std::string_view(line).substr(tab1 + 1, tab2 - tab1 - 1));
    std::istringstream tokens(line.substr(tab2 + 1));
    std::string tok;
    while (tokens >> tok) doc.tokens.push_back(vocab->intern(tok));
    corpus.documents.push_back(std::move(doc));
  }
  if (corpus.documents.empty()) throw EmptyCorpusError();
  vocab->doc_frequency = document_frequency(corpus.documents, vocab->size());
  corpus.vocabulary = std::move(vocab);
  return corpus;
}

Corpus parse_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  return parse_corpus(in);
}

Corpus prune_vocabulary(const Corpus& corpus, std::uint32_t min_df,
                        double max_df_ratio, PruneStats* stats) {
  if (min_df < 1 || !(max_df_ratio > 0.0 && max_df_ratio <= 1.0)) {
    throw Error("prune_vocabulary: need min_df >= 1 and 0 < max_df_ratio <= 1");
  }
  const auto& old_vocab = *corpus.vocabulary;
  const auto df = document_frequency(corpus.documents, old_vocab.size());
  const double max_df = max_df_ratio * static_cast<double>(corpus.size());

  constexpr auto kDropped = static_cast<TokenId>(-1);
  std::vector<TokenId> remap(old_vocab.size(), kDropped);
  std::vector<std::string> kept;
  std::vector<std::uint32_t> kept_df;
  for (TokenId v = 0; v < old_vocab.size(); ++v) {
    if (df[v] >= min_df && static_cast<double>(df[v]) <= max_df) {
      remap[v] = static_cast<TokenId>(kept.size());
      kept.push_back(old_vocab.token(v));
      kept_df.push_back(df[v]);
    }
  }

  auto vocab = std::make_shared<Vocabulary>(std::move(kept));
  vocab->doc_frequency = std::move(kept_df);

  Corpus out;
  out.documents.reserve(corpus.size());
  std::size_t removed = 0;
  std::size_t empty = 0;
  for (const auto& doc : corpus.documents) {
    Document nd{doc.id, {}, doc.labels};
    nd.tokens.reserve(doc.tokens.size());
    for (TokenId v : doc.tokens) {
      if (remap[v] == kDropped) {
        ++removed;
      } else {
        nd.tokens.push_back(remap[v]);
      }
    }
    if (nd.tokens.empty()) ++empty;
    out.documents.push_back(std::move(nd));
  }
  if (stats) {
    *stats = PruneStats{out.size(), old_vocab.size(), vocab->size(), removed, empty};
  }
  out.vocabulary = std::move(vocab);
  return out;
}

std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus,
                                           double train_fraction,
                                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error("split_train_test: train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(seed);
  // Fisher-Yates with an explicit uniform draw keeps the partition identical
  // across standard library implementations.
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(gen() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(corpus.size())));

  Corpus train{{}, corpus.vocabulary};
  Corpus test{{}, corpus.vocabulary};
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).documents.push_back(corpus.documents[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

DocumentHalves split_document_halves(const std::vector<TokenId>& tokens) {
  DocumentHalves h;
  h.first_half.reserve((tokens.size() + 1) / 2);
  h.second_half.reserve(tokens.size() / 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    (i % 2 == 0 ? h.first_half : h.second_half).push_back(tokens[i]);
  }
  return h;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  const auto& vocab = *corpus.vocabulary;
  for (const auto& doc : corpus.documents) {
    out << doc.id << '\t';
    for (std::size_t i = 0; i < doc.labels.size(); ++i) {
      out << (i ? "," : "") << doc.labels[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      out << (i ? " " : "") << vocab.token(doc.tokens[i]);
    }
    out << '\n';
  }
}

}  // namespace metalda
