#include "metalda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "metalda/error.hpp"
#include "metalda/sampler.hpp"

namespace metalda {

Matrix<double> point_estimate_phi(const ModelSnapshot& snapshot) {
  const auto beta = snapshot.beta();
  Matrix<double> phi(snapshot.topics(), snapshot.vocab_size());
  for (Topic k = 0; k < phi.rows(); ++k) {
    const auto b = beta.row(k);
    const double denom = std::accumulate(b.begin(), b.end(), 0.0) + snapshot.n_k[k];
    for (TokenId v = 0; v < phi.cols(); ++v) phi(k, v) = (b[v] + snapshot.n_kv(k, v)) / denom;
  }
  return phi;
}

Matrix<double> test_alpha(const LabelMatrix& f_test, const ModelSnapshot& snapshot) {
  const auto& lambda = snapshot.weights.lambda;
  if (f_test.column_count() != lambda.rows()) {
    throw DimensionError("test labels have " + std::to_string(f_test.column_count()) +
                         " columns, model has " + std::to_string(lambda.rows()) + " labels");
  }
  Matrix<double> alpha(f_test.row_count(), lambda.cols());
  for (std::size_t d = 0; d < alpha.rows(); ++d) {
    const auto row = compute_alpha_row(d, lambda, f_test);
    std::copy(row.begin(), row.end(), alpha.row(d).begin());
  }
  return alpha;
}

Matrix<double> fold_in(std::span<const DocumentHalves> halves, const LabelMatrix& f_test,
                       const ModelSnapshot& snapshot, std::size_t fold_iterations,
                       std::uint64_t seed) {
  std::vector<std::vector<TokenId>> first;
  first.reserve(halves.size());
  for (const auto& h : halves) first.push_back(h.first_half);
  const auto phi_vk = predictive_phi(snapshot, FeatureMatrix({}, snapshot.word_features.names()));
  return fold_in(first, test_alpha(f_test, snapshot), phi_vk, fold_iterations, seed);
}

std::vector<std::string> collect_unseen_tokens(const Corpus& test, const ModelSnapshot& snapshot) {
  std::unordered_set<std::string> known(snapshot.vocabulary.begin(), snapshot.vocabulary.end());
  std::unordered_set<std::string> seen_unseen;
  std::vector<std::string> out;
  const auto& vocab = *test.vocabulary;
  for (const auto& doc : test.documents) {
    for (TokenId v : doc.tokens) {
      const auto& tok = vocab.token(v);
      if (!known.contains(tok) && seen_unseen.insert(tok).second) out.push_back(tok);
    }
  }
  return out;
}

double beta_unseen(std::span<const MetaIndex> features, const Matrix<double>& delta, Topic k) {
  double b = delta(BinaryMatrix::kDefault, k);
  for (MetaIndex l : features) {
    if (l != BinaryMatrix::kDefault) b *= delta(l, k);
  }
  return b;
}

Matrix<double> predictive_phi(const ModelSnapshot& snapshot, const FeatureMatrix& g_unseen) {
  const std::size_t K = snapshot.topics();
  const std::size_t V = snapshot.vocab_size();
  const std::size_t U = g_unseen.row_count();
  const auto& delta = snapshot.weights.delta;
  if (g_unseen.column_count() != delta.rows()) {
    throw DimensionError("unseen-token features have " + std::to_string(g_unseen.column_count()) +
                         " columns, model has " + std::to_string(delta.rows()) + " features");
  }
  const auto beta = snapshot.beta();
  Matrix<double> phi(V + U, K);
  for (Topic k = 0; k < K; ++k) {
    const auto b = beta.row(k);
    double unseen_sum = 0.0;
    for (std::size_t u = 0; u < U; ++u) {
      const double bu = beta_unseen(g_unseen.row(u), delta, k);
      phi(V + u, k) = bu;
      unseen_sum += bu;
    }
    const double denom =
        snapshot.n_k[k] + std::accumulate(b.begin(), b.end(), 0.0) + unseen_sum;
    for (TokenId v = 0; v < V; ++v) phi(v, k) = (b[v] + snapshot.n_kv(k, v)) / denom;
    for (std::size_t u = 0; u < U; ++u) phi(V + u, k) /= denom;
  }
  return phi;
}

double perplexity_from_estimates(std::span<const std::vector<TokenId>> eval_docs,
                                 const Matrix<double>& theta, const Matrix<double>& phi_vk,
                                 std::size_t* n_eval) {
  if (theta.rows() != eval_docs.size()) throw DimensionError("theta rows != documents");
  double log_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < eval_docs.size(); ++d) {
    const auto th = theta.row(d);
    for (TokenId w : eval_docs[d]) {
      const auto phi = phi_vk.row(w);
      double p = 0.0;
      for (std::size_t k = 0; k < th.size(); ++k) p += th[k] * phi[k];
      log_sum += std::log(p);
      ++n;
    }
  }
  if (n_eval) *n_eval = n;
  if (n == 0) throw Error("perplexity undefined: no tokens to evaluate");
  return std::exp(-log_sum / static_cast<double>(n));
}

namespace {

constexpr TokenId kDrop = static_cast<TokenId>(-1);

EvalReport evaluate(const Corpus& test, const LabelMatrix& f_test,
                    std::span<const std::string> unseen_tokens, const FeatureMatrix& g_unseen,
                    bool keep_unseen, const ModelSnapshot& snapshot,
                    std::size_t fold_iterations, std::uint64_t seed) {
  if (f_test.row_count() != test.size()) {
    throw DimensionError("test label matrix has " + std::to_string(f_test.row_count()) +
                         " rows for " + std::to_string(test.size()) + " documents");
  }
  if (g_unseen.row_count() != unseen_tokens.size()) {
    throw DimensionError("unseen feature rows != unseen tokens");
  }
  const std::size_t V = snapshot.vocab_size();
  std::unordered_map<std::string, TokenId> column;
  for (TokenId v = 0; v < V; ++v) column.emplace(snapshot.vocabulary[v], v);
  for (std::size_t u = 0; u < unseen_tokens.size(); ++u) {
    column.emplace(unseen_tokens[u], static_cast<TokenId>(V + u));
  }

  // Map the test vocabulary once.
  const auto& vocab = *test.vocabulary;
  std::vector<TokenId> remap(vocab.size(), kDrop);
  std::vector<bool> unknown(vocab.size(), false);
  for (TokenId v = 0; v < vocab.size(); ++v) {
    auto it = column.find(vocab.token(v));
    unknown[v] = it == column.end() || it->second >= V;
    if (it != column.end() && (it->second < V || keep_unseen)) remap[v] = it->second;
  }

  EvalReport report;
  std::unordered_set<TokenId> unseen_types;
  std::vector<std::vector<TokenId>> first(test.size()), second(test.size());
  for (std::size_t d = 0; d < test.size(); ++d) {
    const auto halves = split_document_halves(test.documents[d]);
    for (TokenId v : halves.first_half) {
      if (remap[v] != kDrop) first[d].push_back(remap[v]);
    }
    for (TokenId v : halves.second_half) {
      if (unknown[v]) {
        ++report.n_unseen_tokens;
        unseen_types.insert(v);
      }
      if (remap[v] != kDrop) second[d].push_back(remap[v]);
    }
  }
  report.unseen_types = unseen_types.size();

  const auto phi_vk = predictive_phi(snapshot, g_unseen);
  const auto theta = fold_in(first, test_alpha(f_test, snapshot), phi_vk, fold_iterations, seed);
  report.perplexity = perplexity_from_estimates(second, theta, phi_vk, &report.n_eval_tokens);
  return report;
}

}  // namespace

EvalReport perplexity_excluding_unseen(const Corpus& test, const LabelMatrix& f_test,
                                       const ModelSnapshot& snapshot,
                                       std::size_t fold_iterations, std::uint64_t seed) {
  const FeatureMatrix none({}, snapshot.word_features.names());
  return evaluate(test, f_test, {}, none, false, snapshot, fold_iterations, seed);
}

EvalReport perplexity_including_unseen(const Corpus& test, const LabelMatrix& f_test,
                                       std::span<const std::string> unseen_tokens,
                                       const FeatureMatrix& g_unseen,
                                       const ModelSnapshot& snapshot,
                                       std::size_t fold_iterations, std::uint64_t seed) {
  return evaluate(test, f_test, unseen_tokens, g_unseen, true, snapshot, fold_iterations, seed);
}

std::vector<TokenId> top_word_ids(const Matrix<double>& phi, Topic k, std::size_t T) {
  std::vector<TokenId> ids(phi.cols());
  std::iota(ids.begin(), ids.end(), 0);
  T = std::min(T, ids.size());
  const auto row = phi.row(k);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(T), ids.end(),
                    [&](TokenId a, TokenId b) {
                      return row[a] > row[b] || (row[a] == row[b] && a < b);
                    });
  ids.resize(T);
  return ids;
}

std::vector<std::string> top_words(const ModelSnapshot& snapshot, Topic k, std::size_t T) {
  std::vector<std::string> out;
  for (TokenId v : top_word_ids(point_estimate_phi(snapshot), k, T)) {
    out.push_back(snapshot.vocabulary[v]);
  }
  return out;
}

std::uint64_t CoocStats::key(std::uint32_t i, std::uint32_t j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(i) << 32) | j;
}

std::uint32_t CoocStats::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kMissing : it->second;
}

std::uint64_t CoocStats::pair_count(std::uint32_t i, std::uint32_t j) const {
  if (i == kMissing || j == kMissing) return 0;
  auto it = pairs_.find(key(i, j));
  return it == pairs_.end() ? 0 : it->second;
}

void CoocStats::add_pair(std::uint32_t i, std::uint32_t j, std::uint64_t n) {
  pairs_[key(i, j)] += n;
}

void CoocStats::rebuild_index() {
  index_.clear();
  for (std::uint32_t i = 0; i < vocabulary.size(); ++i) index_.emplace(vocabulary[i], i);
}

CoocStats build_cooccurrence(const Corpus& reference, std::size_t window,
                             std::span<const std::string> targets) {
  if (window < 1) throw Error("co-occurrence window must be >= 1");
  const auto& vocab = *reference.vocabulary;
  std::vector<bool> counted(vocab.size(), targets.empty());
  for (const auto& t : targets) {
    if (auto id = vocab.find(t)) counted[*id] = true;
  }

  CoocStats stats;
  stats.vocabulary = vocab.tokens();
  stats.window_size = window;
  stats.word_window_count.assign(vocab.size(), 0);
  stats.rebuild_index();

  std::vector<TokenId> present;
  for (const auto& doc : reference.documents) {
    const auto& toks = doc.tokens;
    if (toks.empty()) continue;
    const std::size_t n_windows = toks.size() <= window ? 1 : toks.size() - window + 1;
    for (std::size_t s = 0; s < n_windows; ++s) {
      const std::size_t end = std::min(toks.size(), s + window);
      present.clear();
      for (std::size_t i = s; i < end; ++i) {
        if (counted[toks[i]]) present.push_back(toks[i]);
      }
      std::sort(present.begin(), present.end());
      present.erase(std::unique(present.begin(), present.end()), present.end());
      ++stats.window_count;
      for (std::size_t a = 0; a < present.size(); ++a) {
        ++stats.word_window_count[present[a]];
        for (std::size_t b = a + 1; b < present.size(); ++b) stats.add_pair(present[a], present[b]);
      }
    }
  }
  return stats;
}

void save_cooccurrence(std::ostream& out, const CoocStats& stats) {
  out << "windows " << stats.window_count << " window_size " << stats.window_size << " vocab "
      << stats.vocabulary.size() << " pairs " << stats.pairs().size() << '\n';
  for (std::size_t i = 0; i < stats.vocabulary.size(); ++i) {
    out << stats.vocabulary[i] << ' ' << stats.word_window_count[i] << '\n';
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs(stats.pairs().begin(),
                                                             stats.pairs().end());
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [key, n] : pairs) {
    out << (key >> 32) << ' ' << (key & 0xffffffffu) << ' ' << n << '\n';
  }
}

CoocStats load_cooccurrence(std::istream& in) {
  CoocStats stats;
  std::string tag_windows, tag_size, tag_vocab, tag_pairs;
  std::size_t n_vocab = 0, n_pairs = 0;
  if (!(in >> tag_windows >> stats.window_count >> tag_size >> stats.window_size >> tag_vocab >>
        n_vocab >> tag_pairs >> n_pairs) ||
      tag_windows != "windows" || tag_size != "window_size" || tag_vocab != "vocab" ||
      tag_pairs != "pairs") {
    throw ParseError("bad co-occurrence header", 1);
  }
  stats.vocabulary.resize(n_vocab);
  stats.word_window_count.resize(n_vocab);
  for (std::size_t i = 0; i < n_vocab; ++i) {
    if (!(in >> stats.vocabulary[i] >> stats.word_window_count[i])) {
      throw ParseError("bad word count entry", i + 2);
    }
  }
  for (std::size_t p = 0; p < n_pairs; ++p) {
    std::uint32_t i = 0, j = 0;
    std::uint64_t n = 0;
    if (!(in >> i >> j >> n) || i >= n_vocab || j >= n_vocab) {
      throw ParseError("bad pair count entry", n_vocab + p + 2);
    }
    stats.add_pair(i, j, n);
  }
  stats.rebuild_index();
  return stats;
}

double npmi_term(double p_i, double p_j, double p_ij) {
  if (p_i <= 0.0 || p_j <= 0.0) return 0.0;
  if (p_ij <= 0.0) return -1.0;
  if (p_ij >= 1.0) return 1.0;  // both words in every window
  return std::log(p_ij / (p_i * p_j)) / -std::log(p_ij);
}

NpmiScore npmi_topic(std::span<const std::uint32_t> top_words, const CoocStats& stats) {
  NpmiScore score;
  if (stats.window_count == 0) return score;
  const double n = static_cast<double>(stats.window_count);
  std::size_t pairs = 0;
  for (std::size_t j = 1; j < top_words.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      const auto wi = top_words[i], wj = top_words[j];
      const double p_i = stats.word_count(wi) / n;
      const double p_j = stats.word_count(wj) / n;
      if (p_i == 0.0 || p_j == 0.0) ++score.missing_word_pairs;
      score.sum += npmi_term(p_i, p_j, stats.pair_count(wi, wj) / n);
      ++pairs;
    }
  }
  score.mean = pairs ? score.sum / static_cast<double>(pairs) : 0.0;
  return score;
}

CoherenceReport coherence(const ModelSnapshot& snapshot, const CoocStats& stats,
                          std::size_t top_words_per_topic, std::size_t top_topics) {
  const auto phi = point_estimate_phi(snapshot);
  CoherenceReport report;
  for (Topic k = 0; k < snapshot.topics(); ++k) {
    std::vector<std::uint32_t> ids;
    for (TokenId v : top_word_ids(phi, k, top_words_per_topic)) {
      ids.push_back(stats.find(snapshot.vocabulary[v]));
    }
    report.topics.push_back(npmi_topic(ids, stats));
    report.missing_word_pairs += report.topics.back().missing_word_pairs;
  }
  std::vector<double> means;
  for (const auto& s : report.topics) means.push_back(s.mean);
  if (!means.empty()) {
    report.mean_all = std::accumulate(means.begin(), means.end(), 0.0) / means.size();
    std::sort(means.begin(), means.end(), std::greater<>());
    report.top_topics = std::min(top_topics, means.size());
    report.mean_top = std::accumulate(means.begin(), means.begin() + report.top_topics, 0.0) /
                      static_cast<double>(report.top_topics);
  }
  return report;
}

}  // namespace metalda
