#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "metalda/corpus.hpp"
#include "metalda/matrix.hpp"
#include "metalda/meta.hpp"
#include "metalda/model.hpp"

namespace metalda {

inline constexpr std::size_t kDefaultFoldIterations = 100;

// phi-hat_{k,v} = (beta_{k,v} + n_{k,v}) / (beta_{k,.} + n_{k,.}), K x V.
Matrix<double> point_estimate_phi(const ModelSnapshot& snapshot);

// alpha^test rows from the trained lambda and test labels (which must use the
// snapshot's label index space).
Matrix<double> test_alpha(const LabelMatrix& f_test, const ModelSnapshot& snapshot);

// Fold-in on documents already expressed in the snapshot's vocabulary.
Matrix<double> fold_in(std::span<const DocumentHalves> halves, const LabelMatrix& f_test,
                       const ModelSnapshot& snapshot, std::size_t fold_iterations,
                       std::uint64_t seed);

// Test tokens missing from the snapshot vocabulary, in first-seen order.
std::vector<std::string> collect_unseen_tokens(const Corpus& test, const ModelSnapshot& snapshot);

// Prior estimate of beta for a token outside the training vocabulary:
// product of delta_{l',k} over its active features.
double beta_unseen(std::span<const MetaIndex> features, const Matrix<double>& delta, Topic k);

// Token-major predictive table over seen tokens followed by unseen ones:
//   seen   (beta_{k,v} + n_{k,v}) / (n_{k,.} + beta_{k,.} + beta^unseen_{k,.})
//   unseen beta^unseen_{k,u}      / (same denominator)
// With no unseen rows this is phi-hat transposed. Result is (V + U) x K.
Matrix<double> predictive_phi(const ModelSnapshot& snapshot, const FeatureMatrix& g_unseen);

struct EvalReport {
  double perplexity = 0.0;
  std::size_t n_eval_tokens = 0;
  std::size_t n_unseen_tokens = 0;  // unseen second-half tokens (kept or dropped)
  std::size_t unseen_types = 0;
};

// perplexity = exp(-sum log sum_k theta_{d,k} phi_{k,w} / N) over `eval_docs`,
// whose tokens index the rows of phi_vk. Throws Error when N = 0.
double perplexity_from_estimates(std::span<const std::vector<TokenId>> eval_docs,
                                 const Matrix<double>& theta, const Matrix<double>& phi_vk,
                                 std::size_t* n_eval = nullptr);

// Documents are split into halves; fold-in uses the first, perplexity the
// second. Tokens unknown to the model are dropped from both halves.
EvalReport perplexity_excluding_unseen(const Corpus& test, const LabelMatrix& f_test,
                                       const ModelSnapshot& snapshot,
                                       std::size_t fold_iterations, std::uint64_t seed);

// As above but unknown tokens stay in both halves, predicted through their
// feature rows. `unseen_tokens[i]` has features g_unseen.row(i); g_unseen
// must share the model's feature index space.
EvalReport perplexity_including_unseen(const Corpus& test, const LabelMatrix& f_test,
                                       std::span<const std::string> unseen_tokens,
                                       const FeatureMatrix& g_unseen,
                                       const ModelSnapshot& snapshot,
                                       std::size_t fold_iterations, std::uint64_t seed);

// Top-T tokens of topic k by phi-hat, ties broken by lower index.
std::vector<TokenId> top_word_ids(const Matrix<double>& phi, Topic k, std::size_t T);
std::vector<std::string> top_words(const ModelSnapshot& snapshot, Topic k, std::size_t T);

// Sliding-window document co-occurrence counts.
class CoocStats {
 public:
  static constexpr std::uint32_t kMissing = std::numeric_limits<std::uint32_t>::max();

  std::vector<std::string> vocabulary;
  std::uint64_t window_size = 0;
  std::uint64_t window_count = 0;
  std::vector<std::uint64_t> word_window_count;

  std::uint32_t find(const std::string& token) const;
  std::uint64_t word_count(std::uint32_t i) const {
    return i == kMissing ? 0 : word_window_count[i];
  }
  std::uint64_t pair_count(std::uint32_t i, std::uint32_t j) const;
  void add_pair(std::uint32_t i, std::uint32_t j, std::uint64_t n = 1);
  const std::unordered_map<std::uint64_t, std::uint64_t>& pairs() const { return pairs_; }
  void rebuild_index();

 private:
  static std::uint64_t key(std::uint32_t i, std::uint32_t j);
  std::unordered_map<std::uint64_t, std::uint64_t> pairs_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Windows of `window` tokens, stride 1; a document shorter than the window
// is one window. With `targets` non-empty only those tokens are counted
// (other tokens still occupy window positions).
CoocStats build_cooccurrence(const Corpus& reference, std::size_t window = 10,
                             std::span<const std::string> targets = {});

void save_cooccurrence(std::ostream& out, const CoocStats& stats);
CoocStats load_cooccurrence(std::istream& in);

// One NPMI term. Zero joint probability gives -1; a zero marginal gives 0.
double npmi_term(double p_i, double p_j, double p_ij);

struct NpmiScore {
  double sum = 0.0;
  double mean = 0.0;  // per pair
  std::size_t missing_word_pairs = 0;
};

// Sum over pairs j > i of the top words; indices into stats.vocabulary
// (kMissing allowed).
NpmiScore npmi_topic(std::span<const std::uint32_t> top_words, const CoocStats& stats);

struct CoherenceReport {
  std::vector<NpmiScore> topics;
  double mean_all = 0.0;
  double mean_top = 0.0;  // mean over the `top_topics` best topics
  std::size_t top_topics = 0;
  std::size_t missing_word_pairs = 0;
};

CoherenceReport coherence(const ModelSnapshot& snapshot, const CoocStats& stats,
                          std::size_t top_words_per_topic = 10, std::size_t top_topics = 20);

}  // namespace metalda
