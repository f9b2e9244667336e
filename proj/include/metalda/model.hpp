#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metalda/corpus.hpp"
#include "metalda/matrix.hpp"
#include "metalda/meta.hpp"

namespace metalda {

using Topic = std::uint32_t;
using Count = std::int32_t;

enum class SamplerMode { kAuto, kSparse, kDense };
enum class TableMethod { kSimulate, kStirling };

std::string to_string(SamplerMode m);
std::string to_string(TableMethod m);
SamplerMode parse_sampler_mode(const std::string& s);
TableMethod parse_table_method(const std::string& s);

struct Hyperparams {
  std::size_t topics = 50;
  double mu0 = 1.0;
  double nu0 = 1.0;
  std::size_t iterations = 1000;
  std::size_t burn_in = 50;
  std::size_t meta_update_period = 1;
  std::uint64_t seed = 1;
  SamplerMode sampler_mode = SamplerMode::kAuto;
  TableMethod table_method = TableMethod::kSimulate;
  std::size_t workers = 1;
  // Largest count the Stirling-table method accepts.
  std::size_t stirling_max = 10000;
  // Held-in log-likelihood is logged every this many iterations; 0 disables.
  std::size_t likelihood_every = 10;

  // Throws Error on K = 0, non-positive mu0/nu0, burn_in >= iterations,
  // meta_update_period = 0 or workers = 0.
  void validate() const;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

// Lambda (L_doc x K) and delta (L_word x K), the per-label and per-feature
// topic weights. Strictly positive.
struct GammaWeights {
  Matrix<double> lambda;
  Matrix<double> delta;

  friend bool operator==(const GammaWeights&, const GammaWeights&) = default;
};

std::vector<double> compute_alpha_row(std::size_t d, const Matrix<double>& lambda,
                                      const LabelMatrix& f);
std::vector<double> compute_beta_row(Topic k, const Matrix<double>& delta,
                                     const FeatureMatrix& g);
// beta_{k,v} for one token given its active features.
double feature_product(std::span<const MetaIndex> features,
                       const Matrix<double>& weights, Topic k);

// Materialized priors. alpha is D x K; beta is stored token-major (V x K) so
// the per-token topic scan in the sampler is contiguous.
struct PriorCache {
  Matrix<double> alpha;
  std::vector<double> alpha_sum;
  Matrix<double> beta_vk;
  std::vector<double> beta_sum;

  double beta(Topic k, TokenId v) const { return beta_vk(v, k); }
};

PriorCache compute_prior_cache(const GammaWeights& w, const LabelMatrix& f,
                               const FeatureMatrix& g);

struct ValidationReport {
  bool ok = true;
  std::string message;
  explicit operator bool() const { return ok; }
};

// Compares every cached alpha/beta entry and row sum with a fresh
// recomputation, within relative tolerance.
ValidationReport check_prior_cache(const PriorCache& cache, const GammaWeights& w,
                                   const LabelMatrix& f, const FeatureMatrix& g,
                                   double rel_tol = 1e-9);

struct TopicCount {
  Topic topic;
  Count count;
  friend bool operator==(const TopicCount&, const TopicCount&) = default;
};

// Topic-word counts n_{k,v}, stored token-major with a per-token list of
// topics whose count is non-zero, plus topic totals n_{k,.}.
class WordTopicTable {
 public:
  WordTopicTable() = default;
  WordTopicTable(std::size_t vocab_size, std::size_t topics);

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t topics() const { return topics_; }

  Count count(Topic k, TokenId v) const { return counts_[v * topics_ + k]; }
  std::span<const Count> word_row(TokenId v) const {
    return {counts_.data() + v * topics_, topics_};
  }
  std::span<const Topic> nonzero_topics(TokenId v) const { return nonzero_[v]; }
  const std::vector<Count>& totals() const { return totals_; }

  void increment(Topic k, TokenId v);
  void decrement(Topic k, TokenId v);
  void set(Topic k, TokenId v, Count c);

  // this += replica - base, without refreshing the non-zero index; call
  // rebuild_index() after the last replica is merged.
  void add_delta(const WordTopicTable& base, const WordTopicTable& replica);
  void rebuild_index();

  // K x V view for persistence.
  Matrix<Count> topic_major() const;

  friend bool operator==(const WordTopicTable& a, const WordTopicTable& b) {
    return a.counts_ == b.counts_ && a.totals_ == b.totals_;
  }

 private:
  std::size_t vocab_size_ = 0;
  std::size_t topics_ = 0;
  std::vector<Count> counts_;
  std::vector<Count> totals_;
  std::vector<std::vector<Topic>> nonzero_;
};

struct CountState {
  std::vector<std::vector<Topic>> z;
  WordTopicTable word_topic;
  // m_{d,k}: per-document non-zero topic counts, sorted by topic.
  std::vector<std::vector<TopicCount>> doc_topic;
  std::vector<Count> doc_length;

  Count m(std::size_t d, Topic k) const;
  Count n(Topic k, TokenId v) const { return word_topic.count(k, v); }
  const std::vector<Count>& n_k() const { return word_topic.totals(); }
};

// Recomputes all aggregates from z and the corpus tokens. Reports the first
// mismatch.
ValidationReport validate_counts(const CountState& state, const Corpus& corpus);

// Counts from a given assignment.
CountState counts_from_assignments(const Corpus& corpus,
                                   std::vector<std::vector<Topic>> z,
                                   std::size_t topics);

struct ModelState {
  GammaWeights weights;
  PriorCache cache;
  CountState counts;
};

// lambda = delta = 1, z uniform from the seeded generator.
ModelState init_state(const Corpus& corpus, const LabelMatrix& f,
                      const FeatureMatrix& g, const Hyperparams& hyper);

struct ModelSnapshot {
  Hyperparams hyper;
  GammaWeights weights;
  Matrix<Count> n_kv;  // K x V
  std::vector<Count> n_k;
  std::vector<std::string> vocabulary;
  std::vector<std::string> label_names;
  FeatureMatrix word_features;
  std::size_t iteration = 0;

  std::size_t topics() const { return n_kv.rows(); }
  std::size_t vocab_size() const { return n_kv.cols(); }

  // beta_{k,v} recomputed from delta and the stored word features (K x V).
  Matrix<double> beta() const;

  friend bool operator==(const ModelSnapshot&, const ModelSnapshot&) = default;
};

// Directory layout: manifest (JSON), lambda.mat, delta.mat, nkv.mat,
// vocab.txt, labels.txt, features.txt, word_features.txt.
void save_model(const ModelSnapshot& snapshot, const std::filesystem::path& dir);
ModelSnapshot load_model(const std::filesystem::path& dir);

inline constexpr int kModelFormatVersion = 1;

}  // namespace metalda
