#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "metalda/matrix.hpp"
#include "metalda/model.hpp"
#include "metalda/rng.hpp"
#include "metalda/stirling.hpp"

namespace metalda {

inline constexpr double kMinQ = 1e-300;
inline constexpr double kMinWeight = 1e-12;
inline constexpr double kMaxWeight = 1e12;

// ---------------------------------------------------------------------------
// Topic assignment kernels

// Dense copy of one document's m_{d,k} with a list of non-zero topics, so
// increments, decrements and the non-zero walk are all O(1) per step.
class DocScratch {
 public:
  explicit DocScratch(std::size_t topics = 0);

  void load(std::span<const TopicCount> sparse);
  // Writes the non-zero counts back sorted by topic and clears the scratch.
  void store(std::vector<TopicCount>& sparse);

  Count count(Topic k) const { return counts_[k]; }
  std::span<const Count> counts() const { return counts_; }
  std::span<const Topic> nonzero() const { return nonzero_; }

  void increment(Topic k);
  void decrement(Topic k);

 private:
  std::vector<Count> counts_;
  std::vector<Topic> nonzero_;
  std::vector<std::uint32_t> position_;
};

// Unnormalized conditional of a topic for token v, all K topics:
//   (alpha_dk + m_dk) (beta_kv + n_kv) / (beta_k. + n_k.)
// Returns the normalizer; `out` receives the per-topic masses.
double dense_conditional(std::span<const double> alpha_row, std::span<const Count> doc_counts,
                         std::span<const double> beta_v, std::span<const Count> n_v,
                         std::span<const double> beta_sum, std::span<const Count> n_k,
                         std::span<double> out);

// Draws an index with probability proportional to `masses` (cumulative walk).
Topic sample_discrete(std::span<const double> masses, double total, RngStream& rng);

Topic sample_topic_dense(std::span<const double> alpha_row, std::span<const Count> doc_counts,
                         std::span<const double> beta_v, std::span<const Count> n_v,
                         std::span<const double> beta_sum, std::span<const Count> n_k,
                         std::span<double> scratch, RngStream& rng);

struct BucketMasses {
  double smoothing = 0.0;
  double document = 0.0;
  double word = 0.0;
  double total() const { return smoothing + document + word; }
};

// Three-bucket decomposition of the topic conditional for the case where
// beta_{k,v} = b_k does not depend on v:
//   smoothing  alpha_dk b_k / (B_k + n_k)          all topics
//   document   m_dk b_k / (B_k + n_k)              topics with m_dk > 0
//   word       (alpha_dk + m_dk) n_kv / (B_k + n_k) topics with n_kv > 0
// The smoothing sum is rebuilt once per document and all three are kept
// current as counts change. Smoothing masses are also summed in blocks of
// kSmoothBlock topics so a draw from that bucket skips whole blocks.
class SparseBucketSampler {
 public:
  static constexpr std::size_t kSmoothBlock = 16;

  explicit SparseBucketSampler(std::size_t topics = 0);

  // b and beta_sum are per-topic; doc holds the document's current counts.
  void begin_document(std::span<const double> alpha_row, const DocScratch& doc,
                      std::span<const double> b, std::span<const double> beta_sum,
                      std::span<const Count> n_k);

  // Call after m_dk or n_k for topic k changed.
  void update_topic(Topic k, Count m_dk, Count n_k);

  BucketMasses masses(std::span<const Count> n_v, std::span<const Topic> nonzero_v) const;
  // Per-topic probabilities implied by the buckets (normalized).
  std::vector<double> probabilities(std::span<const Count> n_v,
                                    std::span<const Topic> nonzero_v) const;

  Topic sample(const DocScratch& doc, std::span<const Count> n_v,
               std::span<const Topic> nonzero_v, RngStream& rng);

 private:
  std::span<const double> alpha_;
  std::span<const double> b_;
  std::span<const double> beta_sum_;
  void refresh_block(std::size_t block);

  std::vector<double> smooth_;
  std::vector<double> smooth_block_;
  std::vector<double> docw_;
  std::vector<double> coef_;
  std::vector<double> word_mass_;
  double smooth_sum_ = 0.0;
  double doc_sum_ = 0.0;
};

// ---------------------------------------------------------------------------
// Auxiliary variables and Gamma updates

// Beta(prior_sum, total) draw clamped into [kMinQ, 1]. nullopt when total is
// zero (the variable is not defined for an empty document/topic).
std::optional<double> sample_q(double prior_sum, Count total, RngStream& rng);

// Number of occupied tables when `count` customers enter a CRP with
// concentration `a`; P(t) proportional to S(count, t) a^t. The simulate
// method seats customers one by one (the first always opens a table); the
// Stirling method draws t exactly from the table and needs count <= max_m.
Count sample_table_count(double a, Count count, TableMethod method, RngStream& rng,
                         StirlingTable* stirling = nullptr);

// Gamma(shape, rate) posterior of one weight, built from a Ga(a, a) prior.
// Each document (or token) carrying the weight adds its table count to the
// shape and its prior mass with the weight factored out, times -log q, to
// the rate.
struct GammaPosterior {
  double shape;
  double rate;

  static GammaPosterior prior(double a) { return {a, a}; }
  void add_tables(Count t) { shape += t; }
  void add_exposure(double mass_without_weight, double neg_log_q) {
    rate += mass_without_weight * neg_log_q;
  }
  double mean() const { return shape / rate; }
};

// Gamma(shape, rate) draw clamped into [kMinWeight, kMaxWeight].
double sample_weight(const GammaPosterior& post, RngStream& rng);

// ---------------------------------------------------------------------------
// Fold-in

// Topic proportions of held-out documents with the topic-word side frozen.
// `docs` hold column indices into `phi_vk` (token-major, C x K, each column
// block a point estimate phi_{k,w}); `alpha` is D_test x K. Returns
// theta-hat averaged over the last ceil(iterations / 2) sweeps; documents
// with no tokens (or iterations = 0) get the normalized prior.
// Each document uses its own substream of `seed`, so results do not depend
// on the number of threads.
Matrix<double> fold_in(std::span<const std::vector<TokenId>> docs, const Matrix<double>& alpha,
                       const Matrix<double>& phi_vk, std::size_t iterations, std::uint64_t seed);

}  // namespace metalda
