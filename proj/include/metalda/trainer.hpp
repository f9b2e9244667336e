#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "metalda/corpus.hpp"
#include "metalda/meta.hpp"
#include "metalda/model.hpp"
#include "metalda/rng.hpp"
#include "metalda/sampler.hpp"
#include "metalda/stirling.hpp"

namespace metalda {

// q_d, t_{d,k}, q'_k, t'_{k,v}. Table counts are stored sparsely next to the
// counts they bound: tables_doc[d] parallels CountState::doc_topic[d], and
// tables_word[v] holds (k, t') for the non-zero n_{k,v}.
struct AuxiliaryState {
  std::vector<double> q_doc;
  std::vector<std::vector<TopicCount>> tables_doc;
  std::vector<double> q_topic;
  std::vector<std::vector<TopicCount>> tables_word;
};

// Work counters for the prior updates.
struct MetaCounters {
  // Document-topic cells read while forming lambda posteriors.
  std::uint64_t lambda_cells = 0;
  // Token-topic cells read while forming delta posteriors.
  std::uint64_t delta_cells = 0;
  std::uint64_t alpha_cells_updated = 0;
  std::uint64_t beta_cells_updated = 0;
};

struct IterationLog {
  std::size_t iteration = 0;
  double seconds = 0.0;
  double tokens_per_sec = 0.0;
  bool meta_updated = false;
  // Mean held-in log predictive per token; NaN when not computed.
  double log_likelihood = 0.0;
};

// Owns all mutable sampler state for one training run. The corpus and
// matrices must outlive the trainer.
//
// With workers = 1 every sweep is the exact collapsed Gibbs sampler. With
// W > 1 documents are split into W contiguous blocks; each block is swept
// against a private copy of the topic-word counts and the copies are merged
// at the end of the sweep (approximate, AD-LDA style). Prior updates always
// run serially after the merge.
class Trainer {
 public:
  Trainer(const Corpus& corpus, const LabelMatrix& labels, const FeatureMatrix& features,
          Hyperparams hyper);

  // One full iteration following the schedule: topic sweep, then prior
  // updates when iteration >= burn_in and iteration % period == 0.
  IterationLog step();

  // Runs the remaining iterations; `on_iteration` sees each log entry.
  std::vector<IterationLog> run(
      const std::function<void(const IterationLog&)>& on_iteration = {});

  // Pieces of an iteration, exposed for tests and tools.
  void sample_topics();
  void update_priors();
  void sample_doc_auxiliaries();
  void sample_lambdas();
  void sample_word_auxiliaries();
  void sample_deltas();

  double log_likelihood() const;
  ModelSnapshot snapshot() const;

  bool sparse() const { return sparse_; }
  std::size_t iteration() const { return iteration_; }
  const Hyperparams& hyper() const { return hyper_; }
  const ModelState& state() const { return state_; }
  const AuxiliaryState& aux() const { return aux_; }
  const MetaCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }

  // Overrides the weights (and rebuilds the prior cache), e.g. to run the
  // topic sampler with fixed priors.
  void set_weights(GammaWeights weights);
  // Replaces z and rebuilds every count.
  void set_assignments(std::vector<std::vector<Topic>> z);

 private:
  struct Worker {
    RngStream rng;
    DocScratch doc;
    SparseBucketSampler buckets;
    std::vector<double> scratch;
    WordTopicTable replica;
  };

  void sweep_block(std::size_t begin, std::size_t end, WordTopicTable& words, Worker& w);

  const Corpus& corpus_;
  const LabelMatrix& labels_;
  const FeatureMatrix& features_;
  Hyperparams hyper_;
  bool sparse_ = false;
  std::size_t iteration_ = 0;
  std::size_t token_count_ = 0;

  ModelState state_;
  AuxiliaryState aux_;
  MetaCounters counters_;
  RngStream meta_rng_;
  StirlingTable stirling_;
  std::vector<Worker> workers_;
  std::vector<std::size_t> block_bounds_;
  std::vector<double> topic_b_;  // beta_{k,v} for default-only features
};

// Builds a trainer, runs all iterations and returns the final snapshot.
ModelSnapshot train(const Corpus& corpus, const LabelMatrix& labels,
                    const FeatureMatrix& features, const Hyperparams& hyper,
                    std::vector<IterationLog>* log = nullptr,
                    const std::function<void(const IterationLog&)>& on_iteration = {});

}  // namespace metalda
