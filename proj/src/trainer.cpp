#include "metalda/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "metalda/error.hpp"

namespace metalda {

namespace {

// Contiguous document blocks with roughly equal token counts.
std::vector<std::size_t> partition_documents(const Corpus& corpus, std::size_t blocks) {
  const std::size_t D = corpus.size();
  std::vector<std::size_t> bounds{0};
  const double per_block =
      static_cast<double>(corpus.token_count()) / static_cast<double>(blocks);
  std::size_t acc = 0;
  for (std::size_t d = 0; d < D && bounds.size() < blocks; ++d) {
    acc += corpus.documents[d].tokens.size();
    if (static_cast<double>(acc) >= per_block * static_cast<double>(bounds.size())) {
      bounds.push_back(d + 1);
    }
  }
  while (bounds.size() < blocks) bounds.push_back(D);
  bounds.push_back(D);
  return bounds;
}

}  // namespace

Trainer::Trainer(const Corpus& corpus, const LabelMatrix& labels,
                 const FeatureMatrix& features, Hyperparams hyper)
    : corpus_(corpus),
      labels_(labels),
      features_(features),
      hyper_(hyper),
      meta_rng_(hyper.seed, 0x6d657461),
      stirling_(hyper.stirling_max) {
  state_ = init_state(corpus, labels, features, hyper_);
  switch (hyper_.sampler_mode) {
    case SamplerMode::kAuto: sparse_ = features.default_only(); break;
    case SamplerMode::kDense: sparse_ = false; break;
    case SamplerMode::kSparse:
      if (!features.default_only()) {
        throw ContractError(
            "sparse sampler requires default-only word features (beta constant over tokens)");
      }
      sparse_ = true;
      break;
  }
  token_count_ = corpus.token_count();

  const std::size_t K = hyper_.topics;
  const std::size_t W = std::max<std::size_t>(1, std::min(hyper_.workers, corpus.size()));
  block_bounds_ = partition_documents(corpus, W);
  workers_.reserve(W);
  for (std::size_t w = 0; w < W; ++w) {
    workers_.push_back(
        Worker{RngStream(hyper_.seed, w + 1), DocScratch(K), SparseBucketSampler(K),
               std::vector<double>(K), WordTopicTable()});
  }

  aux_.q_doc.assign(corpus.size(), 1.0);
  aux_.tables_doc.resize(corpus.size());
  aux_.q_topic.assign(K, 1.0);
  aux_.tables_word.resize(corpus.vocabulary->size());
  topic_b_.assign(K, 1.0);
}

void Trainer::set_weights(GammaWeights weights) {
  state_.weights = std::move(weights);
  state_.cache = compute_prior_cache(state_.weights, labels_, features_);
}

void Trainer::set_assignments(std::vector<std::vector<Topic>> z) {
  state_.counts = counts_from_assignments(corpus_, std::move(z), hyper_.topics);
}

void Trainer::sweep_block(std::size_t begin, std::size_t end, WordTopicTable& words,
                          Worker& w) {
  auto& counts = state_.counts;
  const auto& cache = state_.cache;
  const std::span<const Count> n_k = words.totals();
  for (std::size_t d = begin; d < end; ++d) {
    const auto& tokens = corpus_.documents[d].tokens;
    if (tokens.empty()) continue;
    auto& z = counts.z[d];
    const auto alpha_row = cache.alpha.row(d);
    w.doc.load(counts.doc_topic[d]);
    if (sparse_) w.buckets.begin_document(alpha_row, w.doc, topic_b_, cache.beta_sum, n_k);

    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const TokenId v = tokens[i];
      const Topic old_k = z[i];
      w.doc.decrement(old_k);
      words.decrement(old_k, v);
      Topic new_k;
      if (sparse_) {
        w.buckets.update_topic(old_k, w.doc.count(old_k), n_k[old_k]);
        new_k = w.buckets.sample(w.doc, words.word_row(v), words.nonzero_topics(v), w.rng);
      } else {
        new_k = sample_topic_dense(alpha_row, w.doc.counts(), cache.beta_vk.row(v),
                                   words.word_row(v), cache.beta_sum, n_k, w.scratch, w.rng);
      }
      z[i] = new_k;
      w.doc.increment(new_k);
      words.increment(new_k, v);
      if (sparse_) w.buckets.update_topic(new_k, w.doc.count(new_k), n_k[new_k]);
    }
    w.doc.store(counts.doc_topic[d]);
  }
}

void Trainer::sample_topics() {
  if (sparse_ && corpus_.vocabulary->size() > 0) {
    const auto row0 = state_.cache.beta_vk.row(0);
    topic_b_.assign(row0.begin(), row0.end());
  }
  auto& global = state_.counts.word_topic;
  const std::size_t W = workers_.size();
  if (W == 1) {
    sweep_block(0, corpus_.size(), global, workers_[0]);
    return;
  }
  for (auto& w : workers_) w.replica = global;
#pragma omp parallel for schedule(static, 1) num_threads(static_cast<int>(W))
  for (std::size_t w = 0; w < W; ++w) {
    sweep_block(block_bounds_[w], block_bounds_[w + 1], workers_[w].replica, workers_[w]);
  }
  const WordTopicTable base = global;
  for (const auto& w : workers_) global.add_delta(base, w.replica);
  global.rebuild_index();
}

void Trainer::sample_doc_auxiliaries() {
  const auto& counts = state_.counts;
  const auto& cache = state_.cache;
  for (std::size_t d = 0; d < corpus_.size(); ++d) {
    auto& tables = aux_.tables_doc[d];
    tables.clear();
    const auto q = sample_q(cache.alpha_sum[d], counts.doc_length[d], meta_rng_);
    if (!q) continue;
    aux_.q_doc[d] = *q;
    for (const auto& [k, m] : counts.doc_topic[d]) {
      tables.push_back(
          {k, sample_table_count(cache.alpha(d, k), m, hyper_.table_method, meta_rng_, &stirling_)});
    }
  }
}

void Trainer::sample_lambdas() {
  const std::size_t K = hyper_.topics;
  auto& lambda = state_.weights.lambda;
  auto& cache = state_.cache;
  std::vector<GammaPosterior> post(K);
  std::vector<double> ratio(K);
  for (MetaIndex l = 0; l < labels_.column_count(); ++l) {
    const auto docs = labels_.column(l);
    std::fill(post.begin(), post.end(), GammaPosterior::prior(hyper_.mu0));
    const auto lambda_l = lambda.row(l);
    for (std::uint32_t d : docs) {
      const double neg_log_q = -std::log(aux_.q_doc[d]);
      const auto alpha_row = cache.alpha.row(d);
      for (std::size_t k = 0; k < K; ++k) post[k].add_exposure(alpha_row[k] / lambda_l[k], neg_log_q);
      for (const auto& [k, t] : aux_.tables_doc[d]) post[k].add_tables(t);
      counters_.lambda_cells += K;
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double fresh = sample_weight(post[k], meta_rng_);
      ratio[k] = fresh / lambda_l[k];
      lambda_l[k] = fresh;
    }
    for (std::uint32_t d : docs) {
      auto alpha_row = cache.alpha.row(d);
      double delta_sum = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double updated = alpha_row[k] * ratio[k];
        delta_sum += updated - alpha_row[k];
        alpha_row[k] = updated;
      }
      cache.alpha_sum[d] += delta_sum;
      counters_.alpha_cells_updated += K;
    }
  }
}

void Trainer::sample_word_auxiliaries() {
  const auto& words = state_.counts.word_topic;
  const auto& cache = state_.cache;
  for (Topic k = 0; k < hyper_.topics; ++k) {
    const auto q = sample_q(cache.beta_sum[k], words.totals()[k], meta_rng_);
    aux_.q_topic[k] = q.value_or(1.0);
  }
  for (TokenId v = 0; v < words.vocab_size(); ++v) {
    auto& tables = aux_.tables_word[v];
    tables.clear();
    for (Topic k : words.nonzero_topics(v)) {
      tables.push_back({k, sample_table_count(cache.beta(k, v), words.count(k, v),
                                              hyper_.table_method, meta_rng_, &stirling_)});
    }
  }
}

void Trainer::sample_deltas() {
  const std::size_t K = hyper_.topics;
  auto& delta = state_.weights.delta;
  auto& cache = state_.cache;
  std::vector<GammaPosterior> post(K);
  std::vector<double> beta_mass(K), ratio(K), sum_change(K);
  for (MetaIndex l = 0; l < features_.column_count(); ++l) {
    const auto tokens = features_.column(l);
    std::fill(post.begin(), post.end(), GammaPosterior::prior(hyper_.nu0));
    std::fill(beta_mass.begin(), beta_mass.end(), 0.0);
    const auto delta_l = delta.row(l);
    for (std::uint32_t v : tokens) {
      const auto beta_row = cache.beta_vk.row(v);
      for (std::size_t k = 0; k < K; ++k) beta_mass[k] += beta_row[k] / delta_l[k];
      for (const auto& [k, t] : aux_.tables_word[v]) post[k].add_tables(t);
      counters_.delta_cells += K;
    }
    for (std::size_t k = 0; k < K; ++k) {
      post[k].add_exposure(beta_mass[k], -std::log(aux_.q_topic[k]));
      const double fresh = sample_weight(post[k], meta_rng_);
      ratio[k] = fresh / delta_l[k];
      delta_l[k] = fresh;
    }
    std::fill(sum_change.begin(), sum_change.end(), 0.0);
    for (std::uint32_t v : tokens) {
      auto beta_row = cache.beta_vk.row(v);
      for (std::size_t k = 0; k < K; ++k) {
        const double updated = beta_row[k] * ratio[k];
        sum_change[k] += updated - beta_row[k];
        beta_row[k] = updated;
      }
      counters_.beta_cells_updated += K;
    }
    for (std::size_t k = 0; k < K; ++k) cache.beta_sum[k] += sum_change[k];
  }
}

void Trainer::update_priors() {
  sample_doc_auxiliaries();
  sample_lambdas();
  sample_word_auxiliaries();
  sample_deltas();
}

double Trainer::log_likelihood() const {
  const std::size_t K = hyper_.topics;
  const auto& counts = state_.counts;
  const auto& cache = state_.cache;
  const auto& words = counts.word_topic;
  std::vector<double> inv_denom(K), theta(K);
  for (std::size_t k = 0; k < K; ++k) {
    inv_denom[k] = 1.0 / (cache.beta_sum[k] + words.totals()[k]);
  }
  double total = 0.0;
  for (std::size_t d = 0; d < corpus_.size(); ++d) {
    const auto& tokens = corpus_.documents[d].tokens;
    if (tokens.empty()) continue;
    const auto alpha_row = cache.alpha.row(d);
    const double norm = cache.alpha_sum[d] + counts.doc_length[d];
    for (std::size_t k = 0; k < K; ++k) theta[k] = alpha_row[k] / norm;
    for (const auto& [k, m] : counts.doc_topic[d]) theta[k] += m / norm;
    for (TokenId v : tokens) {
      const auto beta_row = cache.beta_vk.row(v);
      const auto n_v = words.word_row(v);
      double p = 0.0;
      for (std::size_t k = 0; k < K; ++k) p += theta[k] * (beta_row[k] + n_v[k]) * inv_denom[k];
      total += std::log(p);
    }
  }
  return token_count_ ? total / static_cast<double>(token_count_) : 0.0;
}

IterationLog Trainer::step() {
  using clock = std::chrono::steady_clock;
  IterationLog log;
  log.iteration = iteration_ + 1;
  const auto start = clock::now();
  sample_topics();
  log.meta_updated = iteration_ >= hyper_.burn_in && iteration_ % hyper_.meta_update_period == 0;
  if (log.meta_updated) update_priors();
  log.seconds = std::chrono::duration<double>(clock::now() - start).count();
  log.tokens_per_sec = log.seconds > 0.0 ? static_cast<double>(token_count_) / log.seconds : 0.0;
  ++iteration_;
  log.log_likelihood = (hyper_.likelihood_every && iteration_ % hyper_.likelihood_every == 0)
                           ? log_likelihood()
                           : std::numeric_limits<double>::quiet_NaN();
  return log;
}

std::vector<IterationLog> Trainer::run(
    const std::function<void(const IterationLog&)>& on_iteration) {
  std::vector<IterationLog> logs;
  while (iteration_ < hyper_.iterations) {
    logs.push_back(step());
    if (on_iteration) on_iteration(logs.back());
  }
  return logs;
}

ModelSnapshot Trainer::snapshot() const {
  ModelSnapshot s;
  s.hyper = hyper_;
  s.weights = state_.weights;
  s.n_kv = state_.counts.word_topic.topic_major();
  s.n_k = state_.counts.word_topic.totals();
  s.vocabulary = corpus_.vocabulary->tokens();
  s.label_names = labels_.names();
  s.word_features = features_;
  s.iteration = iteration_;
  return s;
}

ModelSnapshot train(const Corpus& corpus, const LabelMatrix& labels,
                    const FeatureMatrix& features, const Hyperparams& hyper,
                    std::vector<IterationLog>* log,
                    const std::function<void(const IterationLog&)>& on_iteration) {
  Trainer trainer(corpus, labels, features, hyper);
  auto logs = trainer.run(on_iteration);
  if (log) *log = std::move(logs);
  return trainer.snapshot();
}

}  // namespace metalda
