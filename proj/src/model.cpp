#include "metalda/model.hpp"

#include <algorithm>
#include <cmath>

#include "metalda/error.hpp"
#include "metalda/rng.hpp"

namespace metalda {

std::string to_string(SamplerMode m) {
  switch (m) {
    case SamplerMode::kAuto: return "auto";
    case SamplerMode::kSparse: return "sparse";
    case SamplerMode::kDense: return "dense";
  }
  return "auto";
}

std::string to_string(TableMethod m) {
  return m == TableMethod::kStirling ? "stirling" : "simulate";
}

SamplerMode parse_sampler_mode(const std::string& s) {
  if (s == "auto") return SamplerMode::kAuto;
  if (s == "sparse") return SamplerMode::kSparse;
  if (s == "dense") return SamplerMode::kDense;
  throw Error("unknown sampler mode '" + s + "'");
}

TableMethod parse_table_method(const std::string& s) {
  if (s == "simulate") return TableMethod::kSimulate;
  if (s == "stirling") return TableMethod::kStirling;
  throw Error("unknown table method '" + s + "'");
}

void Hyperparams::validate() const {
  if (topics < 1) throw Error("number of topics must be >= 1");
  if (!(mu0 > 0.0) || !(nu0 > 0.0)) throw Error("mu0 and nu0 must be positive");
  if (burn_in >= iterations) throw Error("burn_in must be smaller than iterations");
  if (meta_update_period < 1) throw Error("meta_update_period must be >= 1");
  if (workers < 1) throw Error("workers must be >= 1");
}

double feature_product(std::span<const MetaIndex> features,
                       const Matrix<double>& weights, Topic k) {
  double p = 1.0;
  for (MetaIndex l : features) p *= weights(l, k);
  return p;
}

std::vector<double> compute_alpha_row(std::size_t d, const Matrix<double>& lambda,
                                      const LabelMatrix& f) {
  std::vector<double> row(lambda.cols());
  for (Topic k = 0; k < row.size(); ++k) row[k] = feature_product(f.row(d), lambda, k);
  return row;
}

std::vector<double> compute_beta_row(Topic k, const Matrix<double>& delta,
                                     const FeatureMatrix& g) {
  std::vector<double> row(g.row_count());
  for (TokenId v = 0; v < row.size(); ++v) row[v] = feature_product(g.row(v), delta, k);
  return row;
}

PriorCache compute_prior_cache(const GammaWeights& w, const LabelMatrix& f,
                               const FeatureMatrix& g) {
  const std::size_t K = w.lambda.cols();
  if (w.delta.cols() != K) throw DimensionError("lambda and delta disagree on K");
  if (w.lambda.rows() != f.column_count() || w.delta.rows() != g.column_count()) {
    throw DimensionError("weight rows do not match label/feature counts");
  }
  PriorCache c;
  c.alpha = Matrix<double>(f.row_count(), K);
  c.alpha_sum.assign(f.row_count(), 0.0);
  for (std::size_t d = 0; d < f.row_count(); ++d) {
    for (Topic k = 0; k < K; ++k) {
      const double a = feature_product(f.row(d), w.lambda, k);
      c.alpha(d, k) = a;
      c.alpha_sum[d] += a;
    }
  }
  c.beta_vk = Matrix<double>(g.row_count(), K);
  c.beta_sum.assign(K, 0.0);
  for (TokenId v = 0; v < g.row_count(); ++v) {
    for (Topic k = 0; k < K; ++k) {
      const double b = feature_product(g.row(v), w.delta, k);
      c.beta_vk(v, k) = b;
      c.beta_sum[k] += b;
    }
  }
  return c;
}

namespace {

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

ValidationReport check_prior_cache(const PriorCache& cache, const GammaWeights& w,
                                   const LabelMatrix& f, const FeatureMatrix& g,
                                   double rel_tol) {
  const auto fresh = compute_prior_cache(w, f, g);
  auto fail = [](std::string msg) { return ValidationReport{false, std::move(msg)}; };
  for (std::size_t d = 0; d < fresh.alpha.rows(); ++d) {
    for (Topic k = 0; k < fresh.alpha.cols(); ++k) {
      if (!rel_close(cache.alpha(d, k), fresh.alpha(d, k), rel_tol)) {
        return fail("alpha(" + std::to_string(d) + "," + std::to_string(k) + ") stale");
      }
    }
    if (!rel_close(cache.alpha_sum[d], fresh.alpha_sum[d], rel_tol)) {
      return fail("alpha_sum(" + std::to_string(d) + ") stale");
    }
  }
  for (TokenId v = 0; v < fresh.beta_vk.rows(); ++v) {
    for (Topic k = 0; k < fresh.beta_vk.cols(); ++k) {
      if (!rel_close(cache.beta_vk(v, k), fresh.beta_vk(v, k), rel_tol)) {
        return fail("beta(" + std::to_string(k) + "," + std::to_string(v) + ") stale");
      }
    }
  }
  for (Topic k = 0; k < fresh.beta_sum.size(); ++k) {
    if (!rel_close(cache.beta_sum[k], fresh.beta_sum[k], rel_tol)) {
      return fail("beta_sum(" + std::to_string(k) + ") stale");
    }
  }
  return {};
}

WordTopicTable::WordTopicTable(std::size_t vocab_size, std::size_t topics)
    : vocab_size_(vocab_size),
      topics_(topics),
      counts_(vocab_size * topics, 0),
      totals_(topics, 0),
      nonzero_(vocab_size) {}

void WordTopicTable::increment(Topic k, TokenId v) {
  if (counts_[v * topics_ + k]++ == 0) nonzero_[v].push_back(k);
  ++totals_[k];
}

void WordTopicTable::decrement(Topic k, TokenId v) {
  if (--counts_[v * topics_ + k] == 0) {
    auto& nz = nonzero_[v];
    auto it = std::find(nz.begin(), nz.end(), k);
    *it = nz.back();
    nz.pop_back();
  }
  --totals_[k];
}

void WordTopicTable::set(Topic k, TokenId v, Count c) {
  auto& cell = counts_[v * topics_ + k];
  totals_[k] += c - cell;
  const bool was = cell != 0;
  cell = c;
  if (was != (c != 0)) {
    auto& nz = nonzero_[v];
    if (c != 0) {
      nz.push_back(k);
    } else {
      nz.erase(std::find(nz.begin(), nz.end(), k));
    }
  }
}

void WordTopicTable::add_delta(const WordTopicTable& base, const WordTopicTable& replica) {
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += replica.counts_[i] - base.counts_[i];
  for (std::size_t k = 0; k < topics_; ++k) totals_[k] += replica.totals_[k] - base.totals_[k];
}

void WordTopicTable::rebuild_index() {
  for (TokenId v = 0; v < vocab_size_; ++v) {
    auto& nz = nonzero_[v];
    nz.clear();
    for (Topic k = 0; k < topics_; ++k) {
      if (counts_[v * topics_ + k] != 0) nz.push_back(k);
    }
  }
}

Matrix<Count> WordTopicTable::topic_major() const {
  Matrix<Count> m(topics_, vocab_size_);
  for (TokenId v = 0; v < vocab_size_; ++v) {
    for (Topic k = 0; k < topics_; ++k) m(k, v) = counts_[v * topics_ + k];
  }
  return m;
}

Count CountState::m(std::size_t d, Topic k) const {
  const auto& row = doc_topic[d];
  auto it = std::lower_bound(row.begin(), row.end(), k,
                             [](const TopicCount& tc, Topic t) { return tc.topic < t; });
  return (it != row.end() && it->topic == k) ? it->count : 0;
}

CountState counts_from_assignments(const Corpus& corpus,
                                   std::vector<std::vector<Topic>> z,
                                   std::size_t topics) {
  if (z.size() != corpus.size()) throw DimensionError("assignment count != documents");
  CountState s;
  s.word_topic = WordTopicTable(corpus.vocabulary->size(), topics);
  s.doc_topic.resize(corpus.size());
  s.doc_length.resize(corpus.size());
  std::vector<Count> dense(topics, 0);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& tokens = corpus.documents[d].tokens;
    if (z[d].size() != tokens.size()) throw DimensionError("assignment length != tokens");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const Topic k = z[d][i];
      if (k >= topics) throw DimensionError("topic assignment out of range");
      s.word_topic.increment(k, tokens[i]);
      ++dense[k];
    }
    for (Topic k = 0; k < topics; ++k) {
      if (dense[k]) s.doc_topic[d].push_back({k, dense[k]});
      dense[k] = 0;
    }
    s.doc_length[d] = static_cast<Count>(tokens.size());
  }
  s.z = std::move(z);
  return s;
}

ValidationReport validate_counts(const CountState& state, const Corpus& corpus) {
  auto fail = [](std::string msg) { return ValidationReport{false, std::move(msg)}; };
  if (state.z.size() != corpus.size()) return fail("z has wrong document count");
  const std::size_t K = state.word_topic.topics();
  const auto fresh = counts_from_assignments(corpus, state.z, K);
  for (TokenId v = 0; v < fresh.word_topic.vocab_size(); ++v) {
    for (Topic k = 0; k < K; ++k) {
      if (fresh.n(k, v) != state.n(k, v)) {
        return fail("n_kv mismatch at (k=" + std::to_string(k) + ", v=" + std::to_string(v) +
                    "): stored " + std::to_string(state.n(k, v)) + ", recomputed " +
                    std::to_string(fresh.n(k, v)));
      }
    }
    auto nz = state.word_topic.nonzero_topics(v);
    std::vector<Topic> sorted(nz.begin(), nz.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<Topic> expect(fresh.word_topic.nonzero_topics(v).begin(),
                              fresh.word_topic.nonzero_topics(v).end());
    std::sort(expect.begin(), expect.end());
    if (sorted != expect) return fail("non-zero topic index stale for v=" + std::to_string(v));
  }
  for (Topic k = 0; k < K; ++k) {
    if (fresh.n_k()[k] != state.n_k()[k]) return fail("n_k mismatch at k=" + std::to_string(k));
  }
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    if (fresh.doc_topic[d] != state.doc_topic[d]) {
      return fail("m_dk mismatch at d=" + std::to_string(d));
    }
    if (fresh.doc_length[d] != state.doc_length[d]) {
      return fail("m_d mismatch at d=" + std::to_string(d));
    }
  }
  return {};
}

ModelState init_state(const Corpus& corpus, const LabelMatrix& f,
                      const FeatureMatrix& g, const Hyperparams& hyper) {
  hyper.validate();
  if (f.row_count() != corpus.size()) {
    throw DimensionError("label matrix has " + std::to_string(f.row_count()) +
                         " rows for " + std::to_string(corpus.size()) + " documents");
  }
  if (g.row_count() != corpus.vocabulary->size()) {
    throw DimensionError("feature matrix has " + std::to_string(g.row_count()) +
                         " rows for a vocabulary of " +
                         std::to_string(corpus.vocabulary->size()));
  }
  const std::size_t K = hyper.topics;
  ModelState s;
  s.weights.lambda = Matrix<double>(f.column_count(), K, 1.0);
  s.weights.delta = Matrix<double>(g.column_count(), K, 1.0);
  s.cache = compute_prior_cache(s.weights, f, g);

  RngStream rng(hyper.seed);
  std::vector<std::vector<Topic>> z(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    z[d].resize(corpus.documents[d].tokens.size());
    for (auto& k : z[d]) k = static_cast<Topic>(rng.uniform_int(K));
  }
  s.counts = counts_from_assignments(corpus, std::move(z), K);
  return s;
}

Matrix<double> ModelSnapshot::beta() const {
  const std::size_t K = topics();
  Matrix<double> b(K, word_features.row_count());
  for (Topic k = 0; k < K; ++k) {
    for (TokenId v = 0; v < b.cols(); ++v) {
      b(k, v) = feature_product(word_features.row(v), weights.delta, k);
    }
  }
  return b;
}

}  // namespace metalda
