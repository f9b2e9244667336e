// Topic sweeps: serial reference (one worker) against OpenMP workers, and the
// bucketed sampler against the dense one. One benchmark iteration is one
// full sweep over the corpus.

#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "metalda/trainer.hpp"

using namespace metalda;

namespace {

// LDA-generated documents: Dir(0.05) topics over the vocabulary, Dir(0.1)
// topic proportions.
Corpus make_corpus(std::size_t D, std::size_t V, std::size_t length, std::uint64_t seed) {
  constexpr std::size_t kTrueTopics = 50;
  std::mt19937_64 gen(seed);
  auto dirichlet = [&](std::size_t n, double a) {
    std::gamma_distribution<double> g(a, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = g(gen) + 1e-300;
    return x;
  };
  std::vector<std::discrete_distribution<TokenId>> topics;
  for (std::size_t k = 0; k < kTrueTopics; ++k) {
    const auto phi = dirichlet(V, 0.05);
    topics.emplace_back(phi.begin(), phi.end());
  }
  auto vocab = std::make_shared<Vocabulary>();
  for (std::size_t v = 0; v < V; ++v) vocab->intern("w" + std::to_string(v));
  Corpus corpus;
  corpus.vocabulary = vocab;
  for (std::size_t d = 0; d < D; ++d) {
    const auto theta = dirichlet(kTrueTopics, 0.1);
    std::discrete_distribution<std::size_t> pick(theta.begin(), theta.end());
    Document doc;
    doc.id = "d" + std::to_string(d);
    for (std::size_t i = 0; i < length; ++i) doc.tokens.push_back(topics[pick(gen)](gen));
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

struct Data {
  Corpus corpus = make_corpus(4000, 3000, 60, 7);
  LabelMatrix labels = default_label_matrix(corpus.size());
  FeatureMatrix features = default_feature_matrix(corpus.vocabulary->size());
};

const Data& data() {
  static const Data d;
  return d;
}

// args: topics, workers, dense (0/1)
void BM_TopicSweep(benchmark::State& state) {
  const auto& d = data();
  Hyperparams h;
  h.topics = static_cast<std::size_t>(state.range(0));
  h.workers = static_cast<std::size_t>(state.range(1));
  h.sampler_mode = state.range(2) ? SamplerMode::kDense : SamplerMode::kSparse;
  h.iterations = 1000000;
  h.burn_in = 999999;
  h.likelihood_every = 0;
  Trainer t(d.corpus, d.labels, d.features, h);
  for (int i = 0; i < 3; ++i) t.sample_topics();
  for (auto _ : state) t.sample_topics();
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * d.corpus.token_count()));
  state.SetLabel(h.sampler_mode == SamplerMode::kDense ? "dense" : "sparse");
}

void BM_PriorUpdate(benchmark::State& state) {
  const auto& d = data();
  Hyperparams h;
  h.topics = static_cast<std::size_t>(state.range(0));
  h.iterations = 1000000;
  h.burn_in = 1;
  h.likelihood_every = 0;
  Trainer t(d.corpus, d.labels, d.features, h);
  t.sample_topics();
  for (auto _ : state) t.update_priors();
}

}  // namespace

BENCHMARK(BM_TopicSweep)
    ->ArgNames({"topics", "workers", "dense"})
    ->ArgsProduct({{50, 200}, {1, 2, 4}, {0, 1}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();
BENCHMARK(BM_PriorUpdate)->ArgNames({"topics"})->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
