#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "metalda/error.hpp"
#include "metalda/model.hpp"
#include "metalda/trainer.hpp"
#include "support.hpp"

using namespace metalda;
using testing::corpus_from;

namespace {

const char* kSmall =
    "d0\ta\tdog cat dog\n"
    "d1\ta,b\tcat fish\n"
    "d2\t\tfish fish dog bird\n";

Hyperparams small_hyper(std::size_t K = 3) {
  Hyperparams h;
  h.topics = K;
  h.iterations = 20;
  h.burn_in = 5;
  h.seed = 7;
  return h;
}

}  // namespace

TEST_CASE("alpha row is the product over active labels") {
  const LabelMatrix f({{}, {1}}, {kDefaultName, "l1"});
  Matrix<double> lambda(2, 2);
  lambda(0, 0) = 0.5;
  lambda(0, 1) = 2.0;
  lambda(1, 0) = 2.0;
  lambda(1, 1) = 0.25;
  CHECK(compute_alpha_row(0, lambda, f) == std::vector<double>{0.5, 2.0});
  CHECK(compute_alpha_row(1, lambda, f) == std::vector<double>{1.0, 0.5});
  CHECK(compute_alpha_row(1, Matrix<double>(2, 2, 1.0), f) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("beta row is the product over active features") {
  const FeatureMatrix g({{}, {1}}, {kDefaultName, "f1"});
  Matrix<double> delta(2, 1);
  delta(0, 0) = 0.1;
  delta(1, 0) = 3.0;
  const auto row = compute_beta_row(0, delta, g);
  CHECK(row[0] == doctest::Approx(0.1));
  CHECK(row[1] == doctest::Approx(0.3));
  Matrix<double> only_default(2, 1, 0.01);
  CHECK(compute_beta_row(0, only_default, default_feature_matrix(1))[0] == 0.01);
}

TEST_CASE("init state") {
  const auto c = corpus_from(kSmall);
  const auto f = build_label_matrix(c);
  const auto g = default_feature_matrix(c.vocabulary->size());
  const auto s = init_state(c, f, g, small_hyper());
  CHECK(validate_counts(s.counts, c).ok);
  for (std::size_t d = 0; d < c.size(); ++d) {
    CHECK(s.cache.alpha_sum[d] == 3.0);
    for (Topic k = 0; k < 3; ++k) CHECK(s.cache.alpha(d, k) == 1.0);
  }
  CHECK(check_prior_cache(s.cache, s.weights, f, g).ok);
  const auto again = init_state(c, f, g, small_hyper());
  CHECK(again.counts.z == s.counts.z);

  std::size_t total = 0;
  for (Count n : s.counts.n_k()) total += static_cast<std::size_t>(n);
  CHECK(total == c.token_count());
}

TEST_CASE("validate counts reports a corrupted cell") {
  const auto c = corpus_from(kSmall);
  auto s = init_state(c, build_label_matrix(c), default_feature_matrix(c.vocabulary->size()),
                      small_hyper());
  const Topic k = s.counts.z[0][0];
  const TokenId v = c.documents[0].tokens[0];
  s.counts.word_topic.set(k, v, s.counts.word_topic.count(k, v) + 1);
  const auto report = validate_counts(s.counts, c);
  CHECK_FALSE(report.ok);
  CHECK(report.message.find("(k=" + std::to_string(k) + ", v=" + std::to_string(v) + ")") !=
        std::string::npos);

  Corpus empty;
  empty.vocabulary = std::make_shared<Vocabulary>();
  CHECK(validate_counts(CountState{}, empty).ok);
}

TEST_CASE("dimension mismatch is rejected at init") {
  const auto c = corpus_from(kSmall);
  CHECK_THROWS_AS(init_state(c, default_label_matrix(2), default_feature_matrix(c.vocabulary->size()),
                             small_hyper()),
                  DimensionError);
}

TEST_CASE("hyperparameter validation") {
  Hyperparams h = small_hyper();
  CHECK_NOTHROW(h.validate());
  h.topics = 0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = small_hyper();
  h.burn_in = h.iterations;
  CHECK_THROWS_AS(h.validate(), Error);
  h = small_hyper();
  h.mu0 = 0.0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = small_hyper();
  h.meta_update_period = 0;
  CHECK_THROWS_AS(h.validate(), Error);
  CHECK(parse_sampler_mode("dense") == SamplerMode::kDense);
  CHECK_THROWS_AS(parse_table_method("guess"), Error);
}

TEST_CASE("identical label rows give identical priors") {
  const auto c = corpus_from("d0\ta,b\tx\nd1\tb,a\ty\nd2\ta\tx\n");
  const auto f = build_label_matrix(c);
  GammaWeights w{Matrix<double>(3, 4), Matrix<double>(1, 4, 1.0)};
  std::mt19937_64 gen(2);
  for (auto& x : w.lambda.data()) x = std::uniform_real_distribution<double>(0.1, 3.0)(gen);
  const auto cache = compute_prior_cache(w, f, default_feature_matrix(c.vocabulary->size()));
  for (Topic k = 0; k < 4; ++k) CHECK(cache.alpha(0, k) == cache.alpha(1, k));
}

TEST_CASE("prior cache check flags drift") {
  const auto c = corpus_from(kSmall);
  const auto f = build_label_matrix(c);
  const auto g = default_feature_matrix(c.vocabulary->size());
  const GammaWeights w{Matrix<double>(f.column_count(), 2, 1.5), Matrix<double>(1, 2, 0.5)};
  auto cache = compute_prior_cache(w, f, g);
  CHECK(check_prior_cache(cache, w, f, g).ok);
  cache.alpha(1, 0) *= 1.0 + 1e-6;
  CHECK_FALSE(check_prior_cache(cache, w, f, g).ok);
}

TEST_CASE("save and load round-trip") {
  const auto c = corpus_from(kSmall);
  const auto f = build_label_matrix(c);
  const FeatureMatrix g({{1}, {}, {1, 2}, {2}}, {kDefaultName, "x", "y"});
  auto h = small_hyper();
  h.sampler_mode = SamplerMode::kDense;
  h.table_method = TableMethod::kStirling;
  const auto snap = train(c, f, g, h);
  const auto dir = testing::scratch_dir("roundtrip");
  save_model(snap, dir);
  const auto back = load_model(dir);
  CHECK(back == snap);
  CHECK(back.beta() == snap.beta());
  for (const char* name : {"manifest", "lambda.mat", "delta.mat", "nkv.mat", "vocab.txt",
                           "labels.txt", "features.txt"}) {
    CHECK(std::filesystem::exists(dir / name));
  }
}

TEST_CASE("load errors") {
  const auto c = corpus_from(kSmall);
  const auto snap = train(c, build_label_matrix(c), default_feature_matrix(c.vocabulary->size()),
                          small_hyper());

  SUBCASE("empty directory") {
    CHECK_THROWS_AS(load_model(testing::scratch_dir("empty")), ModelFormatError);
  }
  SUBCASE("tampered topic count") {
    const auto dir = testing::scratch_dir("tampered");
    save_model(snap, dir);
    nlohmann::json manifest;
    std::ifstream(dir / "manifest") >> manifest;
    manifest["topics"] = 4;
    std::ofstream(dir / "manifest") << manifest.dump(2);
    try {
      load_model(dir);
      FAIL("expected ModelFormatError");
    } catch (const ModelFormatError& e) {
      const std::string what = e.what();
      CHECK(what.find('4') != std::string::npos);
      CHECK(what.find('3') != std::string::npos);
    }
  }
  SUBCASE("future format version") {
    const auto dir = testing::scratch_dir("version");
    save_model(snap, dir);
    nlohmann::json manifest;
    std::ifstream(dir / "manifest") >> manifest;
    manifest["format_version"] = kModelFormatVersion + 1;
    std::ofstream(dir / "manifest") << manifest.dump(2);
    CHECK_THROWS_AS(load_model(dir), ModelFormatError);
  }
}

TEST_CASE("word topic table merge adds replica deltas") {
  WordTopicTable base(3, 2);
  base.increment(0, 0);
  base.increment(1, 2);
  WordTopicTable a = base, b = base;
  a.decrement(0, 0);
  a.increment(1, 0);
  b.increment(0, 1);
  WordTopicTable merged = base;
  merged.add_delta(base, a);
  merged.add_delta(base, b);
  merged.rebuild_index();
  CHECK(merged.count(0, 0) == 0);
  CHECK(merged.count(1, 0) == 1);
  CHECK(merged.count(0, 1) == 1);
  CHECK(merged.count(1, 2) == 1);
  CHECK(merged.totals() == std::vector<Count>{1, 2});
  CHECK(merged.nonzero_topics(0).size() == 1);
  CHECK(merged.nonzero_topics(0)[0] == 1);
}
