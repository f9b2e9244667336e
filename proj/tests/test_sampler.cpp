#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <omp.h>

#include "metalda/error.hpp"
#include "metalda/sampler.hpp"
#include "metalda/stirling.hpp"

using namespace metalda;

namespace {

// Exact unsigned Stirling numbers of the first kind (fit in 64 bits for m <= 20).
std::vector<std::vector<unsigned long long>> exact_stirling(std::size_t max_m) {
  std::vector<std::vector<unsigned long long>> s(max_m + 1,
                                                  std::vector<unsigned long long>(max_m + 1, 0));
  s[0][0] = 1;
  for (std::size_t m = 1; m <= max_m; ++m) {
    for (std::size_t t = 1; t <= m; ++t) s[m][t] = s[m - 1][t - 1] + (m - 1) * s[m - 1][t];
  }
  return s;
}

std::vector<double> normalized(std::vector<double> p) {
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& x : p) x /= sum;
  return p;
}

std::vector<double> dense_probabilities(const std::vector<double>& alpha,
                                        const std::vector<Count>& m,
                                        const std::vector<double>& beta_v,
                                        const std::vector<Count>& n_v,
                                        const std::vector<double>& beta_sum,
                                        const std::vector<Count>& n_k) {
  std::vector<double> out(alpha.size());
  dense_conditional(alpha, m, beta_v, n_v, beta_sum, n_k, out);
  return normalized(out);
}

std::vector<double> empirical(const std::vector<std::size_t>& hist, std::size_t n) {
  std::vector<double> p(hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) p[i] = static_cast<double>(hist[i]) / n;
  return p;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return tv / 2.0;
}

}  // namespace

TEST_CASE("dense conditional worked cases") {
  const std::vector<double> beta_v{0.5, 0.5}, beta_sum{1.0, 1.0};
  const std::vector<Count> zero{0, 0};
  auto p = dense_probabilities({1, 1}, zero, beta_v, zero, beta_sum, zero);
  CHECK(p[0] == doctest::Approx(0.5));
  p = dense_probabilities({1, 1}, {3, 0}, beta_v, zero, beta_sum, zero);
  CHECK(p[0] == doctest::Approx(0.8));
  CHECK(p[1] == doctest::Approx(0.2));

  RngStream rng(1);
  std::vector<double> scratch(1);
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_topic_dense(std::vector<double>{1.0}, std::vector<Count>{4},
                             std::vector<double>{0.1}, std::vector<Count>{2},
                             std::vector<double>{1.0}, std::vector<Count>{9}, scratch, rng) == 0);
  }
}

TEST_CASE("doc scratch keeps the non-zero list exact") {
  DocScratch doc(6);
  std::vector<TopicCount> sparse{{1, 2}, {4, 1}};
  doc.load(sparse);
  std::mt19937_64 gen(4);
  std::vector<Count> ref(6, 0);
  ref[1] = 2;
  ref[4] = 1;
  for (int step = 0; step < 2000; ++step) {
    const Topic k = static_cast<Topic>(gen() % 6);
    if (ref[k] > 0 && gen() % 2) {
      doc.decrement(k);
      --ref[k];
    } else {
      doc.increment(k);
      ++ref[k];
    }
    std::size_t nz = 0;
    for (Topic j = 0; j < 6; ++j) {
      CHECK(doc.count(j) == ref[j]);
      nz += ref[j] > 0;
    }
    CHECK(doc.nonzero().size() == nz);
  }
  doc.store(sparse);
  for (std::size_t i = 1; i < sparse.size(); ++i) CHECK(sparse[i - 1].topic < sparse[i].topic);
  for (Topic j = 0; j < 6; ++j) CHECK(doc.count(j) == 0);
}

TEST_CASE("bucket masses sum to the dense normalizer") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 1 + gen() % 12;
    std::uniform_real_distribution<double> pos(0.05, 3.0);
    std::vector<double> alpha(K), b(K), beta_sum(K);
    std::vector<Count> m(K), n_v(K), n_k(K);
    std::vector<Topic> nz_v;
    DocScratch doc(K);
    for (std::size_t k = 0; k < K; ++k) {
      alpha[k] = pos(gen);
      b[k] = pos(gen);
      beta_sum[k] = b[k] * 50;
      m[k] = gen() % 3 == 0 ? static_cast<Count>(gen() % 5) : 0;
      n_v[k] = gen() % 2 ? static_cast<Count>(gen() % 7) : 0;
      n_k[k] = n_v[k] + static_cast<Count>(gen() % 30);
      if (n_v[k] > 0) nz_v.push_back(static_cast<Topic>(k));
      for (Count i = 0; i < m[k]; ++i) doc.increment(static_cast<Topic>(k));
    }
    SparseBucketSampler buckets(K);
    buckets.begin_document(alpha, doc, b, beta_sum, n_k);
    const auto masses = buckets.masses(n_v, nz_v);
    std::vector<double> out(K);
    const double dense = dense_conditional(alpha, m, b, n_v, beta_sum, n_k, out);
    CHECK(masses.total() == doctest::Approx(dense).epsilon(1e-12));
    if (std::accumulate(m.begin(), m.end(), 0) == 0) CHECK(masses.document == 0.0);
    if (nz_v.empty()) CHECK(masses.word == 0.0);
  }
}

TEST_CASE("bucket draws follow the bucket probabilities") {
  // 40 topics spans two full smoothing blocks and a partial one
  const std::size_t K = 40;
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> pos(0.2, 2.0);
  std::vector<double> alpha(K), b(K), beta_sum(K);
  std::vector<Count> n_v(K, 0), n_k(K);
  std::vector<Topic> nz_v;
  DocScratch doc(K);
  for (std::size_t k = 0; k < K; ++k) {
    alpha[k] = pos(gen);
    b[k] = pos(gen);
    beta_sum[k] = b[k] * 20;
    n_k[k] = 10 + static_cast<Count>(gen() % 10);
    if (k % 7 == 3) {
      n_v[k] = 2;
      nz_v.push_back(static_cast<Topic>(k));
    }
    if (k % 5 == 1) doc.increment(static_cast<Topic>(k));
  }
  SparseBucketSampler buckets(K);
  buckets.begin_document(alpha, doc, b, beta_sum, n_k);
  for (Topic k : {Topic{17}, Topic{39}}) {
    doc.increment(k);
    ++n_k[k];
    buckets.update_topic(k, doc.count(k), n_k[k]);
  }
  const auto p = buckets.probabilities(n_v, nz_v);
  RngStream rng(4);
  std::vector<double> freq(K, 0.0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) freq[buckets.sample(doc, n_v, nz_v, rng)] += 1.0 / n;
  double tv = 0.0;
  for (std::size_t k = 0; k < K; ++k) tv += std::abs(freq[k] - p[k]) / 2.0;
  CHECK(tv < 0.01);
  CHECK(freq[39] > 0.0);
}

TEST_CASE("Beta auxiliary draws") {
  RngStream rng(3);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += *sample_q(2.0, 2, rng);
  CHECK(std::abs(sum / n - 0.5) < 0.01);
  CHECK(*sample_q(1e9, 1, rng) > 0.999);
  CHECK_FALSE(sample_q(2.0, 0, rng).has_value());
  for (int i = 0; i < 1000; ++i) {
    const double q = *sample_q(1e-3, 500, rng);
    CHECK(q >= kMinQ);
    CHECK(q <= 1.0);
  }
}

TEST_CASE("table counts: edge cases and bounds") {
  RngStream rng(8);
  StirlingTable table(200);
  for (auto method : {TableMethod::kSimulate, TableMethod::kStirling}) {
    CHECK(sample_table_count(0.7, 0, method, rng, &table) == 0);
    for (int i = 0; i < 50; ++i) CHECK(sample_table_count(0.01, 1, method, rng, &table) == 1);
    std::mt19937_64 gen(2);
    for (int i = 0; i < 2000; ++i) {
      const Count m = 1 + static_cast<Count>(gen() % 60);
      const double a = std::exp(std::uniform_real_distribution<double>(-6, 6)(gen));
      const Count t = sample_table_count(a, m, method, rng, &table);
      CHECK(t >= 1);
      CHECK(t <= m);
    }
  }
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += sample_table_count(1.0, 2, TableMethod::kSimulate, rng) == 1;
  CHECK(std::abs(static_cast<double>(ones) / n - 0.5) < 0.01);

  CHECK_THROWS_AS(sample_table_count(1.0, 3, TableMethod::kStirling, rng, nullptr), ContractError);
  StirlingTable small(10);
  CHECK_THROWS_AS(sample_table_count(1.0, 11, TableMethod::kStirling, rng, &small), Error);
}

TEST_CASE("table count distribution matches Stirling weights for a = 2.5, m = 7") {
  const auto s = exact_stirling(7);
  std::vector<double> exact(8);
  for (std::size_t t = 0; t <= 7; ++t) exact[t] = static_cast<double>(s[7][t]) * std::pow(2.5, t);
  exact = normalized(exact);
  RngStream rng(21);
  StirlingTable table;
  for (auto method : {TableMethod::kSimulate, TableMethod::kStirling}) {
    std::vector<std::size_t> hist(8, 0);
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) ++hist[sample_table_count(2.5, 7, method, rng, &table)];
    CHECK(total_variation(empirical(hist, n), exact) < 0.02);
  }
}

TEST_CASE("log Stirling table matches exact integers") {
  const auto s = exact_stirling(20);
  StirlingTable table(50);
  table.ensure(20);
  for (std::size_t m = 1; m <= 20; ++m) {
    CHECK(std::isinf(table.log_s(m, 0)));
    for (std::size_t t = 1; t <= m; ++t) {
      const double exact = std::log(static_cast<double>(s[m][t]));
      CHECK(std::abs(table.log_s(m, t) - exact) <= 1e-12 * std::max(1.0, std::abs(exact)));
    }
  }
  CHECK(table.log_s(0, 0) == 0.0);
  CHECK_THROWS_AS(table.ensure(51), Error);
  table.ensure(50);
  CHECK(table.rows() == 51);
}

TEST_CASE("Gamma posterior hand cases") {
  auto lambda = GammaPosterior::prior(1.0);
  lambda.add_tables(3);
  lambda.add_exposure(2.0, 1.0);  // alpha / lambda = 2, q = e^-1
  CHECK(lambda.shape == 4.0);
  CHECK(lambda.rate == 3.0);
  CHECK(lambda.mean() == doctest::Approx(4.0 / 3.0));

  auto delta = GammaPosterior::prior(1.0);
  delta.add_tables(2);
  delta.add_exposure(0.5, 2.0);  // beta / delta = 0.5, q' = e^-2
  CHECK(delta.shape == 3.0);
  CHECK(delta.rate == 2.0);
  CHECK(delta.mean() == doctest::Approx(1.5));

  // no tables and q = 1 leave the prior untouched
  auto flat = GammaPosterior::prior(2.5);
  flat.add_tables(0);
  flat.add_exposure(7.0, -std::log(1.0));
  CHECK(flat.shape == 2.5);
  CHECK(flat.rate == 2.5);
}

TEST_CASE("weight draws follow the posterior mean and stay clamped") {
  RngStream rng(13);
  const GammaPosterior post{4.0, 3.0};
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_weight(post, rng);
  CHECK(std::abs(sum / n - 4.0 / 3.0) < 0.02);
  for (int i = 0; i < 1000; ++i) {
    const double tiny = sample_weight({1e-3, 1e6}, rng);
    CHECK(tiny >= kMinWeight);
    const double huge = sample_weight({1e3, 1e-12}, rng);
    CHECK(huge <= kMaxWeight);
  }
}

TEST_CASE("rng streams are reproducible") {
  RngStream a(5, 2), b(5, 2), c(5, 3);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    differs |= x != c.uniform();
  }
  CHECK(differs);
}

TEST_CASE("fold-in edge cases") {
  Matrix<double> alpha(2, 3);
  alpha(0, 0) = 1.0;
  alpha(0, 1) = 2.0;
  alpha(0, 2) = 1.0;
  alpha(1, 0) = alpha(1, 1) = alpha(1, 2) = 0.5;
  const Matrix<double> phi(4, 3, 0.25);
  const std::vector<std::vector<TokenId>> docs{{}, {0, 1, 2}};
  const auto theta = fold_in(docs, alpha, phi, 10, 1);
  CHECK(theta(0, 0) == doctest::Approx(0.25));
  CHECK(theta(0, 1) == doctest::Approx(0.5));
  for (std::size_t d = 0; d < 2; ++d) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 3; ++k) sum += theta(d, k);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  const Matrix<double> one_topic_alpha(1, 1, 0.3);
  const Matrix<double> one_topic_phi(4, 1, 0.25);
  const std::vector<std::vector<TokenId>> one{{1, 2, 3}};
  CHECK(fold_in(one, one_topic_alpha, one_topic_phi, 20, 4)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("fold-in under symmetric prior and uniform topics is uniform on average") {
  const std::size_t D = 10000, K = 4;
  const Matrix<double> alpha(D, K, 0.5);
  const Matrix<double> phi(10, K, 0.1);
  std::vector<std::vector<TokenId>> docs(D, std::vector<TokenId>{0, 3, 5, 7, 9, 1});
  const auto theta = fold_in(docs, alpha, phi, 20, 99);
  for (std::size_t k = 0; k < K; ++k) {
    double mean = 0.0;
    for (std::size_t d = 0; d < D; ++d) mean += theta(d, k);
    mean /= D;
    CHECK(std::abs(mean - 1.0 / K) < 0.02);
  }
}

TEST_CASE("fold-in does not depend on the thread count") {
  const std::size_t D = 40, K = 5;
  std::mt19937_64 gen(6);
  Matrix<double> alpha(D, K), phi(30, K);
  for (auto& x : alpha.data()) x = std::uniform_real_distribution<double>(0.1, 2)(gen);
  for (auto& x : phi.data()) x = std::uniform_real_distribution<double>(0.01, 1)(gen);
  std::vector<std::vector<TokenId>> docs(D);
  for (auto& doc : docs) {
    doc.resize(gen() % 20);
    for (auto& t : doc) t = static_cast<TokenId>(gen() % 30);
  }
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto serial = fold_in(docs, alpha, phi, 30, 8);
  omp_set_num_threads(4);
  const auto parallel = fold_in(docs, alpha, phi, 30, 8);
  omp_set_num_threads(saved);
  CHECK(serial == parallel);
}
