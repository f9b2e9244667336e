#include "metalda/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "metalda/error.hpp"

namespace metalda {

DocScratch::DocScratch(std::size_t topics)
    : counts_(topics, 0), position_(topics, 0) {
  nonzero_.reserve(topics);
}

void DocScratch::load(std::span<const TopicCount> sparse) {
  for (const auto& tc : sparse) {
    counts_[tc.topic] = tc.count;
    position_[tc.topic] = static_cast<std::uint32_t>(nonzero_.size());
    nonzero_.push_back(tc.topic);
  }
}

void DocScratch::store(std::vector<TopicCount>& sparse) {
  std::sort(nonzero_.begin(), nonzero_.end());
  sparse.clear();
  for (Topic k : nonzero_) {
    sparse.push_back({k, counts_[k]});
    counts_[k] = 0;
  }
  nonzero_.clear();
}

void DocScratch::increment(Topic k) {
  if (counts_[k]++ == 0) {
    position_[k] = static_cast<std::uint32_t>(nonzero_.size());
    nonzero_.push_back(k);
  }
}

void DocScratch::decrement(Topic k) {
  if (--counts_[k] == 0) {
    const auto pos = position_[k];
    const Topic last = nonzero_.back();
    nonzero_[pos] = last;
    position_[last] = pos;
    nonzero_.pop_back();
  }
}

double dense_conditional(std::span<const double> alpha_row, std::span<const Count> doc_counts,
                         std::span<const double> beta_v, std::span<const Count> n_v,
                         std::span<const double> beta_sum, std::span<const Count> n_k,
                         std::span<double> out) {
  double total = 0.0;
  const std::size_t K = alpha_row.size();
  for (std::size_t k = 0; k < K; ++k) {
    const double p = (alpha_row[k] + doc_counts[k]) * (beta_v[k] + n_v[k]) /
                     (beta_sum[k] + n_k[k]);
    out[k] = p;
    total += p;
  }
  return total;
}

Topic sample_discrete(std::span<const double> masses, double total, RngStream& rng) {
  double u = rng.uniform() * total;
  const std::size_t n = masses.size();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    u -= masses[k];
    if (u < 0.0) return static_cast<Topic>(k);
  }
  return static_cast<Topic>(n - 1);
}

Topic sample_topic_dense(std::span<const double> alpha_row, std::span<const Count> doc_counts,
                         std::span<const double> beta_v, std::span<const Count> n_v,
                         std::span<const double> beta_sum, std::span<const Count> n_k,
                         std::span<double> scratch, RngStream& rng) {
  const double total =
      dense_conditional(alpha_row, doc_counts, beta_v, n_v, beta_sum, n_k, scratch);
  return sample_discrete(scratch.first(alpha_row.size()), total, rng);
}

SparseBucketSampler::SparseBucketSampler(std::size_t topics)
    : smooth_(topics),
      smooth_block_((topics + kSmoothBlock - 1) / kSmoothBlock),
      docw_(topics),
      coef_(topics),
      word_mass_(topics) {}

void SparseBucketSampler::refresh_block(std::size_t block) {
  const std::size_t lo = block * kSmoothBlock;
  const std::size_t hi = std::min(lo + kSmoothBlock, smooth_.size());
  double sum = 0.0;
  for (std::size_t k = lo; k < hi; ++k) sum += smooth_[k];
  smooth_block_[block] = sum;
}

void SparseBucketSampler::begin_document(std::span<const double> alpha_row,
                                         const DocScratch& doc, std::span<const double> b,
                                         std::span<const double> beta_sum,
                                         std::span<const Count> n_k) {
  alpha_ = alpha_row;
  b_ = b;
  beta_sum_ = beta_sum;
  smooth_sum_ = 0.0;
  doc_sum_ = 0.0;
  const std::size_t K = alpha_row.size();
  for (std::size_t k = 0; k < K; ++k) {
    const double inv = 1.0 / (beta_sum[k] + n_k[k]);
    const Count m = doc.count(static_cast<Topic>(k));
    smooth_[k] = alpha_row[k] * b[k] * inv;
    docw_[k] = m * b[k] * inv;
    coef_[k] = (alpha_row[k] + m) * inv;
    smooth_sum_ += smooth_[k];
    doc_sum_ += docw_[k];
  }
  for (std::size_t block = 0; block < smooth_block_.size(); ++block) refresh_block(block);
}

void SparseBucketSampler::update_topic(Topic k, Count m_dk, Count n_k) {
  const double inv = 1.0 / (beta_sum_[k] + n_k);
  const double old_smooth = smooth_[k];
  smooth_sum_ -= smooth_[k];
  doc_sum_ -= docw_[k];
  smooth_[k] = alpha_[k] * b_[k] * inv;
  docw_[k] = m_dk * b_[k] * inv;
  coef_[k] = (alpha_[k] + m_dk) * inv;
  smooth_sum_ += smooth_[k];
  doc_sum_ += docw_[k];
  smooth_block_[k / kSmoothBlock] += smooth_[k] - old_smooth;
}

BucketMasses SparseBucketSampler::masses(std::span<const Count> n_v,
                                         std::span<const Topic> nonzero_v) const {
  BucketMasses m{smooth_sum_, doc_sum_, 0.0};
  for (Topic k : nonzero_v) m.word += coef_[k] * n_v[k];
  return m;
}

std::vector<double> SparseBucketSampler::probabilities(std::span<const Count> n_v,
                                                       std::span<const Topic> nonzero_v) const {
  std::vector<double> p(smooth_.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = smooth_[k] + docw_[k];
  for (Topic k : nonzero_v) p[k] += coef_[k] * n_v[k];
  const double total = masses(n_v, nonzero_v).total();
  for (auto& x : p) x /= total;
  return p;
}

Topic SparseBucketSampler::sample(const DocScratch& doc, std::span<const Count> n_v,
                                  std::span<const Topic> nonzero_v, RngStream& rng) {
  // two partial sums so consecutive adds do not wait on each other
  const std::size_t nnz = nonzero_v.size();
  double even = 0.0, odd = 0.0;
  std::size_t i = 0;
  for (; i + 1 < nnz; i += 2) {
    const double w0 = coef_[nonzero_v[i]] * n_v[nonzero_v[i]];
    const double w1 = coef_[nonzero_v[i + 1]] * n_v[nonzero_v[i + 1]];
    word_mass_[i] = w0;
    word_mass_[i + 1] = w1;
    even += w0;
    odd += w1;
  }
  if (i < nnz) {
    word_mass_[i] = coef_[nonzero_v[i]] * n_v[nonzero_v[i]];
    even += word_mass_[i];
  }
  const double word_sum = even + odd;
  double u = rng.uniform() * (smooth_sum_ + doc_sum_ + word_sum);

  if (u < word_sum) {
    for (std::size_t j = 0; j + 1 < nnz; ++j) {
      u -= word_mass_[j];
      if (u < 0.0) return nonzero_v[j];
    }
    return nonzero_v.back();
  }
  u -= word_sum;

  const auto doc_nz = doc.nonzero();
  if (u < doc_sum_ && !doc_nz.empty()) {
    for (std::size_t i = 0; i + 1 < doc_nz.size(); ++i) {
      u -= docw_[doc_nz[i]];
      if (u < 0.0) return doc_nz[i];
    }
    return doc_nz.back();
  }
  u -= doc_sum_;

  // block sums first, then the topics inside the chosen block
  const std::size_t blocks = smooth_block_.size();
  std::size_t block = 0;
  for (; block + 1 < blocks; ++block) {
    if (u < smooth_block_[block]) break;
    u -= smooth_block_[block];
  }
  const std::size_t lo = block * kSmoothBlock;
  const std::size_t hi = std::min(lo + kSmoothBlock, smooth_.size());
  for (std::size_t k = lo; k + 1 < hi; ++k) {
    u -= smooth_[k];
    if (u < 0.0) return static_cast<Topic>(k);
  }
  return static_cast<Topic>(hi - 1);
}

std::optional<double> sample_q(double prior_sum, Count total, RngStream& rng) {
  if (total <= 0) return std::nullopt;
  const double q = rng.beta(prior_sum, static_cast<double>(total));
  return std::clamp(q, kMinQ, 1.0);
}

Count sample_table_count(double a, Count count, TableMethod method, RngStream& rng,
                         StirlingTable* stirling) {
  if (count <= 0) return 0;
  if (method == TableMethod::kSimulate) {
    Count t = 1;  // the first customer always opens a table
    for (Count i = 1; i < count; ++i) {
      if (rng.bernoulli(a / (a + i))) ++t;
    }
    return t;
  }
  if (!stirling) throw ContractError("Stirling table method needs a StirlingTable");
  const auto m = static_cast<std::size_t>(count);
  stirling->ensure(m);
  const double log_a = std::log(a);
  double max_lw = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= m; ++t) {
    max_lw = std::max(max_lw, stirling->log_s(m, t) + static_cast<double>(t) * log_a);
  }
  // Second pass samples without materializing the weights.
  double total = 0.0;
  for (std::size_t t = 1; t <= m; ++t) {
    total += std::exp(stirling->log_s(m, t) + static_cast<double>(t) * log_a - max_lw);
  }
  double u = rng.uniform() * total;
  for (std::size_t t = 1; t < m; ++t) {
    u -= std::exp(stirling->log_s(m, t) + static_cast<double>(t) * log_a - max_lw);
    if (u < 0.0) return static_cast<Count>(t);
  }
  return count;
}

double sample_weight(const GammaPosterior& post, RngStream& rng) {
  return std::clamp(rng.gamma(post.shape, post.rate), kMinWeight, kMaxWeight);
}

Matrix<double> fold_in(std::span<const std::vector<TokenId>> docs, const Matrix<double>& alpha,
                       const Matrix<double>& phi_vk, std::size_t iterations, std::uint64_t seed) {
  const std::size_t D = docs.size();
  const std::size_t K = alpha.cols();
  if (alpha.rows() != D) throw DimensionError("fold_in: alpha rows != documents");
  if (phi_vk.cols() != K) throw DimensionError("fold_in: phi and alpha disagree on K");
  Matrix<double> theta(D, K, 0.0);
  const std::size_t keep = (iterations + 1) / 2;

#pragma omp parallel
  {
    std::vector<double> p(K);
    std::vector<Count> m(K);
    std::vector<Topic> z;
#pragma omp for schedule(dynamic, 16)
    for (std::size_t d = 0; d < D; ++d) {
      const auto a = alpha.row(d);
      auto out = theta.row(d);
      double a_sum = 0.0;
      for (double x : a) a_sum += x;
      const auto& tokens = docs[d];
      if (tokens.empty() || keep == 0) {
        for (std::size_t k = 0; k < K; ++k) out[k] = a[k] / a_sum;
        continue;
      }
      RngStream rng(seed, d);
      std::fill(m.begin(), m.end(), 0);
      z.resize(tokens.size());
      for (auto& k : z) {
        k = static_cast<Topic>(rng.uniform_int(K));
        ++m[k];
      }
      const double denom = a_sum + static_cast<double>(tokens.size());
      for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < tokens.size(); ++i) {
          --m[z[i]];
          const auto phi = phi_vk.row(tokens[i]);
          double total = 0.0;
          for (std::size_t k = 0; k < K; ++k) {
            p[k] = (a[k] + m[k]) * phi[k];
            total += p[k];
          }
          z[i] = sample_discrete(p, total, rng);
          ++m[z[i]];
        }
        if (it + keep >= iterations) {
          for (std::size_t k = 0; k < K; ++k) out[k] += (a[k] + m[k]) / denom;
        }
      }
      for (std::size_t k = 0; k < K; ++k) out[k] /= static_cast<double>(keep);
    }
  }
  return theta;
}

}  // namespace metalda
