#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metalda/corpus.hpp"
#include "metalda/meta.hpp"

namespace testing {

inline metalda::Corpus corpus_from(const std::string& tsv) {
  std::istringstream in(tsv);
  return metalda::parse_corpus(in);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("metalda_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<double> dirichlet(std::mt19937_64& gen, const std::vector<double>& alpha) {
  std::vector<double> x(alpha.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    x[i] = std::gamma_distribution<double>(alpha[i], 1.0)(gen);
    sum += x[i];
  }
  if (sum <= 0.0) {
    // every draw underflowed; fall back to the largest prior entry
    x.assign(alpha.size(), 0.0);
    x[std::max_element(alpha.begin(), alpha.end()) - alpha.begin()] = 1.0;
    return x;
  }
  for (auto& v : x) v /= sum;
  return x;
}

inline std::size_t draw(std::mt19937_64& gen, const std::vector<double>& p) {
  return std::discrete_distribution<std::size_t>(p.begin(), p.end())(gen);
}

// One word sampler per topic, built once instead of per token.
inline std::vector<std::discrete_distribution<std::size_t>> topic_samplers(
    const std::vector<std::vector<double>>& phi) {
  std::vector<std::discrete_distribution<std::size_t>> out;
  for (const auto& row : phi) out.emplace_back(row.begin(), row.end());
  return out;
}

inline std::shared_ptr<metalda::Vocabulary> numbered_vocab(std::size_t V) {
  auto vocab = std::make_shared<metalda::Vocabulary>();
  for (std::size_t v = 0; v < V; ++v) vocab->intern("w" + std::to_string(v));
  return vocab;
}

// Documents drawn from the generative model with per-document topic priors
// alpha_d = prod of the label weights. Each document carries exactly one of
// the labels "a"/"b"; label "a" favours the first half of the topics by
// `contrast`, label "b" the second half.
struct LabeledSynthetic {
  metalda::Corpus corpus;
  std::vector<std::vector<double>> phi;
};

inline LabeledSynthetic labeled_synthetic(std::size_t D, std::size_t K, std::size_t V,
                                          std::size_t doc_length, double contrast,
                                          std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  LabeledSynthetic out;
  out.phi.reserve(K);
  for (std::size_t k = 0; k < K; ++k) out.phi.push_back(dirichlet(gen, std::vector<double>(V, 0.05)));
  auto words = topic_samplers(out.phi);
  auto vocab = numbered_vocab(V);
  const double base = 0.1;
  for (std::size_t d = 0; d < D; ++d) {
    const bool first = gen() % 2 == 0;
    std::vector<double> alpha(K);
    for (std::size_t k = 0; k < K; ++k) {
      const bool favoured = (k < K / 2) == first;
      alpha[k] = base * (favoured ? std::sqrt(contrast) : 1.0 / std::sqrt(contrast));
    }
    const auto theta = dirichlet(gen, alpha);
    metalda::Document doc;
    doc.id = "d" + std::to_string(d);
    doc.labels = {first ? "a" : "b"};
    for (std::size_t i = 0; i < doc_length; ++i) {
      doc.tokens.push_back(static_cast<metalda::TokenId>(words[draw(gen, theta)](gen)));
    }
    out.corpus.documents.push_back(std::move(doc));
  }
  out.corpus.vocabulary = vocab;
  return out;
}

// Vocabulary split into K groups; topic k puts most of its mass on group k
// with a Zipf-like profile inside the group, so a small training sample
// leaves the tail unseen. Feature "g<k>" marks membership of group k.
struct GroupedSynthetic {
  metalda::Corpus corpus;
  std::vector<std::string> group_feature;  // per token
};

inline GroupedSynthetic grouped_synthetic(std::size_t D, std::size_t K, std::size_t words_per_group,
                                          std::size_t doc_length, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const std::size_t V = K * words_per_group;
  std::vector<std::vector<double>> phi(K, std::vector<double>(V, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t v = 0; v < V; ++v) {
      const std::size_t g = v / words_per_group;
      const double rank = static_cast<double>(v % words_per_group) + 1.0;
      phi[k][v] = (g == k ? 1.0 : 0.01) / rank;
    }
  }
  auto words = topic_samplers(phi);
  GroupedSynthetic out;
  auto vocab = numbered_vocab(V);
  for (std::size_t v = 0; v < V; ++v) out.group_feature.push_back("g" + std::to_string(v / words_per_group));
  for (std::size_t d = 0; d < D; ++d) {
    const auto theta = dirichlet(gen, std::vector<double>(K, 0.1));
    metalda::Document doc;
    doc.id = "d" + std::to_string(d);
    for (std::size_t i = 0; i < doc_length; ++i) {
      doc.tokens.push_back(static_cast<metalda::TokenId>(words[draw(gen, theta)](gen)));
    }
    out.corpus.documents.push_back(std::move(doc));
  }
  out.corpus.vocabulary = vocab;
  return out;
}

// Feature matrix for `tokens` from a token -> feature-name lookup.
template <typename Lookup>
metalda::FeatureMatrix features_for(const std::vector<std::string>& tokens,
                                    const std::vector<std::string>& names, Lookup feature_of) {
  std::vector<std::vector<metalda::MetaIndex>> rows;
  for (const auto& t : tokens) {
    const auto name = feature_of(t);
    const auto it = std::find(names.begin(), names.end(), name);
    rows.push_back({static_cast<metalda::MetaIndex>(it - names.begin())});
  }
  return metalda::FeatureMatrix(std::move(rows), names);
}

}  // namespace testing
