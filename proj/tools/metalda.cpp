#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metalda/corpus.hpp"
#include "metalda/error.hpp"
#include "metalda/eval.hpp"
#include "metalda/meta.hpp"
#include "metalda/model.hpp"
#include "metalda/sampler.hpp"
#include "metalda/trainer.hpp"

namespace fs = std::filesystem;
using namespace metalda;

namespace {

std::string real(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

// Writes to a file, or stdout when the path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) {
      fs::create_directories(parent);
    }
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw Error("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void close() {
    if (file_) {
      file_->close();
      if (!*file_) throw Error("failed writing output");
    }
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct HyperFlags {
  Hyperparams h;
  std::string sampler_mode = "auto";
  std::string table_method = "simulate";

  void add(CLI::App& app) {
    app.add_option("--topics", h.topics, "number of topics K")->capture_default_str();
    app.add_option("--mu0", h.mu0, "Gamma prior on label weights")->capture_default_str();
    app.add_option("--nu0", h.nu0, "Gamma prior on feature weights")->capture_default_str();
    app.add_option("--iterations", h.iterations)->capture_default_str();
    app.add_option("--burn_in,--burn-in", h.burn_in,
                   "iterations before prior updates start")
        ->capture_default_str();
    app.add_option("--meta_update_period,--meta-update-period", h.meta_update_period)
        ->capture_default_str();
    app.add_option("--seed", h.seed)->capture_default_str();
    app.add_option("--sampler_mode,--sampler-mode", sampler_mode)
        ->check(CLI::IsMember({"auto", "sparse", "dense"}))
        ->capture_default_str();
    app.add_option("--table_method,--table-method", table_method)
        ->check(CLI::IsMember({"simulate", "stirling"}))
        ->capture_default_str();
    app.add_option("--workers", h.workers)->capture_default_str();
    app.add_option("--stirling_max,--stirling-max", h.stirling_max)->capture_default_str();
    app.add_option("--likelihood_every,--likelihood-every", h.likelihood_every)
        ->capture_default_str();
  }

  Hyperparams resolve() {
    h.sampler_mode = parse_sampler_mode(sampler_mode);
    h.table_method = parse_table_method(table_method);
    h.validate();
    return h;
  }
};

// Config files hold bare `key=value` lines; keys are attributed to whichever
// subcommand is being run.
class FlatConfig : public CLI::ConfigINI {
 public:
  explicit FlatConfig(const CLI::App* app) : app_(app) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    auto items = CLI::ConfigINI::from_config(in);
    const auto subs = app_->get_subcommands();
    if (subs.empty()) return items;
    for (auto& item : items) {
      if (item.parents.empty()) item.parents = {subs.front()->get_name()};
    }
    return items;
  }

 private:
  const CLI::App* app_;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// Test documents re-expressed in the model vocabulary; unknown tokens dropped.
std::vector<std::vector<TokenId>> to_model_vocab(const Corpus& corpus,
                                                 const ModelSnapshot& model) {
  std::unordered_map<std::string, TokenId> index;
  for (TokenId v = 0; v < model.vocabulary.size(); ++v) index.emplace(model.vocabulary[v], v);
  std::vector<std::vector<TokenId>> docs;
  for (const auto& doc : corpus.documents) {
    auto& out = docs.emplace_back();
    for (TokenId v : doc.tokens) {
      if (auto it = index.find(corpus.vocabulary->token(v)); it != index.end()) {
        out.push_back(it->second);
      }
    }
  }
  return docs;
}

LabelMatrix test_labels(const Corpus& corpus, const ModelSnapshot& model,
                        const std::string& source) {
  if (source == "default-only") {
    return LabelMatrix(std::vector<std::vector<MetaIndex>>(corpus.size()), model.label_names);
  }
  return build_label_matrix(corpus, model.label_names);
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, out, labels = "corpus", features = "default-only";
  std::string embeddings, feature_file;
  std::uint32_t min_df = 5;
  double max_df_ratio = 0.95;
  bool verbose = false;
  HyperFlags hyper;
};

int cmd_train(const TrainArgs& a, const Hyperparams& hyper) {
  const auto start = std::chrono::steady_clock::now();

  PruneStats prune;
  Corpus corpus = prune_vocabulary(parse_corpus_file(a.corpus), a.min_df, a.max_df_ratio, &prune);
  const auto& vocab = *corpus.vocabulary;

  LabelMatrix labels = a.labels == "default-only" ? default_label_matrix(corpus.size())
                                                  : build_label_matrix(corpus);
  FeatureMatrix features;
  std::size_t tokens_without_features = 0;
  if (!a.embeddings.empty()) {
    const auto table = load_embeddings_file(a.embeddings);
    features = binarize_embeddings(table, vocab);
    for (const auto& t : vocab.tokens()) tokens_without_features += table.find(t) == nullptr;
  } else if (!a.feature_file.empty()) {
    auto loaded = load_feature_matrix_file(a.feature_file, vocab.tokens());
    features = std::move(loaded.matrix);
  } else {
    features = default_feature_matrix(vocab.size());
  }

  fs::create_directories(a.out);
  std::ofstream progress(fs::path(a.out) / "progress.log");
  std::ofstream likelihood(fs::path(a.out) / "likelihood.log");
  progress << "iter\tseconds\ttokens_per_sec\n";
  likelihood << "iter\tlog_likelihood_per_token\n";

  Trainer trainer(corpus, labels, features, hyper);
  trainer.run([&](const IterationLog& it) {
    progress << it.iteration << '\t' << real(it.seconds) << '\t' << real(it.tokens_per_sec)
             << '\n';
    if (!std::isnan(it.log_likelihood)) {
      likelihood << it.iteration << '\t' << real(it.log_likelihood) << '\n';
      if (a.verbose) {
        std::cerr << "iter " << it.iteration << " loglik " << it.log_likelihood << '\n';
      }
    }
  });
  save_model(trainer.snapshot(), a.out);

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream stats(fs::path(a.out) / "stats.txt");
  stats << "documents=" << prune.documents << '\n'
        << "vocabulary_before_prune=" << prune.vocabulary_before << '\n'
        << "vocabulary=" << prune.vocabulary_after << '\n'
        << "tokens=" << corpus.token_count() << '\n'
        << "tokens_removed=" << prune.tokens_removed << '\n'
        << "empty_documents=" << prune.empty_documents << '\n'
        << "labels=" << labels.column_count() << '\n'
        << "features=" << features.column_count() << '\n'
        << "tokens_without_features=" << tokens_without_features << '\n'
        << "sampler=" << (trainer.sparse() ? "sparse" : "dense") << '\n'
        << "iterations=" << trainer.iteration() << '\n'
        << "seconds=" << real(seconds) << '\n';
  if (!progress || !likelihood || !stats) throw Error("failed writing training logs");
  return 0;
}

struct InferArgs {
  std::string model, corpus, out, labels = "corpus";
  std::size_t fold_iterations = kDefaultFoldIterations;
  std::uint64_t seed = 1;
};

int cmd_infer(const InferArgs& a) {
  const auto model = load_model(a.model);
  const auto corpus = parse_corpus_file(a.corpus);
  const auto docs = to_model_vocab(corpus, model);
  const auto phi_vk =
      predictive_phi(model, FeatureMatrix({}, model.word_features.names()));
  const auto theta = fold_in(docs, test_alpha(test_labels(corpus, model, a.labels), model),
                             phi_vk, a.fold_iterations, a.seed);
  Output out(a.out);
  for (std::size_t d = 0; d < theta.rows(); ++d) {
    out.stream() << corpus.documents[d].id << '\t';
    for (std::size_t k = 0; k < theta.cols(); ++k) {
      out.stream() << (k ? " " : "") << real(theta(d, k));
    }
    out.stream() << '\n';
  }
  out.close();
  return 0;
}

struct PerplexityArgs {
  std::string model, test, out, labels = "corpus";
  std::string embeddings, feature_file;
  bool include_unseen = false;
  std::size_t fold_iterations = kDefaultFoldIterations;
  std::uint64_t seed = 1;
};

FeatureMatrix unseen_features(const PerplexityArgs& a, const ModelSnapshot& model,
                              const std::vector<std::string>& unseen) {
  const auto& names = model.word_features.names();
  if (!a.embeddings.empty()) {
    const auto table = load_embeddings_file(a.embeddings);
    const auto expected = binarized_feature_names(table.dimension);
    if (expected != names) {
      throw DimensionError("embeddings give " + std::to_string(expected.size()) +
                           " features, model has " + std::to_string(names.size()));
    }
    return binarize_embeddings(table, unseen);
  }
  if (!a.feature_file.empty()) {
    return load_feature_matrix_file(a.feature_file, unseen, names).matrix;
  }
  return FeatureMatrix(std::vector<std::vector<MetaIndex>>(unseen.size()), names);
}

int cmd_perplexity(const PerplexityArgs& a) {
  const auto model = load_model(a.model);
  const auto test = parse_corpus_file(a.test);
  const auto labels = test_labels(test, model, a.labels);
  EvalReport report;
  if (a.include_unseen) {
    const auto unseen = collect_unseen_tokens(test, model);
    report = perplexity_including_unseen(test, labels, unseen, unseen_features(a, model, unseen),
                                         model, a.fold_iterations, a.seed);
  } else {
    report = perplexity_excluding_unseen(test, labels, model, a.fold_iterations, a.seed);
  }
  Output out(a.out);
  out.stream() << "mode=" << (a.include_unseen ? "including_unseen" : "excluding_unseen") << '\n'
               << "perplexity=" << real(report.perplexity) << '\n'
               << "n_eval_tokens=" << report.n_eval_tokens << '\n'
               << "n_unseen_tokens=" << report.n_unseen_tokens << '\n'
               << "unseen_types=" << report.unseen_types << '\n';
  out.close();
  return 0;
}

struct CoherenceArgs {
  std::string model, cooc, out;
  std::size_t top = 10;
  std::size_t top_topics = 20;
};

int cmd_coherence(const CoherenceArgs& a) {
  const auto model = load_model(a.model);
  std::ifstream in(a.cooc);
  if (!in) throw Error("cannot read " + a.cooc);
  const auto stats = load_cooccurrence(in);
  const auto report = coherence(model, stats, a.top, a.top_topics);
  if (report.missing_word_pairs > 0) {
    std::cerr << "warning: " << report.missing_word_pairs
              << " word pairs involve a token absent from the reference counts\n";
  }
  Output out(a.out);
  for (std::size_t k = 0; k < report.topics.size(); ++k) {
    out.stream() << "topic" << k << "_npmi_sum=" << real(report.topics[k].sum) << '\n'
                 << "topic" << k << "_npmi_mean=" << real(report.topics[k].mean) << '\n';
  }
  out.stream() << "npmi_mean_all=" << real(report.mean_all) << '\n'
               << "npmi_mean_top" << a.top_topics << '=' << real(report.mean_top) << '\n'
               << "missing_word_pairs=" << report.missing_word_pairs << '\n';
  out.close();
  return 0;
}

struct TopicsArgs {
  std::string model, out;
  std::size_t top = 10;
};

int cmd_topics(const TopicsArgs& a) {
  const auto model = load_model(a.model);
  const auto phi = point_estimate_phi(model);
  Output out(a.out);
  for (Topic k = 0; k < model.topics(); ++k) {
    const auto ids = top_word_ids(phi, k, a.top);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out.stream() << (i ? " " : "") << model.vocabulary[ids[i]];
    }
    out.stream() << '\n';
  }
  out.close();
  return 0;
}

struct BinarizeArgs {
  std::string embeddings, vocab, out;
};

int cmd_binarize(const BinarizeArgs& a) {
  const auto table = load_embeddings_file(a.embeddings);
  const auto tokens = read_lines(a.vocab);
  const auto g = binarize_embeddings(table, tokens);
  Output out(a.out);
  write_feature_file(out.stream(), g, tokens);
  out.close();
  return 0;
}

struct CoocArgs {
  std::string reference, model, out;
  std::size_t window = 10;
};

int cmd_build_cooc(const CoocArgs& a) {
  const auto reference = parse_corpus_file(a.reference);
  std::vector<std::string> targets;
  if (!a.model.empty()) targets = load_model(a.model).vocabulary;
  const auto stats = build_cooccurrence(reference, a.window, targets);
  Output out(a.out);
  save_cooccurrence(out.stream(), stats);
  out.close();
  return 0;
}

struct SplitArgs {
  std::string corpus, train_out, test_out;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
  std::uint32_t min_df = 5;
  double max_df_ratio = 0.95;
};

int cmd_split(const SplitArgs& a) {
  // prune on the whole corpus so train and test share one vocabulary
  const auto pruned = prune_vocabulary(parse_corpus_file(a.corpus), a.min_df, a.max_df_ratio);
  const auto [train, test] = split_train_test(pruned, a.train_fraction, a.seed);
  Output train_out(a.train_out);
  write_corpus(train_out.stream(), train);
  train_out.close();
  Output test_out(a.test_out);
  write_corpus(test_out.stream(), test);
  test_out.close();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaLDA topic model: training, inference and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  app.config_formatter(std::make_shared<FlatConfig>(&app));
  app.allow_config_extras(CLI::config_extras_mode::error);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model and save it to a directory");
  train_cmd->add_option("--corpus", train.corpus, "training corpus (TSV)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "model output directory")->required();
  train_cmd->add_option("--labels", train.labels, "document label source")
      ->check(CLI::IsMember({"corpus", "default-only"}))
      ->capture_default_str();
  auto* features_opt = train_cmd->add_option("--features", train.features)
                           ->check(CLI::IsMember({"default-only"}));
  auto* emb_opt = train_cmd->add_option("--embeddings", train.embeddings,
                                        "binarize word features from embeddings")
                      ->check(CLI::ExistingFile);
  auto* ff_opt = train_cmd->add_option("--feature_file,--feature-file", train.feature_file,
                                       "binary word features (token<TAB>feat,feat)")
                     ->check(CLI::ExistingFile);
  emb_opt->excludes(ff_opt)->excludes(features_opt);
  ff_opt->excludes(features_opt);
  train_cmd->add_option("--min_df,--min-df", train.min_df)->capture_default_str();
  train_cmd->add_option("--max_df_ratio,--max-df-ratio", train.max_df_ratio)
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train_cmd->add_flag("--verbose", train.verbose);
  train.hyper.add(*train_cmd);

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "fold in documents and write topic proportions");
  infer_cmd->add_option("--model", infer.model)->required()->check(CLI::ExistingDirectory);
  infer_cmd->add_option("--corpus", infer.corpus)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", infer.out, "output file (default stdout)");
  infer_cmd->add_option("--labels", infer.labels)
      ->check(CLI::IsMember({"corpus", "default-only"}))
      ->capture_default_str();
  infer_cmd->add_option("--fold_iterations,--fold-iterations", infer.fold_iterations)
      ->capture_default_str();
  infer_cmd->add_option("--seed", infer.seed)->capture_default_str();

  PerplexityArgs ppl;
  auto* ppl_cmd = app.add_subcommand("perplexity", "held-out document-completion perplexity");
  ppl_cmd->add_option("--model", ppl.model)->required()->check(CLI::ExistingDirectory);
  ppl_cmd->add_option("--test", ppl.test)->required()->check(CLI::ExistingFile);
  ppl_cmd->add_option("--out", ppl.out, "report file (default stdout)");
  ppl_cmd->add_option("--labels", ppl.labels)
      ->check(CLI::IsMember({"corpus", "default-only"}))
      ->capture_default_str();
  ppl_cmd->add_flag("--include_unseen,--include-unseen", ppl.include_unseen,
                    "keep test tokens missing from the training vocabulary");
  auto* ppl_emb = ppl_cmd->add_option("--embeddings", ppl.embeddings,
                                      "features for unseen tokens from embeddings")
                      ->check(CLI::ExistingFile);
  auto* ppl_ff = ppl_cmd->add_option("--feature_file,--feature-file", ppl.feature_file,
                                     "features for unseen tokens")
                     ->check(CLI::ExistingFile);
  ppl_emb->excludes(ppl_ff);
  ppl_cmd->add_option("--fold_iterations,--fold-iterations", ppl.fold_iterations)
      ->capture_default_str();
  ppl_cmd->add_option("--seed", ppl.seed)->capture_default_str();

  CoherenceArgs coh;
  auto* coh_cmd = app.add_subcommand("coherence", "NPMI topic coherence");
  coh_cmd->add_option("--model", coh.model)->required()->check(CLI::ExistingDirectory);
  coh_cmd->add_option("--cooc", coh.cooc, "co-occurrence counts from build-cooc")
      ->required()
      ->check(CLI::ExistingFile);
  coh_cmd->add_option("--out", coh.out, "report file (default stdout)");
  coh_cmd->add_option("--top", coh.top, "top words per topic")->capture_default_str();
  coh_cmd->add_option("--top_topics,--top-topics", coh.top_topics)->capture_default_str();

  TopicsArgs top;
  auto* top_cmd = app.add_subcommand("topics", "top words of every topic");
  top_cmd->add_option("--model", top.model)->required()->check(CLI::ExistingDirectory);
  top_cmd->add_option("--top", top.top)->capture_default_str();
  top_cmd->add_option("--out", top.out, "output file (default stdout)");

  BinarizeArgs bin;
  auto* bin_cmd = app.add_subcommand("binarize", "binary word features from embeddings");
  bin_cmd->add_option("--embeddings", bin.embeddings)->required()->check(CLI::ExistingFile);
  bin_cmd->add_option("--vocab", bin.vocab, "one token per line")
      ->required()
      ->check(CLI::ExistingFile);
  bin_cmd->add_option("--out", bin.out, "feature file (default stdout)");

  CoocArgs cooc;
  auto* cooc_cmd = app.add_subcommand("build-cooc", "sliding-window co-occurrence counts");
  cooc_cmd->add_option("--reference", cooc.reference, "reference corpus (TSV)")
      ->required()
      ->check(CLI::ExistingFile);
  cooc_cmd->add_option("--model", cooc.model, "count only this model's vocabulary")
      ->check(CLI::ExistingDirectory);
  cooc_cmd->add_option("--window", cooc.window)->capture_default_str();
  cooc_cmd->add_option("--out", cooc.out, "output file (default stdout)");

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "seeded train/test document split");
  split_cmd->add_option("--corpus", split.corpus)->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--train_out,--train-out", split.train_out)->required();
  split_cmd->add_option("--test_out,--test-out", split.test_out)->required();
  split_cmd->add_option("--train_fraction,--train-fraction", split.train_fraction)
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  split_cmd->add_option("--seed", split.seed)->capture_default_str();
  split_cmd->add_option("--min_df,--min-df", split.min_df)->capture_default_str();
  split_cmd->add_option("--max_df_ratio,--max-df-ratio", split.max_df_ratio)
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Hyperparams hyper;
  if (*train_cmd) {
    try {
      hyper = train.hyper.resolve();
    } catch (const Error& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return 2;
    }
  }

  try {
    if (*train_cmd) return cmd_train(train, hyper);
    if (*infer_cmd) return cmd_infer(infer);
    if (*ppl_cmd) return cmd_perplexity(ppl);
    if (*coh_cmd) return cmd_coherence(coh);
    if (*top_cmd) return cmd_topics(top);
    if (*bin_cmd) return cmd_binarize(bin);
    if (*cooc_cmd) return cmd_build_cooc(cooc);
    if (*split_cmd) return cmd_split(split);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
