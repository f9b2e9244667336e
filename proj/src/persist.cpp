#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "metalda/error.hpp"
#include "metalda/model.hpp"

namespace metalda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_real(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

template <typename T>
void write_matrix(const fs::path& path, const Matrix<T>& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      if constexpr (std::is_floating_point_v<T>) {
        out << format_real(m(r, c));
      } else {
        out << m(r, c);
      }
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::ifstream open_required(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelFormatError("missing model file: " + path.string());
  return in;
}

template <typename T>
Matrix<T> read_matrix(const fs::path& path) {
  auto in = open_required(path);
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols)) throw ModelFormatError("bad matrix header in " + path.string());
  Matrix<T> m(rows, cols);
  std::string field;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (!(in >> field)) throw ModelFormatError("truncated matrix " + path.string());
      T value{};
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ModelFormatError("bad value '" + field + "' in " + path.string());
      }
      m(r, c) = value;
    }
  }
  if (in >> field) throw ModelFormatError("trailing data in " + path.string());
  return m;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const fs::path& path) {
  auto in = open_required(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void expect_dim(const char* what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ModelFormatError(std::string(what) + ": manifest says " + std::to_string(want) +
                           ", file has " + std::to_string(got));
  }
}

}  // namespace

void save_model(const ModelSnapshot& s, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& h = s.hyper;
  json manifest = {
      {"format_version", kModelFormatVersion},
      {"topics", s.topics()},
      {"vocab_size", s.vocab_size()},
      {"labels", s.label_names.size()},
      {"features", s.word_features.column_count()},
      {"iteration", s.iteration},
      {"hyperparams",
       {{"topics", h.topics},
        {"mu0", h.mu0},
        {"nu0", h.nu0},
        {"iterations", h.iterations},
        {"burn_in", h.burn_in},
        {"meta_update_period", h.meta_update_period},
        {"seed", h.seed},
        {"sampler_mode", to_string(h.sampler_mode)},
        {"table_method", to_string(h.table_method)},
        {"workers", h.workers},
        {"stirling_max", h.stirling_max},
        {"likelihood_every", h.likelihood_every}}},
  };
  {
    std::ofstream out(dir / "manifest");
    if (!out) throw Error("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
  }
  write_matrix(dir / "lambda.mat", s.weights.lambda);
  write_matrix(dir / "delta.mat", s.weights.delta);
  write_matrix(dir / "nkv.mat", s.n_kv);
  write_lines(dir / "vocab.txt", s.vocabulary);
  write_lines(dir / "labels.txt", s.label_names);
  write_lines(dir / "features.txt", s.word_features.names());

  std::ofstream wf(dir / "word_features.txt");
  for (std::size_t v = 0; v < s.word_features.row_count(); ++v) {
    bool first = true;
    for (MetaIndex c : s.word_features.row(v)) {
      wf << (first ? "" : " ") << c;
      first = false;
    }
    wf << '\n';
  }
  if (!wf) throw Error("failed writing word_features.txt");
}

ModelSnapshot load_model(const fs::path& dir) {
  json manifest;
  {
    auto in = open_required(dir / "manifest");
    try {
      in >> manifest;
    } catch (const json::exception& e) {
      throw ModelFormatError(std::string("unreadable manifest: ") + e.what());
    }
  }
  ModelSnapshot s;
  try {
    if (manifest.at("format_version").get<int>() != kModelFormatVersion) {
      throw ModelFormatError("unsupported model format version " +
                             manifest.at("format_version").dump());
    }
    const auto& h = manifest.at("hyperparams");
    s.hyper.topics = h.at("topics");
    s.hyper.mu0 = h.at("mu0");
    s.hyper.nu0 = h.at("nu0");
    s.hyper.iterations = h.at("iterations");
    s.hyper.burn_in = h.at("burn_in");
    s.hyper.meta_update_period = h.at("meta_update_period");
    s.hyper.seed = h.at("seed");
    s.hyper.sampler_mode = parse_sampler_mode(h.at("sampler_mode"));
    s.hyper.table_method = parse_table_method(h.at("table_method"));
    s.hyper.workers = h.at("workers");
    s.hyper.stirling_max = h.at("stirling_max");
    s.hyper.likelihood_every = h.at("likelihood_every");
    s.iteration = manifest.at("iteration");
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("bad manifest: ") + e.what());
  }
  const std::size_t K = manifest["topics"];
  const std::size_t V = manifest["vocab_size"];
  const std::size_t L_doc = manifest["labels"];
  const std::size_t L_word = manifest["features"];

  s.weights.lambda = read_matrix<double>(dir / "lambda.mat");
  s.weights.delta = read_matrix<double>(dir / "delta.mat");
  s.n_kv = read_matrix<Count>(dir / "nkv.mat");
  s.vocabulary = read_lines(dir / "vocab.txt");
  s.label_names = read_lines(dir / "labels.txt");
  auto feature_names = read_lines(dir / "features.txt");

  expect_dim("topics (hyperparams)", s.hyper.topics, K);
  expect_dim("lambda rows", s.weights.lambda.rows(), L_doc);
  expect_dim("lambda cols", s.weights.lambda.cols(), K);
  expect_dim("delta rows", s.weights.delta.rows(), L_word);
  expect_dim("delta cols", s.weights.delta.cols(), K);
  expect_dim("nkv rows", s.n_kv.rows(), K);
  expect_dim("nkv cols", s.n_kv.cols(), V);
  expect_dim("vocab.txt lines", s.vocabulary.size(), V);
  expect_dim("labels.txt lines", s.label_names.size(), L_doc);
  expect_dim("features.txt lines", feature_names.size(), L_word);

  auto rows_text = read_lines(dir / "word_features.txt");
  expect_dim("word_features.txt lines", rows_text.size(), V);
  std::vector<std::vector<MetaIndex>> rows(V);
  for (std::size_t v = 0; v < V; ++v) {
    std::istringstream line(rows_text[v]);
    MetaIndex c;
    while (line >> c) rows[v].push_back(c);
  }
  try {
    s.word_features = FeatureMatrix(std::move(rows), std::move(feature_names));
  } catch (const DimensionError& e) {
    throw ModelFormatError(std::string("word_features.txt: ") + e.what());
  }

  s.n_k.assign(K, 0);
  for (Topic k = 0; k < K; ++k) {
    for (TokenId v = 0; v < V; ++v) s.n_k[k] += s.n_kv(k, v);
  }
  return s;
}

}  // namespace metalda
