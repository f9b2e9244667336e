#include "metalda/meta.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "metalda/error.hpp"

namespace metalda {

BinaryMatrix::BinaryMatrix(std::vector<std::vector<MetaIndex>> rows,
                           std::vector<std::string> names)
    : rows_(std::move(rows)), names_(std::move(names)) {
  if (names_.empty()) names_.push_back(kDefaultName);
  columns_.assign(names_.size(), {});
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    auto& row = rows_[r];
    row.push_back(kDefault);
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    for (MetaIndex c : row) {
      if (c >= names_.size()) {
        throw DimensionError("meta index " + std::to_string(c) +
                             " out of range for " + std::to_string(names_.size()) +
                             " columns");
      }
      columns_[c].push_back(static_cast<std::uint32_t>(r));
    }
  }
}

std::size_t BinaryMatrix::nonzeros() const {
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.size();
  return n;
}

LabelMatrix build_label_matrix(const Corpus& corpus) {
  std::vector<std::string> names{kDefaultName};
  std::unordered_map<std::string, MetaIndex> index;
  std::vector<std::vector<MetaIndex>> rows(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& label : corpus.documents[d].labels) {
      auto [it, inserted] = index.try_emplace(label, static_cast<MetaIndex>(names.size()));
      if (inserted) names.push_back(label);
      rows[d].push_back(it->second);
    }
  }
  return LabelMatrix(std::move(rows), std::move(names));
}

LabelMatrix build_label_matrix(const Corpus& corpus,
                               const std::vector<std::string>& label_names) {
  std::unordered_map<std::string, MetaIndex> index;
  for (MetaIndex i = 1; i < label_names.size(); ++i) index.emplace(label_names[i], i);
  std::vector<std::vector<MetaIndex>> rows(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& label : corpus.documents[d].labels) {
      if (auto it = index.find(label); it != index.end()) rows[d].push_back(it->second);
    }
  }
  return LabelMatrix(std::move(rows), label_names);
}

LabelMatrix default_label_matrix(std::size_t documents) {
  return LabelMatrix(std::vector<std::vector<MetaIndex>>(documents), {kDefaultName});
}

FeatureMatrix default_feature_matrix(std::size_t tokens) {
  return FeatureMatrix(std::vector<std::vector<MetaIndex>>(tokens), {kDefaultName});
}

namespace {

double parse_double(std::string_view s, std::size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("cannot parse number '" + std::string(s) + "'", line_no);
  }
  return value;
}

}  // namespace

EmbeddingTable load_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (fields >> field) values.push_back(parse_double(field, line_no));
    if (table.vectors.empty() && table.dimension == 0) {
      table.dimension = values.size();
    } else if (values.size() != table.dimension) {
      throw ParseError("embedding has dimension " + std::to_string(values.size()) +
                           ", expected " + std::to_string(table.dimension),
                       line_no);
    }
    if (!table.vectors.try_emplace(token, std::move(values)).second) ++table.duplicates;
  }
  return table;
}

EmbeddingTable load_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file: " + path);
  return load_embeddings(in);
}

std::vector<int> ternarize(std::span<const double> embedding) {
  double pos_sum = 0.0, neg_sum = 0.0;
  std::size_t pos_n = 0, neg_n = 0;
  for (double x : embedding) {
    if (x > 0.0) {
      pos_sum += x;
      ++pos_n;
    } else if (x < 0.0) {
      neg_sum += x;
      ++neg_n;
    }
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  // An empty side gets an unreachable threshold so it never fires.
  const double pos_mean = pos_n ? pos_sum / static_cast<double>(pos_n) : inf;
  const double neg_mean = neg_n ? neg_sum / static_cast<double>(neg_n) : -inf;

  std::vector<int> code(embedding.size(), 0);
  for (std::size_t j = 0; j < embedding.size(); ++j) {
    if (embedding[j] > pos_mean) {
      code[j] = 1;
    } else if (embedding[j] < neg_mean) {
      code[j] = -1;
    }
  }
  return code;
}

std::vector<std::string> binarized_feature_names(std::size_t dimension) {
  std::vector<std::string> names{kDefaultName};
  for (std::size_t j = 0; j < dimension; ++j) {
    names.push_back("dim" + std::to_string(j) + "_pos");
    names.push_back("dim" + std::to_string(j) + "_neg");
  }
  return names;
}

FeatureMatrix binarize_embeddings(const EmbeddingTable& table,
                                  std::span<const std::string> tokens) {
  std::vector<std::vector<MetaIndex>> rows(tokens.size());
  for (std::size_t v = 0; v < tokens.size(); ++v) {
    const auto* emb = table.find(tokens[v]);
    if (!emb) continue;
    const auto code = ternarize(*emb);
    for (std::size_t j = 0; j < code.size(); ++j) {
      if (code[j] == 1) rows[v].push_back(static_cast<MetaIndex>(1 + 2 * j));
      if (code[j] == -1) rows[v].push_back(static_cast<MetaIndex>(2 + 2 * j));
    }
  }
  return FeatureMatrix(std::move(rows), binarized_feature_names(table.dimension));
}

FeatureLoadResult load_feature_matrix(std::istream& in,
                                      std::span<const std::string> tokens,
                                      const std::vector<std::string>& fixed_names) {
  std::unordered_map<std::string, std::size_t> token_index;
  for (std::size_t v = 0; v < tokens.size(); ++v) token_index.emplace(tokens[v], v);

  const bool grow = fixed_names.empty();
  std::vector<std::string> names = grow ? std::vector<std::string>{kDefaultName} : fixed_names;
  std::unordered_map<std::string, MetaIndex> name_index;
  for (MetaIndex i = 1; i < names.size(); ++i) name_index.emplace(names[i], i);
  name_index.emplace(kDefaultName, BinaryMatrix::kDefault);

  FeatureLoadResult result;
  std::vector<std::vector<MetaIndex>> rows(tokens.size());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string token = line.substr(0, tab);
    auto tok_it = token_index.find(token);
    if (tok_it == token_index.end()) {
      ++result.skipped_lines;
      continue;
    }
    if (tab == std::string::npos) continue;
    std::string_view field = std::string_view(line).substr(tab + 1);
    std::size_t start = 0;
    while (start <= field.size()) {
      auto end = field.find(',', start);
      if (end == std::string_view::npos) end = field.size();
      const std::string name(field.substr(start, end - start));
      start = end + 1;
      if (name.empty()) continue;
      auto it = name_index.find(name);
      if (it == name_index.end()) {
        if (!grow) continue;
        it = name_index.emplace(name, static_cast<MetaIndex>(names.size())).first;
        names.push_back(name);
      }
      rows[tok_it->second].push_back(it->second);
    }
  }
  result.matrix = FeatureMatrix(std::move(rows), std::move(names));
  return result;
}

FeatureLoadResult load_feature_matrix_file(const std::string& path,
                                           std::span<const std::string> tokens,
                                           const std::vector<std::string>& fixed_names) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature file: " + path);
  return load_feature_matrix(in, tokens, fixed_names);
}

void write_feature_file(std::ostream& out, const FeatureMatrix& g,
                        std::span<const std::string> tokens) {
  const auto& names = g.names();
  for (std::size_t v = 0; v < tokens.size(); ++v) {
    out << tokens[v] << '\t';
    bool first = true;
    for (MetaIndex c : g.row(v)) {
      out << (first ? "" : ",") << names[c];
      first = false;
    }
    out << '\n';
  }
}

}  // namespace metalda
