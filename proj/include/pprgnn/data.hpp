#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pprgnn/csr.hpp"
#include "pprgnn/dense.hpp"
#include "pprgnn/error.hpp"
#include "pprgnn/graph.hpp"

namespace pprgnn {

enum class FeatureKind { node_labels_onehot, node_attributes, degree_onehot };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::node_labels_onehot: return "node_labels_onehot";
    case FeatureKind::node_attributes: return "node_attributes";
    case FeatureKind::degree_onehot: return "degree_onehot";
  }
  return "?";
}

struct DatasetMeta {
  std::string name;
  std::size_t n_graphs = 0;
  double avg_nodes = 0.0;
  std::size_t n_classes = 0;
  FeatureKind feature_kind = FeatureKind::degree_onehot;
  std::size_t feature_dim = 0;
  /// Original graph label values, indexed by remapped class id.
  std::vector<long long> class_values;
};

template <typename T>
struct Dataset {
  std::vector<Graph<T>> graphs;
  DatasetMeta meta;
};

inline constexpr std::size_t kDegreeCap = 50;

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline long long parse_int(std::string_view s, const std::string& where) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DatasetError(where + ": expected integer, got '" + std::string(s) + "'");
  return v;
}

inline double parse_real(std::string_view s, const std::string& where) {
  s = trim(s);
  try {
    std::size_t used = 0;
    const std::string str(s);
    const double v = std::stod(str, &used);
    if (used != str.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DatasetError(where + ": expected real, got '" + std::string(s) + "'");
  }
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    parts.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::vector<long long> read_int_column(const std::filesystem::path& path) {
  std::vector<long long> out;
  const auto lines = read_lines(path);
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(parse_int(lines[i], path.filename().string() + ":" + std::to_string(i + 1)));
  return out;
}

/// Dataset prefix from the "<DS>_A.txt" file in `dir`.
inline std::string find_dataset_prefix(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DatasetError("dataset directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() > 6 && name.ends_with("_A.txt")) return name.substr(0, name.size() - 6);
  }
  throw DatasetError("missing mandatory file <DS>_A.txt in " + dir.string());
}

}  // namespace detail

/// Loads a dataset in the public TUDataset text layout. Adjacency is
/// symmetrised with unit weights; features are one-hot node labels when
/// present, else node attributes, else one-hot degree capped at `degree_cap`.
template <typename T>
Dataset<T> load_tudataset(const std::filesystem::path& dir, std::size_t degree_cap = kDegreeCap) {
  const std::string ds = detail::find_dataset_prefix(dir);
  auto file = [&](std::string_view suffix) { return dir / (ds + "_" + std::string(suffix)); };
  for (auto suffix : {"A.txt", "graph_indicator.txt", "graph_labels.txt"})
    if (!std::filesystem::exists(file(suffix)))
      throw DatasetError("missing mandatory file " + file(suffix).string());

  const auto indicator = detail::read_int_column(file("graph_indicator.txt"));
  const auto raw_labels = detail::read_int_column(file("graph_labels.txt"));
  const std::size_t n_graphs = raw_labels.size();
  const std::size_t n_nodes = indicator.size();
  if (n_graphs == 0) throw DatasetError("dataset has no graphs");

  std::vector<std::size_t> first_node(n_graphs + 1, 0);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const long long g = indicator[i];
    if (g < 1 || static_cast<std::size_t>(g) > n_graphs)
      throw DatasetError("graph_indicator line " + std::to_string(i + 1) +
                         ": graph id out of range");
    if (i > 0 && g < indicator[i - 1])
      throw DatasetError("graph_indicator must be grouped by graph (non-decreasing)");
    ++first_node[static_cast<std::size_t>(g)];
  }
  std::partial_sum(first_node.begin(), first_node.end(), first_node.begin());

  std::vector<std::vector<std::pair<Index, Index>>> edges(n_graphs);
  const auto a_lines = detail::read_lines(file("A.txt"));
  for (std::size_t li = 0; li < a_lines.size(); ++li) {
    const std::string where = ds + "_A.txt:" + std::to_string(li + 1);
    const auto parts = detail::split_commas(a_lines[li]);
    if (parts.size() != 2) throw DatasetError(where + ": expected 'row, col'");
    const long long r = detail::parse_int(parts[0], where);
    const long long c = detail::parse_int(parts[1], where);
    if (r < 1 || c < 1 || static_cast<std::size_t>(r) > n_nodes ||
        static_cast<std::size_t>(c) > n_nodes)
      throw DatasetError(where + ": node id out of range");
    const auto g = static_cast<std::size_t>(indicator[static_cast<std::size_t>(r - 1)] - 1);
    if (indicator[static_cast<std::size_t>(c - 1)] != indicator[static_cast<std::size_t>(r - 1)])
      throw DatasetError(where + ": edge references node outside its graph");
    const auto base = first_node[g];
    edges[g].emplace_back(static_cast<Index>(r - 1 - static_cast<long long>(base)),
                          static_cast<Index>(c - 1 - static_cast<long long>(base)));
  }

  std::optional<std::vector<long long>> node_labels;
  if (std::filesystem::exists(file("node_labels.txt"))) {
    node_labels = detail::read_int_column(file("node_labels.txt"));
    if (node_labels->size() != n_nodes)
      throw DatasetError("node_labels length does not match graph_indicator");
  }
  std::optional<std::vector<std::vector<double>>> attributes;
  if (!node_labels && std::filesystem::exists(file("node_attributes.txt"))) {
    attributes.emplace();
    const auto lines = detail::read_lines(file("node_attributes.txt"));
    if (lines.size() != n_nodes)
      throw DatasetError("node_attributes length does not match graph_indicator");
    for (std::size_t li = 0; li < lines.size(); ++li) {
      std::vector<double> row;
      const std::string where = ds + "_node_attributes.txt:" + std::to_string(li + 1);
      for (auto part : detail::split_commas(lines[li])) row.push_back(detail::parse_real(part, where));
      if (!attributes->empty() && row.size() != attributes->front().size())
        throw DatasetError(where + ": inconsistent attribute count");
      attributes->push_back(std::move(row));
    }
  }

  Dataset<T> out;
  auto& meta = out.meta;
  meta.name = ds;
  meta.n_graphs = n_graphs;
  meta.avg_nodes = static_cast<double>(n_nodes) / static_cast<double>(n_graphs);

  const std::set<long long> class_set(raw_labels.begin(), raw_labels.end());
  meta.class_values.assign(class_set.begin(), class_set.end());
  meta.n_classes = meta.class_values.size();
  auto class_of = [&](long long v) {
    return static_cast<int>(std::lower_bound(meta.class_values.begin(), meta.class_values.end(), v) -
                            meta.class_values.begin());
  };

  std::vector<long long> node_label_values;
  if (node_labels) {
    const std::set<long long> s(node_labels->begin(), node_labels->end());
    node_label_values.assign(s.begin(), s.end());
    meta.feature_kind = FeatureKind::node_labels_onehot;
    meta.feature_dim = node_label_values.size();
  } else if (attributes) {
    meta.feature_kind = FeatureKind::node_attributes;
    meta.feature_dim = attributes->front().size();
  } else {
    meta.feature_kind = FeatureKind::degree_onehot;
  }

  out.graphs.reserve(n_graphs);
  std::size_t max_degree = 0;
  for (std::size_t g = 0; g < n_graphs; ++g) {
    const std::size_t n = first_node[g + 1] - first_node[g];
    Graph<T> graph;
    graph.adjacency = adjacency_from_edges<T>(n, edges[g]);
    graph.label = class_of(raw_labels[g]);
    for (std::size_t i = 0; i < n; ++i)
      max_degree = std::max<std::size_t>(
          max_degree, graph.adjacency.row_offsets()[i + 1] - graph.adjacency.row_offsets()[i]);
    if (node_labels) {
      graph.node_labels.emplace();
      graph.features = DenseMatrix<T>(n, meta.feature_dim);
      for (std::size_t i = 0; i < n; ++i) {
        const long long v = (*node_labels)[first_node[g] + i];
        graph.node_labels->push_back(static_cast<int>(v));
        const auto col = static_cast<std::size_t>(
            std::lower_bound(node_label_values.begin(), node_label_values.end(), v) -
            node_label_values.begin());
        graph.features(i, col) = T(1);
      }
    } else if (attributes) {
      graph.features = DenseMatrix<T>(n, meta.feature_dim);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < meta.feature_dim; ++j)
          graph.features(i, j) = static_cast<T>((*attributes)[first_node[g] + i][j]);
    }
    out.graphs.push_back(std::move(graph));
  }

  if (meta.feature_kind == FeatureKind::degree_onehot) {
    const std::size_t width = std::min(max_degree, degree_cap) + 1;
    meta.feature_dim = width;
    for (auto& graph : out.graphs) {
      graph.features = DenseMatrix<T>(graph.n_nodes(), width);
      for (std::size_t i = 0; i < graph.n_nodes(); ++i) {
        const std::size_t deg =
            graph.adjacency.row_offsets()[i + 1] - graph.adjacency.row_offsets()[i];
        graph.features(i, std::min(deg, width - 1)) = T(1);
      }
    }
  }
  return out;
}

/// Writes graphs in the TUDataset text layout under `dir` with prefix `name`.
/// Graph labels are written as stored. Node labels are written when present,
/// otherwise features go to <name>_node_attributes.txt.
template <typename T>
void write_tudataset(const std::filesystem::path& dir, const std::string& name,
                     const std::vector<Graph<T>>& graphs) {
  std::filesystem::create_directories(dir);
  auto open = [&](std::string_view suffix) {
    std::ofstream f(dir / (name + "_" + std::string(suffix)));
    if (!f) throw DatasetError("cannot write " + (dir / (name + "_" + std::string(suffix))).string());
    f.precision(17);
    return f;
  };
  auto a = open("A.txt");
  auto ind = open("graph_indicator.txt");
  auto lab = open("graph_labels.txt");
  const bool have_node_labels =
      !graphs.empty() && std::all_of(graphs.begin(), graphs.end(),
                                     [](const auto& g) { return g.node_labels.has_value(); });
  std::ofstream nl;
  std::ofstream attr;
  if (have_node_labels)
    nl = open("node_labels.txt");
  else
    attr = open("node_attributes.txt");

  std::size_t base = 1;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const auto& graph = graphs[g];
    const auto& off = graph.adjacency.row_offsets();
    for (std::size_t i = 0; i < graph.n_nodes(); ++i) {
      for (Index p = off[i]; p < off[i + 1]; ++p)
        a << base + i << ", " << base + graph.adjacency.col_indices()[p] << '\n';
      ind << g + 1 << '\n';
      if (have_node_labels) {
        nl << (*graph.node_labels)[i] << '\n';
      } else {
        for (std::size_t j = 0; j < graph.features.cols(); ++j)
          attr << (j ? ", " : "") << graph.features(i, j);
        attr << '\n';
      }
    }
    lab << graph.label << '\n';
    base += graph.n_nodes();
  }
}

/// Long-range probe. Each graph is two paths of `chain_len + 1` nodes. Path
/// one starts at an anchor node and ends at a signal node; path two ends at a
/// node carrying the complementary signal. Label 0 puts channel X at the
/// anchored end and Y at the free end, label 1 swaps them. Every
/// neighbourhood of radius below `chain_len` looks the same for both labels,
/// so a model must carry the anchor `chain_len` hops to tell them apart.
/// Feature channels: [blank, anchor, X, Y].
template <typename T>
std::vector<Graph<T>> make_chain_dataset(std::size_t chain_len, std::size_t n_samples,
                                         std::uint64_t seed) {
  detail::require(chain_len >= 1, "make_chain_dataset: chain_len must be >= 1");
  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) labels[i] = static_cast<int>(i % 2);
  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);

  const std::size_t half = chain_len + 1;
  const std::size_t n = 2 * half;
  std::vector<std::pair<Index, Index>> edges;
  for (std::size_t i = 0; i + 1 < half; ++i) {
    edges.emplace_back(static_cast<Index>(i), static_cast<Index>(i + 1));
    edges.emplace_back(static_cast<Index>(half + i), static_cast<Index>(half + i + 1));
  }
  const auto adjacency = adjacency_from_edges<T>(n, edges);

  std::vector<Graph<T>> graphs;
  graphs.reserve(n_samples);
  for (int label : labels) {
    Graph<T> g;
    g.adjacency = adjacency;
    g.label = label;
    g.features = DenseMatrix<T>(n, 4);
    for (std::size_t i = 0; i < n; ++i) g.features(i, 0) = T(1);
    auto set_channel = [&](std::size_t node, std::size_t ch) {
      g.features(node, 0) = T(0);
      g.features(node, ch) = T(1);
    };
    set_channel(0, 1);
    set_channel(chain_len, label == 0 ? 2 : 3);
    set_channel(n - 1, label == 0 ? 3 : 2);
    graphs.push_back(std::move(g));
  }
  return graphs;
}

}  // namespace pprgnn
