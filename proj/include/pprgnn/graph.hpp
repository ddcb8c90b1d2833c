#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pprgnn/csr.hpp"
#include "pprgnn/dense.hpp"
#include "pprgnn/error.hpp"

namespace pprgnn {

/// A single undirected graph with node features and a graph label.
template <typename T>
struct Graph {
  CsrMatrix<T> adjacency;
  DenseMatrix<T> features;
  int label = 0;
  std::optional<std::vector<int>> node_labels;

  std::size_t n_nodes() const noexcept { return adjacency.n_rows(); }
};

/// Disjoint union of graphs. The adjacency is block-diagonal over members.
template <typename T>
struct GraphBatch {
  CsrMatrix<T> adjacency;
  DenseMatrix<T> features;
  std::vector<std::size_t> graph_of_node;
  std::vector<int> graph_labels;
  std::optional<std::vector<int>> node_labels;

  std::size_t n_nodes() const noexcept { return adjacency.n_rows(); }
  std::size_t n_graphs() const noexcept { return graph_labels.size(); }

  /// First node of each member graph plus a trailing end offset.
  std::vector<std::size_t> graph_offsets() const {
    std::vector<std::size_t> offsets(n_graphs() + 1, 0);
    for (std::size_t g : graph_of_node) ++offsets[g + 1];
    for (std::size_t g = 0; g < n_graphs(); ++g) offsets[g + 1] += offsets[g];
    return offsets;
  }

  /// Throws when any batch invariant is violated.
  void validate() const {
    detail::require_dims(adjacency.is_square(), "GraphBatch: adjacency must be square");
    detail::require_dims(features.rows() == adjacency.n_rows(),
                         "GraphBatch: feature rows must equal node count");
    detail::require_dims(graph_of_node.size() == adjacency.n_rows(),
                         "GraphBatch: graph_of_node length must equal node count");
    for (std::size_t i = 0; i < graph_of_node.size(); ++i) {
      detail::require(graph_of_node[i] < n_graphs(), "GraphBatch: graph index out of range");
      detail::require(i == 0 || graph_of_node[i - 1] <= graph_of_node[i],
                      "GraphBatch: graph_of_node must be non-decreasing");
    }
    detail::require(adjacency.is_symmetric(), "GraphBatch: adjacency must be symmetric");
    const auto& off = adjacency.row_offsets();
    for (std::size_t i = 0; i < adjacency.n_rows(); ++i)
      for (Index p = off[i]; p < off[i + 1]; ++p)
        detail::require(graph_of_node[adjacency.col_indices()[p]] == graph_of_node[i],
                        "GraphBatch: edge crosses member graphs");
  }
};

/// Assembles graphs into one block-diagonal batch, preserving order.
template <typename T>
GraphBatch<T> batch_graphs(std::span<const Graph<T>> graphs) {
  GraphBatch<T> batch;
  if (graphs.empty()) return batch;
  const std::size_t width = graphs.front().features.cols();
  std::size_t total_nodes = 0;
  std::size_t total_nnz = 0;
  bool any_node_labels = false;
  for (const auto& g : graphs) {
    detail::require_dims(g.features.cols() == width, "batch_graphs: inconsistent feature width");
    detail::require_dims(g.adjacency.is_square() && g.features.rows() == g.n_nodes(),
                         "batch_graphs: graph adjacency/feature shape mismatch");
    total_nodes += g.n_nodes();
    total_nnz += g.adjacency.nnz();
    any_node_labels = any_node_labels || g.node_labels.has_value();
  }

  std::vector<Index> offsets;
  std::vector<Index> cols;
  std::vector<T> vals;
  offsets.reserve(total_nodes + 1);
  offsets.push_back(0);
  cols.reserve(total_nnz);
  vals.reserve(total_nnz);
  batch.features = DenseMatrix<T>(total_nodes, width);
  batch.graph_of_node.reserve(total_nodes);
  if (any_node_labels) batch.node_labels.emplace();

  std::size_t base = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = graphs[gi];
    const auto& off = g.adjacency.row_offsets();
    for (std::size_t i = 0; i < g.n_nodes(); ++i) {
      for (Index p = off[i]; p < off[i + 1]; ++p) {
        cols.push_back(static_cast<Index>(base + g.adjacency.col_indices()[p]));
        vals.push_back(g.adjacency.values()[p]);
      }
      offsets.push_back(static_cast<Index>(cols.size()));
      auto dst = batch.features.row(base + i);
      auto src = g.features.row(i);
      std::copy(src.begin(), src.end(), dst.begin());
      batch.graph_of_node.push_back(gi);
      if (any_node_labels)
        batch.node_labels->push_back(g.node_labels ? (*g.node_labels)[i] : -1);
    }
    batch.graph_labels.push_back(g.label);
    base += g.n_nodes();
  }
  batch.adjacency = CsrMatrix<T>(total_nodes, total_nodes, std::move(offsets), std::move(cols),
                                 std::move(vals));
  return batch;
}

template <typename T>
GraphBatch<T> batch_graphs(const std::vector<Graph<T>>& graphs) {
  return batch_graphs(std::span<const Graph<T>>(graphs));
}

/// Batches a subset of graphs selected by index.
template <typename T>
GraphBatch<T> batch_graphs(const std::vector<Graph<T>>& graphs,
                           std::span<const std::size_t> selection) {
  std::vector<Graph<T>> picked;
  picked.reserve(selection.size());
  for (std::size_t i : selection) picked.push_back(graphs.at(i));
  return batch_graphs(std::span<const Graph<T>>(picked));
}

/// Symmetric 0/1 adjacency from an undirected edge list.
template <typename T>
CsrMatrix<T> adjacency_from_edges(std::size_t n,
                                  std::span<const std::pair<Index, Index>> edges) {
  std::vector<Triplet<T>> entries;
  entries.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    entries.push_back({u, v, T(1)});
    if (u != v) entries.push_back({v, u, T(1)});
  }
  auto m = CsrMatrix<T>::from_triplets(n, n, std::move(entries));
  // repeated edges collapse to weight 1
  std::vector<T> ones(m.nnz(), T(1));
  return CsrMatrix<T>(n, n, m.row_offsets(), m.col_indices(), std::move(ones));
}

}  // namespace pprgnn
