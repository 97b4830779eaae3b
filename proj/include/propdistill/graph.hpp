#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace propdistill {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Edge = std::pair<int, int>;
using IndexSet = std::vector<int>;

// Immutable node/edge store. Edges are undirected, stored once with
// u < v, no self-loops. Neighbor lists (CSR over both directions) are
// built at construction and shared read-only afterwards.
struct Graph {
  int num_nodes = 0;
  int num_classes = 0;
  std::vector<Edge> edges;     // canonical: first < second, sorted
  Matrix features;             // num_nodes x feature_dim
  std::vector<int> labels;     // class index per node

  std::vector<int> adj_ptr;    // CSR neighbor lists, both directions
  std::vector<int> adj_idx;

  int feature_dim() const { return static_cast<int>(features.cols()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  int degree(int v) const { return adj_ptr[v + 1] - adj_ptr[v]; }

  void rebuild_adjacency() {
    adj_ptr.assign(num_nodes + 1, 0);
    for (const auto& [u, v] : edges) {
      ++adj_ptr[u + 1];
      ++adj_ptr[v + 1];
    }
    for (int i = 0; i < num_nodes; ++i) adj_ptr[i + 1] += adj_ptr[i];
    adj_idx.assign(adj_ptr[num_nodes], 0);
    std::vector<int> cursor(adj_ptr.begin(), adj_ptr.end() - 1);
    for (const auto& [u, v] : edges) {
      adj_idx[cursor[u]++] = v;
      adj_idx[cursor[v]++] = u;
    }
    for (int i = 0; i < num_nodes; ++i)
      std::sort(adj_idx.begin() + adj_ptr[i], adj_idx.begin() + adj_ptr[i + 1]);
  }
};

struct BuildStats {
  int dropped_self_loops = 0;
  int dropped_duplicates = 0;
};

inline Graph build_graph(int num_nodes, const std::vector<Edge>& edges,
                         Matrix features, std::vector<int> labels,
                         int num_classes, BuildStats* stats = nullptr) {
  if (num_nodes < 0 || num_classes <= 0)
    throw std::invalid_argument("build_graph: bad node or class count");
  if (features.rows() != num_nodes)
    throw std::invalid_argument("build_graph: feature row count " +
                                std::to_string(features.rows()) +
                                " != num_nodes " + std::to_string(num_nodes));
  if (static_cast<int>(labels.size()) != num_nodes)
    throw std::invalid_argument("build_graph: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("build_graph: label out of range");

  BuildStats local;
  std::set<Edge> seen;
  for (auto [u, v] : edges) {
    if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
      throw std::invalid_argument("build_graph: edge endpoint out of range");
    if (u == v) {
      ++local.dropped_self_loops;
      continue;
    }
    if (u > v) std::swap(u, v);
    if (!seen.insert({u, v}).second) ++local.dropped_duplicates;
  }
  if (stats) *stats = local;

  Graph g;
  g.num_nodes = num_nodes;
  g.num_classes = num_classes;
  g.edges.assign(seen.begin(), seen.end());
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.rebuild_adjacency();
  return g;
}

// Symmetrically normalized adjacency D^{-1/2} A D^{-1/2} in CSR form.
// No self-loops are added; isolated nodes keep all-zero rows and the
// propagation operators renormalize downstream.
struct NormAdj {
  int num_nodes = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  std::vector<double> values;
  Vector degrees;

  int nnz() const { return static_cast<int>(values.size()); }
};

inline NormAdj normalize_adjacency(const Graph& g) {
  NormAdj a;
  a.num_nodes = g.num_nodes;
  a.row_ptr.assign(g.adj_ptr.begin(), g.adj_ptr.end());
  a.col_idx.assign(g.adj_idx.begin(), g.adj_idx.end());
  a.values.resize(a.col_idx.size());
  a.degrees.resize(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i)
    a.degrees[i] = static_cast<double>(g.degree(i));
  for (int i = 0; i < g.num_nodes; ++i) {
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      const int j = a.col_idx[k];
      a.values[k] = 1.0 / std::sqrt(a.degrees[i] * a.degrees[j]);
    }
  }
  return a;
}

// Sparse-dense product A * X with a fixed sequential reduction order so
// results are bit-reproducible across runs.
inline Matrix spmm(const NormAdj& a, const Matrix& x) {
  if (x.rows() != a.num_nodes)
    throw std::invalid_argument("spmm: row count mismatch");
  Matrix out = Matrix::Zero(a.num_nodes, x.cols());
  for (int i = 0; i < a.num_nodes; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
      out.row(i) += a.values[k] * x.row(a.col_idx[k]);
  return out;
}

// tr(F^T (I - A) F), the graph-signal smoothness of F.
inline double laplacian_quadratic(const NormAdj& a, const Matrix& f) {
  if (f.rows() != a.num_nodes)
    throw std::invalid_argument("laplacian_quadratic: row count mismatch");
  double cross = 0.0;
  for (int i = 0; i < a.num_nodes; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
      cross += a.values[k] * f.row(i).dot(f.row(a.col_idx[k]));
  return f.squaredNorm() - cross;
}

inline Graph remove_cross_edges(const Graph& g, const IndexSet& set_a,
                                const IndexSet& set_b) {
  std::vector<char> in_a(g.num_nodes, 0), in_b(g.num_nodes, 0);
  for (int v : set_a) {
    if (v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("remove_cross_edges: index out of range");
    in_a[v] = 1;
  }
  for (int v : set_b) {
    if (v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("remove_cross_edges: index out of range");
    if (in_a[v])
      throw std::invalid_argument("remove_cross_edges: sets overlap");
    in_b[v] = 1;
  }
  Graph out = g;
  out.edges.clear();
  for (const auto& [u, v] : g.edges) {
    const bool crosses = (in_a[u] && in_b[v]) || (in_b[u] && in_a[v]);
    if (!crosses) out.edges.push_back({u, v});
  }
  out.rebuild_adjacency();
  return out;
}

}  // namespace propdistill
