#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "propdistill/graph.hpp"

namespace propdistill {

constexpr double kProbRowSumTol = 1e-9;
constexpr double kClampFloor = 1e-8;

// Row-stochastic matrix of per-node class probabilities. Construction
// validates the invariants; use clamp_renormalize to coerce raw output.
class ProbMatrix {
 public:
  ProbMatrix() = default;

  explicit ProbMatrix(Matrix m) : values_(std::move(m)) {
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < values_.cols(); ++j) {
        const double v = values_(i, j);
        if (!(v >= 0.0 && v <= 1.0 + kProbRowSumTol))
          throw std::invalid_argument("ProbMatrix: entry outside [0,1] at row " +
                                      std::to_string(i));
        sum += v;
      }
      if (std::abs(sum - 1.0) > kProbRowSumTol)
        throw std::invalid_argument("ProbMatrix: row " + std::to_string(i) +
                                    " sums to " + std::to_string(sum));
    }
  }

  const Matrix& values() const { return values_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const {
    return values_(i, j);
  }

 private:
  Matrix values_;
};

enum class PropVariant { PprExact, Recursive, RecursiveFix, Inverse, Conv };

inline std::string to_string(PropVariant v) {
  switch (v) {
    case PropVariant::PprExact: return "ppr_exact";
    case PropVariant::Recursive: return "recursive";
    case PropVariant::RecursiveFix: return "recursive_fix";
    case PropVariant::Inverse: return "inverse";
    case PropVariant::Conv: return "conv";
  }
  return "?";
}

struct PropagationSpec {
  PropVariant variant = PropVariant::Recursive;
  double gamma = 0.9;
  int steps = 10;
  std::optional<IndexSet> fixed_indices;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0))
      throw std::invalid_argument("PropagationSpec: gamma must be in (0,1]");
    if (steps < 1)
      throw std::invalid_argument("PropagationSpec: steps must be >= 1");
    const bool needs_fixed = variant == PropVariant::RecursiveFix;
    if (needs_fixed != fixed_indices.has_value())
      throw std::invalid_argument(
          "PropagationSpec: fixed_indices required iff variant is "
          "recursive_fix");
  }
};

// Clamp entries below `floor`, then rescale each row to sum 1. All-floor
// rows come out uniform.
inline ProbMatrix clamp_renormalize(const Matrix& m,
                                    double floor = kClampFloor) {
  if (!(floor > 0.0))
    throw std::invalid_argument("clamp_renormalize: floor must be > 0");
  Matrix out = m.cwiseMax(floor);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double sum = out.row(i).sum();
    out.row(i) /= sum;
  }
  return ProbMatrix(std::move(out));
}

namespace detail {
// One application of gamma*A + (1-gamma)*I.
inline Matrix lazy_step(const Matrix& p, const NormAdj& adj, double gamma) {
  return gamma * spmm(adj, p) + (1.0 - gamma) * p;
}

inline Matrix renormalize_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double sum = m.row(i).sum();
    if (sum > 0.0) m.row(i) /= sum;
  }
  return m;
}
}  // namespace detail

// P_{l+1} = gamma*A*P_l + (1-gamma)*P_l applied `steps` times, then each
// row is rescaled to sum 1 (rows touching isolated or low-degree nodes
// leak mass because A's row sums can be below 1).
inline ProbMatrix propagate_recursive(
    const ProbMatrix& p, const NormAdj& adj, double gamma, int steps,
    const std::function<void(int, const Matrix&)>& observer = nullptr) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("propagate_recursive: gamma out of (0,1]");
  if (steps < 1)
    throw std::invalid_argument("propagate_recursive: steps must be >= 1");
  Matrix cur = p.values();
  for (int l = 0; l < steps; ++l) {
    cur = detail::lazy_step(cur, adj, gamma);
    if (observer) observer(l + 1, cur);
  }
  return ProbMatrix(detail::renormalize_rows(std::move(cur)));
}

// Same recursion, but after every step the rows listed in `fixed` are
// overwritten with the original input rows.
inline ProbMatrix propagate_recursive_fix(
    const ProbMatrix& p, const NormAdj& adj, double gamma, int steps,
    const IndexSet& fixed,
    const std::function<void(int, const Matrix&)>& observer = nullptr) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("propagate_recursive_fix: gamma out of (0,1]");
  if (steps < 1)
    throw std::invalid_argument("propagate_recursive_fix: steps must be >= 1");
  for (int v : fixed)
    if (v < 0 || v >= p.rows())
      throw std::invalid_argument("propagate_recursive_fix: index out of range");
  const Matrix& orig = p.values();
  Matrix cur = orig;
  for (int l = 0; l < steps; ++l) {
    cur = detail::lazy_step(cur, adj, gamma);
    for (int v : fixed) cur.row(v) = orig.row(v);
    if (observer) observer(l + 1, cur);
  }
  return ProbMatrix(detail::renormalize_rows(std::move(cur)));
}

constexpr int kPprDenseLimit = 5000;

// Exact personalized PageRank (1-gamma)(I - gamma*A)^{-1} H via a dense
// solve. Cheap only at desk scale, hence the node-count guard.
inline Matrix ppr_exact(const Matrix& h, const NormAdj& adj, double gamma,
                        int dense_limit = kPprDenseLimit) {
  if (adj.num_nodes > dense_limit)
    throw std::invalid_argument("ppr_exact: graph above dense-solve limit");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("ppr_exact: gamma must be in [0,1)");
  if (h.rows() != adj.num_nodes)
    throw std::invalid_argument("ppr_exact: row count mismatch");
  const int n = adj.num_nodes;
  Matrix system = Matrix::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k)
      system(i, adj.col_idx[k]) -= gamma * adj.values[k];
  Eigen::PartialPivLU<Matrix> lu(system);
  // ||gamma*A|| < 1 keeps the system nonsingular; guard regardless.
  if (std::abs(lu.determinant()) < 1e-300)
    throw std::runtime_error("ppr_exact: singular system");
  return (1.0 - gamma) * lu.solve(h);
}

// (2I - gamma*A) P, the inverse-propagation operator with an extra
// identity skip. Raw output: entries may be negative, rows need
// clamp_renormalize before any KL use.
inline Matrix inverse_operator(const ProbMatrix& p, const NormAdj& adj,
                               double gamma) {
  return 2.0 * p.values() - gamma * spmm(adj, p.values());
}

// (2I - gamma*A)^{-1} P via a dense solve: the prediction a student that
// drives the inverse-operator loss to zero would produce.
inline Matrix inverse_operator_solve(const ProbMatrix& p, const NormAdj& adj,
                                     double gamma,
                                     int dense_limit = kPprDenseLimit) {
  if (adj.num_nodes > dense_limit)
    throw std::invalid_argument(
        "inverse_operator_solve: graph above dense-solve limit");
  const int n = adj.num_nodes;
  Matrix system = 2.0 * Matrix::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k)
      system(i, adj.col_idx[k]) -= gamma * adj.values[k];
  return Eigen::PartialPivLU<Matrix>(system).solve(p.values());
}

// A * P, the plain-convolution ablation. Raw output as above.
inline Matrix conv_operator(const ProbMatrix& p, const NormAdj& adj) {
  return spmm(adj, p.values());
}

}  // namespace propdistill
