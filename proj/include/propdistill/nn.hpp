#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "propdistill/graph.hpp"
#include "propdistill/propagation.hpp"
#include "propdistill/rng.hpp"

namespace propdistill {

// Biases are stored as 1 x out matrices so every parameter flows through
// the same Adam / grad-check plumbing.
struct DenseLayer {
  Matrix w;  // in x out
  Matrix b;  // 1 x out
};

struct MlpModel {
  std::vector<DenseLayer> layers;
  double dropout_rate = 0.5;

  int input_dim() const { return static_cast<int>(layers.front().w.rows()); }
  int output_dim() const { return static_cast<int>(layers.back().w.cols()); }
};

struct SageLayer {
  Matrix w_self;   // in x out
  Matrix w_neigh;  // in x out
  Matrix b;        // 1 x out
};

// 2-layer mean-aggregator GraphSAGE: h' = act(W_self h + W_neigh mean_N(h)).
struct SageModel {
  SageLayer l1, l2;
  double dropout_rate = 0.5;
};

// MLP base prediction followed by K steps of
// Z_{k+1} = gamma * A * Z_k + (1 - gamma) * Z_0.
struct AppnpModel {
  MlpModel base;
  double gamma = 0.9;
  int power_steps = 10;
};

inline Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  const double a = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
  return m;
}

inline MlpModel make_mlp(int in_dim, const std::vector<int>& hidden,
                         int out_dim, double dropout, Rng& rng) {
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("make_mlp: dropout must be in [0,1)");
  MlpModel m;
  m.dropout_rate = dropout;
  int prev = in_dim;
  for (int h : hidden) {
    m.layers.push_back({glorot_uniform(prev, h, rng), Matrix::Zero(1, h)});
    prev = h;
  }
  m.layers.push_back(
      {glorot_uniform(prev, out_dim, rng), Matrix::Zero(1, out_dim)});
  return m;
}

inline SageModel make_sage(int in_dim, int hidden, int out_dim, double dropout,
                           Rng& rng) {
  SageModel m;
  m.dropout_rate = dropout;
  m.l1 = {glorot_uniform(in_dim, hidden, rng),
          glorot_uniform(in_dim, hidden, rng), Matrix::Zero(1, hidden)};
  m.l2 = {glorot_uniform(hidden, out_dim, rng),
          glorot_uniform(hidden, out_dim, rng), Matrix::Zero(1, out_dim)};
  return m;
}

inline AppnpModel make_appnp(int in_dim, const std::vector<int>& hidden,
                             int out_dim, double dropout, double gamma,
                             int power_steps, Rng& rng) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("make_appnp: gamma must be in (0,1)");
  if (power_steps < 1)
    throw std::invalid_argument("make_appnp: power_steps must be >= 1");
  AppnpModel m;
  m.base = make_mlp(in_dim, hidden, out_dim, dropout, rng);
  m.gamma = gamma;
  m.power_steps = power_steps;
  return m;
}

namespace detail {
inline Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// Inverted dropout: surviving entries scaled by 1/(1-rate).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                           Rng& rng) {
  const double keep = 1.0 - rate;
  Matrix mask(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

inline Matrix affine(const Matrix& x, const DenseLayer& l) {
  return (x * l.w).rowwise() + l.b.row(0);
}
}  // namespace detail

// ---------------------------------------------------------------------
// MLP forward/backward

struct MlpTrace {
  std::vector<Matrix> inputs;  // input fed to each layer
  std::vector<Matrix> masks;   // dropout mask per hidden layer (may be empty)
  Matrix logits;
};

inline MlpTrace mlp_forward_trace(const MlpModel& m, const Matrix& x,
                                  bool train_mode, Rng* rng) {
  if (x.cols() != m.input_dim())
    throw std::invalid_argument("mlp_forward: input dim mismatch");
  MlpTrace t;
  Matrix cur = x;
  const int n_layers = static_cast<int>(m.layers.size());
  for (int l = 0; l < n_layers; ++l) {
    t.inputs.push_back(cur);
    Matrix z = detail::affine(cur, m.layers[l]);
    if (l + 1 == n_layers) {
      t.logits = std::move(z);
      break;
    }
    cur = detail::relu(z);
    if (train_mode && m.dropout_rate > 0.0) {
      if (!rng) throw std::invalid_argument("mlp_forward: train mode needs rng");
      Matrix mask =
          detail::dropout_mask(cur.rows(), cur.cols(), m.dropout_rate, *rng);
      cur = cur.cwiseProduct(mask);
      t.masks.push_back(std::move(mask));
    } else {
      t.masks.push_back(Matrix());
    }
  }
  return t;
}

inline Matrix mlp_forward(const MlpModel& m, const Matrix& x, bool train_mode,
                          Rng* rng = nullptr) {
  return mlp_forward_trace(m, x, train_mode, rng).logits;
}

inline std::vector<Matrix*> mlp_params(MlpModel& m) {
  std::vector<Matrix*> p;
  for (auto& l : m.layers) {
    p.push_back(&l.w);
    p.push_back(&l.b);
  }
  return p;
}

// Returns parameter gradients in mlp_params order; optionally also the
// gradient w.r.t. the input features.
inline std::vector<Matrix> mlp_backward(const MlpModel& m, const MlpTrace& t,
                                        const Matrix& grad_logits,
                                        Matrix* grad_input = nullptr) {
  const int n_layers = static_cast<int>(m.layers.size());
  std::vector<Matrix> grads(2 * n_layers);
  Matrix g = grad_logits;
  for (int l = n_layers - 1; l >= 0; --l) {
    const Matrix& in = t.inputs[l];
    grads[2 * l] = in.transpose() * g;
    grads[2 * l + 1] = g.colwise().sum();
    if (l == 0) {
      if (grad_input) *grad_input = g * m.layers[l].w.transpose();
      break;
    }
    Matrix gin = g * m.layers[l].w.transpose();
    if (t.masks[l - 1].size() > 0) gin = gin.cwiseProduct(t.masks[l - 1]);
    // relu was applied to produce in (pre-dropout); in > 0 iff pre-act > 0
    const Matrix& pre = t.inputs[l];
    g = gin.cwiseProduct(
        (pre.array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

// ---------------------------------------------------------------------
// GraphSAGE forward/backward

inline Matrix neighbor_mean(const Graph& g, const Matrix& h) {
  Matrix out = Matrix::Zero(g.num_nodes, h.cols());
  for (int i = 0; i < g.num_nodes; ++i) {
    const int deg = g.degree(i);
    if (deg == 0) continue;
    for (int k = g.adj_ptr[i]; k < g.adj_ptr[i + 1]; ++k)
      out.row(i) += h.row(g.adj_idx[k]);
    out.row(i) /= static_cast<double>(deg);
  }
  return out;
}

// Adjoint of neighbor_mean (adjacency is symmetric).
inline Matrix neighbor_mean_adjoint(const Graph& g, const Matrix& grad) {
  Matrix scaled = grad;
  for (int i = 0; i < g.num_nodes; ++i) {
    const int deg = g.degree(i);
    if (deg > 0) scaled.row(i) /= static_cast<double>(deg);
  }
  Matrix out = Matrix::Zero(g.num_nodes, grad.cols());
  for (int i = 0; i < g.num_nodes; ++i)
    for (int k = g.adj_ptr[i]; k < g.adj_ptr[i + 1]; ++k)
      out.row(i) += scaled.row(g.adj_idx[k]);
  return out;
}

struct SageTrace {
  Matrix x, nx;        // layer-1 inputs: features and neighbor means
  Matrix h, mask, hd;  // post-relu hidden, dropout mask, layer-2 input
  Matrix nh;           // neighbor mean of hd
  Matrix logits;
};

inline SageTrace sage_forward_trace(const SageModel& m, const Matrix& x,
                                    const Graph& g, bool train_mode,
                                    Rng* rng) {
  if (x.rows() != g.num_nodes)
    throw std::invalid_argument("sage_forward: feature rows != num_nodes");
  if (x.cols() != m.l1.w_self.rows())
    throw std::invalid_argument("sage_forward: input dim mismatch");
  SageTrace t;
  t.x = x;
  t.nx = neighbor_mean(g, x);
  Matrix z1 = x * m.l1.w_self + t.nx * m.l1.w_neigh;
  z1.rowwise() += m.l1.b.row(0);
  t.h = detail::relu(z1);
  t.hd = t.h;
  if (train_mode && m.dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("sage_forward: train mode needs rng");
    t.mask = detail::dropout_mask(t.h.rows(), t.h.cols(), m.dropout_rate, *rng);
    t.hd = t.h.cwiseProduct(t.mask);
  }
  t.nh = neighbor_mean(g, t.hd);
  Matrix z2 = t.hd * m.l2.w_self + t.nh * m.l2.w_neigh;
  z2.rowwise() += m.l2.b.row(0);
  t.logits = std::move(z2);
  return t;
}

inline Matrix sage_forward(const SageModel& m, const Matrix& x, const Graph& g,
                           bool train_mode, Rng* rng = nullptr) {
  return sage_forward_trace(m, x, g, train_mode, rng).logits;
}

inline std::vector<Matrix*> sage_params(SageModel& m) {
  return {&m.l1.w_self, &m.l1.w_neigh, &m.l1.b,
          &m.l2.w_self, &m.l2.w_neigh, &m.l2.b};
}

inline std::vector<Matrix> sage_backward(const SageModel& m, const Graph& g,
                                         const SageTrace& t,
                                         const Matrix& grad_logits) {
  std::vector<Matrix> grads(6);
  grads[3] = t.hd.transpose() * grad_logits;
  grads[4] = t.nh.transpose() * grad_logits;
  grads[5] = grad_logits.colwise().sum();
  Matrix ghd = grad_logits * m.l2.w_self.transpose() +
               neighbor_mean_adjoint(g, grad_logits * m.l2.w_neigh.transpose());
  if (t.mask.size() > 0) ghd = ghd.cwiseProduct(t.mask);
  Matrix g1 = ghd.cwiseProduct((t.h.array() > 0.0).cast<double>().matrix());
  grads[0] = t.x.transpose() * g1;
  grads[1] = t.nx.transpose() * g1;
  grads[2] = g1.colwise().sum();
  return grads;
}

// ---------------------------------------------------------------------
// APPNP forward/backward

struct AppnpTrace {
  MlpTrace base;
  Matrix logits;
};

inline AppnpTrace appnp_forward_trace(const AppnpModel& m, const Matrix& x,
                                      const NormAdj& adj, bool train_mode,
                                      Rng* rng) {
  AppnpTrace t;
  t.base = mlp_forward_trace(m.base, x, train_mode, rng);
  Matrix z = t.base.logits;
  for (int k = 0; k < m.power_steps; ++k)
    z = m.gamma * spmm(adj, z) + (1.0 - m.gamma) * t.base.logits;
  t.logits = std::move(z);
  return t;
}

inline Matrix appnp_forward(const AppnpModel& m, const Matrix& x,
                            const NormAdj& adj, bool train_mode,
                            Rng* rng = nullptr) {
  return appnp_forward_trace(m, x, adj, train_mode, rng).logits;
}

inline std::vector<Matrix*> appnp_params(AppnpModel& m) {
  return mlp_params(m.base);
}

inline std::vector<Matrix> appnp_backward(const AppnpModel& m,
                                          const NormAdj& adj,
                                          const AppnpTrace& t,
                                          const Matrix& grad_logits) {
  // Reverse the teleport recursion: every step feeds (1-gamma) of the
  // gradient back to Z_0 and passes gamma*A to the previous iterate.
  Matrix g = grad_logits;
  Matrix g0 = Matrix::Zero(grad_logits.rows(), grad_logits.cols());
  for (int k = 0; k < m.power_steps; ++k) {
    g0 += (1.0 - m.gamma) * g;
    g = m.gamma * spmm(adj, g);
  }
  g0 += g;
  return mlp_backward(m.base, t.base, g0);
}

// ---------------------------------------------------------------------
// Softmax and losses

inline ProbMatrix softmax_rows(const Matrix& logits) {
  if (!logits.allFinite())
    throw std::invalid_argument("softmax_rows: non-finite input");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return ProbMatrix(std::move(out));
}

inline Matrix log_softmax_rows(const Matrix& logits) {
  if (!logits.allFinite())
    throw std::invalid_argument("log_softmax_rows: non-finite input");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse =
        std::log((logits.row(i).array() - mx).exp().sum()) + mx;
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

struct LossResult {
  double value = 0.0;
  Matrix grad_logits;  // zero rows outside the index set
};

// Mean over idx of -log P[i, y_i]. The gradient is w.r.t. the logits that
// produced P via softmax.
inline LossResult loss_cross_entropy(const ProbMatrix& p,
                                     const std::vector<int>& labels,
                                     const IndexSet& idx) {
  if (idx.empty())
    throw std::invalid_argument("loss_cross_entropy: empty index set");
  LossResult r;
  r.grad_logits = Matrix::Zero(p.rows(), p.cols());
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (int i : idx) {
    const int y = labels[i];
    r.value -= std::log(std::max(p(i, y), 1e-300)) * inv;
    r.grad_logits.row(i) = p.values().row(i) * inv;
    r.grad_logits(i, y) -= inv;
  }
  return r;
}

constexpr double kKlFloor = 1e-12;

// Mean over idx of sum_c target*ln(target/pred). forward_direction=false
// swaps the roles (pred*ln(pred/target)). Gradient is w.r.t. the logits
// behind pred.
inline LossResult loss_kl(const ProbMatrix& target, const ProbMatrix& pred,
                          const IndexSet& idx, bool forward_direction = true,
                          double floor = kKlFloor) {
  if (target.rows() != pred.rows() || target.cols() != pred.cols())
    throw std::invalid_argument("loss_kl: shape mismatch");
  if (idx.empty()) throw std::invalid_argument("loss_kl: empty index set");
  for (int i : idx)
    for (Eigen::Index c = 0; c < pred.cols(); ++c)
      if (pred(i, c) < floor)
        throw std::invalid_argument("loss_kl: pred entry below floor");
  LossResult r;
  r.grad_logits = Matrix::Zero(pred.rows(), pred.cols());
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (int i : idx) {
    if (forward_direction) {
      for (Eigen::Index c = 0; c < pred.cols(); ++c) {
        const double t = target(i, c);
        if (t > 0.0) r.value += t * std::log(t / pred(i, c)) * inv;
      }
      r.grad_logits.row(i) =
          (pred.values().row(i) - target.values().row(i)) * inv;
    } else {
      double dot = 0.0;
      Eigen::RowVectorXd grow(pred.cols());
      for (Eigen::Index c = 0; c < pred.cols(); ++c) {
        const double pv = pred(i, c);
        const double tv = std::max(target(i, c), floor);
        const double lg = std::log(pv / tv);
        r.value += pv * lg * inv;
        grow(c) = lg + 1.0;
        dot += grow(c) * pv;
      }
      for (Eigen::Index c = 0; c < pred.cols(); ++c)
        r.grad_logits(i, c) = pred(i, c) * (grow(c) - dot) * inv;
    }
  }
  return r;
}

// ---------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::vector<Matrix> m, v;

  explicit AdamState(AdamConfig c = {}) : cfg(c) {}

  void init(const std::vector<Matrix*>& params) {
    m.clear();
    v.clear();
    for (const Matrix* p : params) {
      m.push_back(Matrix::Zero(p->rows(), p->cols()));
      v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
    step = 0;
  }
};

inline void adam_step(const std::vector<Matrix*>& params,
                      const std::vector<Matrix>& grads, AdamState& st) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, st.step);
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, st.step);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    if (grads[k].rows() != p.rows() || grads[k].cols() != p.cols())
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    st.m[k] = st.cfg.beta1 * st.m[k] + (1.0 - st.cfg.beta1) * grads[k];
    st.v[k] = st.cfg.beta2 * st.v[k] +
              (1.0 - st.cfg.beta2) * grads[k].cwiseProduct(grads[k]);
    const Matrix mhat = st.m[k] / bc1;
    const Matrix vhat = st.v[k] / bc2;
    if (st.cfg.weight_decay != 0.0) p -= st.cfg.lr * st.cfg.weight_decay * p;
    p -= st.cfg.lr *
         mhat.cwiseQuotient((vhat.cwiseSqrt().array() + st.cfg.eps).matrix());
  }
}

}  // namespace propdistill
