#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "propdistill/data.hpp"
#include "propdistill/graph.hpp"
#include "propdistill/nn.hpp"
#include "propdistill/propagation.hpp"
#include "propdistill/rng.hpp"

namespace propdistill {

enum class LossVariant { Plain, InvKd, Pnd, PndFix, Conv };
enum class Scenario { Transductive, Production };
enum class TeacherArch { Sage, Appnp };

inline std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::Plain: return "plain";
    case LossVariant::InvKd: return "invkd";
    case LossVariant::Pnd: return "pnd";
    case LossVariant::PndFix: return "pnd-fix";
    case LossVariant::Conv: return "conv";
  }
  return "?";
}

inline LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "plain") return LossVariant::Plain;
  if (s == "invkd") return LossVariant::InvKd;
  if (s == "pnd") return LossVariant::Pnd;
  if (s == "pnd-fix" || s == "pnd_fix") return LossVariant::PndFix;
  if (s == "conv") return LossVariant::Conv;
  throw std::invalid_argument("unknown loss variant: " + s);
}

struct TrainHyper {
  double lr = 1e-2;
  double weight_decay = 5e-4;
  double dropout = 0.5;
  int max_epochs = 500;
  int patience = 50;
  int batch_size = 0;  // 0 = full batch
  std::vector<int> hidden = {128};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainHyper: lr must be > 0");
    if (max_epochs < 1 || patience < 1)
      throw std::invalid_argument("TrainHyper: epochs and patience must be >= 1");
    if (batch_size < 0)
      throw std::invalid_argument("TrainHyper: batch_size must be >= 0");
  }
};

struct DistillConfig {
  LossVariant loss_variant = LossVariant::Pnd;
  double alpha = 0.0;  // Eq.-style CE/KL mixing; distillation-only by default
  PropagationSpec prop;
  TrainHyper train;
  bool kl_forward = true;  // D_KL(teacher-side || student-side)
  double temperature = 1.0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("DistillConfig: alpha outside [0,1]");
    if (!(temperature > 0.0))
      throw std::invalid_argument("DistillConfig: temperature must be > 0");
    train.validate();
    const bool needs_prop = loss_variant != LossVariant::Plain;
    if (needs_prop) {
      PropVariant expect = PropVariant::Recursive;
      switch (loss_variant) {
        case LossVariant::Pnd: expect = PropVariant::Recursive; break;
        case LossVariant::PndFix: expect = PropVariant::RecursiveFix; break;
        case LossVariant::InvKd: expect = PropVariant::Inverse; break;
        case LossVariant::Conv: expect = PropVariant::Conv; break;
        default: break;
      }
      if (prop.variant != expect)
        throw std::invalid_argument("DistillConfig: loss variant " +
                                    to_string(loss_variant) +
                                    " does not match propagation variant " +
                                    to_string(prop.variant));
      if (!(prop.gamma > 0.0 && prop.gamma <= 1.0))
        throw std::invalid_argument("DistillConfig: gamma outside (0,1]");
      if (prop.steps < 1)
        throw std::invalid_argument("DistillConfig: steps must be >= 1");
    }
  }
};

inline DistillConfig make_distill_config(LossVariant v, double gamma,
                                         int steps) {
  DistillConfig cfg;
  cfg.loss_variant = v;
  cfg.prop.gamma = gamma;
  cfg.prop.steps = steps;
  switch (v) {
    case LossVariant::Plain: cfg.prop.variant = PropVariant::Recursive; break;
    case LossVariant::Pnd: cfg.prop.variant = PropVariant::Recursive; break;
    case LossVariant::PndFix: cfg.prop.variant = PropVariant::RecursiveFix; break;
    case LossVariant::InvKd: cfg.prop.variant = PropVariant::Inverse; break;
    case LossVariant::Conv: cfg.prop.variant = PropVariant::Conv; break;
  }
  return cfg;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double lap_quad = 0.0;  // tr(F^T L F) of the eval-mode output probabilities
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_acc = 0.0;
};

// ---------------------------------------------------------------------
// Evaluation

// Argmax accuracy; ties break to the lowest class index.
inline double accuracy(const Matrix& scores, const std::vector<int>& labels,
                       const IndexSet& idx) {
  if (idx.empty()) throw std::invalid_argument("accuracy: empty index set");
  long correct = 0;
  for (int i : idx) {
    int argmax = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > scores(i, argmax)) argmax = static_cast<int>(c);
    correct += argmax == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

inline double evaluate(const MlpModel& model, const Matrix& x,
                       const std::vector<int>& labels, const IndexSet& idx) {
  return accuracy(mlp_forward(model, x, /*train_mode=*/false), labels, idx);
}

// 8:2 interpolation of transductive and inductive accuracy. Written as
// (8t + 2i)/10 so the decimal reference points (0.80, 0.70) -> 0.78 and
// (x, x) -> x come out exact in doubles.
inline double production_eval(double tran_acc, double ind_acc) {
  if (!(tran_acc >= 0.0 && tran_acc <= 1.0 && ind_acc >= 0.0 && ind_acc <= 1.0))
    throw std::invalid_argument("production_eval: accuracy outside [0,1]");
  return (8.0 * tran_acc + 2.0 * ind_acc) / 10.0;
}

// ---------------------------------------------------------------------
// Target preparation (teacher-side transforms)

// Temperature acts on the stored probabilities: renorm(P^(1/tau)) equals
// softmax(h/tau) of the underlying logits.
inline ProbMatrix apply_temperature(const ProbMatrix& p, double tau) {
  if (tau == 1.0) return p;
  Matrix m = p.values().array().max(kClampFloor).pow(1.0 / tau);
  return clamp_renormalize(m);
}

inline ProbMatrix prepare_target(const ProbMatrix& p_t, const NormAdj& adj,
                                 const DistillConfig& cfg,
                                 const SplitSpec& split) {
  switch (cfg.loss_variant) {
    case LossVariant::Plain:
      return p_t;
    case LossVariant::Pnd:
      return propagate_recursive(p_t, adj, cfg.prop.gamma, cfg.prop.steps);
    case LossVariant::PndFix:
      return propagate_recursive_fix(p_t, adj, cfg.prop.gamma, cfg.prop.steps,
                                     split.train_idx);
    default:
      throw std::invalid_argument(
          "prepare_target: variant transforms the student side, not the "
          "teacher side");
  }
}

// ---------------------------------------------------------------------
// Student-side KL pipelines (value + gradient w.r.t. logits)

namespace detail {
inline Matrix softmax_matrix(const Matrix& z) {
  return softmax_rows(z).values();
}
}  // namespace detail

struct PipelineGrad {
  double value = 0.0;
  Matrix grad_logits;
};

// KL between the target and softmax(z/tau) on the given rows, in either
// direction, computed in the log domain.
inline PipelineGrad plain_kl(const Matrix& z, const ProbMatrix& target,
                             const IndexSet& idx, bool kl_forward,
                             double tau) {
  PipelineGrad out;
  out.grad_logits = Matrix::Zero(z.rows(), z.cols());
  const Matrix zs = tau == 1.0 ? z : Matrix(z / tau);
  const Matrix lsm = log_softmax_rows(zs);
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (int i : idx) {
    if (kl_forward) {
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double t = target(i, c);
        if (t > 0.0) out.value += t * (std::log(t) - lsm(i, c)) * inv;
      }
      const Eigen::RowVectorXd s = lsm.row(i).array().exp();
      out.grad_logits.row(i) =
          (s - target.values().row(i)) * (inv / tau);
    } else {
      const Eigen::RowVectorXd s = lsm.row(i).array().exp();
      Eigen::RowVectorXd g(z.cols());
      double dot = 0.0;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double sv = std::max(s(c), 1e-300);
        const double tv = std::max(target(i, c), 1e-300);
        const double lg = std::log(sv / tv);
        if (s(c) > 0.0) out.value += s(c) * lg * inv;
        g(c) = lg + 1.0;
        dot += g(c) * s(c);
      }
      out.grad_logits.row(i) =
          s.cwiseProduct((g.array() - dot).matrix()) * (inv / tau);
    }
  }
  return out;
}

// KL where softmax(z/tau) first passes through the inverse or convolution
// operator and clamp_renormalize. The gradient chains through the whole
// transform, so it touches every row that feeds an idx row.
inline PipelineGrad transformed_kl(const Matrix& z, const ProbMatrix& target,
                                   const NormAdj& adj, LossVariant variant,
                                   double gamma, const IndexSet& idx,
                                   bool kl_forward, double tau) {
  const Matrix zs = tau == 1.0 ? z : Matrix(z / tau);
  const Matrix s = detail::softmax_matrix(zs);
  Matrix m;
  if (variant == LossVariant::InvKd)
    m = 2.0 * s - gamma * spmm(adj, s);
  else if (variant == LossVariant::Conv)
    m = spmm(adj, s);
  else
    throw std::invalid_argument("transformed_kl: unexpected variant");
  const Matrix cl = m.cwiseMax(kClampFloor);
  const Vector rowsum = cl.rowwise().sum();
  Matrix r = cl;
  for (Eigen::Index i = 0; i < r.rows(); ++i) r.row(i) /= rowsum(i);

  PipelineGrad out;
  const double inv = 1.0 / static_cast<double>(idx.size());
  Matrix grad_r = Matrix::Zero(z.rows(), z.cols());
  for (int i : idx) {
    if (kl_forward) {
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double t = target(i, c);
        if (t > 0.0) out.value += t * std::log(t / r(i, c)) * inv;
        grad_r(i, c) = t > 0.0 ? -t / r(i, c) * inv : 0.0;
      }
    } else {
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double tv = std::max(target(i, c), 1e-300);
        const double lg = std::log(r(i, c) / tv);
        out.value += r(i, c) * lg * inv;
        grad_r(i, c) = (lg + 1.0) * inv;
      }
    }
  }
  // through the row normalization
  Matrix grad_cl = Matrix::Zero(z.rows(), z.cols());
  for (int i : idx) {
    const double dot = grad_r.row(i).dot(r.row(i));
    grad_cl.row(i) = (grad_r.row(i).array() - dot).matrix() / rowsum(i);
  }
  // through the clamp
  const Matrix grad_m =
      grad_cl.cwiseProduct((m.array() > kClampFloor).cast<double>().matrix());
  // through the operator (symmetric)
  Matrix grad_s;
  if (variant == LossVariant::InvKd)
    grad_s = 2.0 * grad_m - gamma * spmm(adj, grad_m);
  else
    grad_s = spmm(adj, grad_m);
  // through the softmax, every row
  const Vector rowdot = grad_s.cwiseProduct(s).rowwise().sum();
  out.grad_logits = s.cwiseProduct(grad_s.colwise() - rowdot) / tau;
  return out;
}

// Combined distillation objective on one batch: value plus gradient
// w.r.t. the student logits.
inline PipelineGrad student_loss(const Matrix& z, const ProbMatrix& target,
                                 const NormAdj& adj, const Graph& g,
                                 const DistillConfig& cfg,
                                 const IndexSet& kl_idx,
                                 const IndexSet& ce_idx) {
  PipelineGrad out;
  out.grad_logits = Matrix::Zero(z.rows(), z.cols());
  if (cfg.alpha < 1.0 && !kl_idx.empty()) {
    PipelineGrad kl;
    if (cfg.loss_variant == LossVariant::InvKd ||
        cfg.loss_variant == LossVariant::Conv)
      kl = transformed_kl(z, target, adj, cfg.loss_variant, cfg.prop.gamma,
                          kl_idx, cfg.kl_forward, cfg.temperature);
    else
      kl = plain_kl(z, target, kl_idx, cfg.kl_forward, cfg.temperature);
    out.value += (1.0 - cfg.alpha) * kl.value;
    out.grad_logits += (1.0 - cfg.alpha) * kl.grad_logits;
  }
  if (cfg.alpha > 0.0 && !ce_idx.empty()) {
    const LossResult ce =
        loss_cross_entropy(softmax_rows(z), g.labels, ce_idx);
    out.value += cfg.alpha * ce.value;
    out.grad_logits += cfg.alpha * ce.grad_logits;
  }
  return out;
}

namespace detail {

inline IndexSet distillation_nodes(const Graph& g, const SplitSpec& split) {
  if (!split.production_mode()) {
    IndexSet all(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) all[i] = i;
    return all;
  }
  // production: only observed nodes; inductive features stay unseen
  IndexSet idx = split.train_idx;
  idx.insert(idx.end(), split.val_idx.begin(), split.val_idx.end());
  idx.insert(idx.end(), split.obs_idx.begin(), split.obs_idx.end());
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------
// Teacher training

struct TeacherConfig {
  TeacherArch arch = TeacherArch::Sage;
  int hidden = 128;
  double appnp_gamma = 0.9;
  int appnp_steps = 10;
  bool self_loops = false;  // GCN-style normalization for the teacher only
  TrainHyper train;
};

struct TeacherResult {
  TeacherArch arch = TeacherArch::Sage;
  SageModel sage;
  AppnpModel appnp;
  ProbMatrix p_t;
  TrainReport report;
};

namespace detail {

inline NormAdj normalize_with_self_loops(const Graph& g) {
  NormAdj a;
  a.num_nodes = g.num_nodes;
  a.degrees.resize(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i)
    a.degrees[i] = static_cast<double>(g.degree(i));
  a.row_ptr.assign(g.num_nodes + 1, 0);
  for (int i = 0; i < g.num_nodes; ++i)
    a.row_ptr[i + 1] = a.row_ptr[i] + g.degree(i) + 1;
  a.col_idx.resize(a.row_ptr[g.num_nodes]);
  a.values.resize(a.row_ptr[g.num_nodes]);
  for (int i = 0; i < g.num_nodes; ++i) {
    int k = a.row_ptr[i];
    bool placed_self = false;
    auto put = [&](int j) {
      a.col_idx[k] = j;
      a.values[k] =
          1.0 / std::sqrt((a.degrees[i] + 1.0) * (a.degrees[j] + 1.0));
      ++k;
    };
    for (int t = g.adj_ptr[i]; t < g.adj_ptr[i + 1]; ++t) {
      const int j = g.adj_idx[t];
      if (!placed_self && j > i) {
        put(i);
        placed_self = true;
      }
      put(j);
    }
    if (!placed_self) put(i);
  }
  return a;
}

template <typename ForwardFn, typename BackwardFn, typename SnapshotFn>
inline TrainReport run_training(const Graph& g, const SplitSpec& split,
                                const NormAdj& adj_for_metric,
                                const TrainHyper& hyper,
                                const std::vector<Matrix*>& params,
                                ForwardFn&& forward, BackwardFn&& backward,
                                SnapshotFn&& snapshot_best) {
  if (split.train_idx.empty())
    throw std::invalid_argument("training: empty train set");
  AdamConfig acfg;
  acfg.lr = hyper.lr;
  acfg.weight_decay = hyper.weight_decay;
  AdamState adam(acfg);
  adam.init(params);

  TrainReport report;
  int since_best = 0;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    const double train_loss = backward(adam);
    if (!std::isfinite(train_loss))
      throw std::runtime_error("training: non-finite loss at epoch " +
                               std::to_string(epoch));
    const Matrix logits = forward();
    const ProbMatrix probs = softmax_rows(logits);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.val_acc = split.val_idx.empty()
                      ? 0.0
                      : accuracy(logits, g.labels, split.val_idx);
    rec.lap_quad = laplacian_quadratic(adj_for_metric, probs.values());
    report.epochs.push_back(rec);
    // ties refresh the snapshot but still count toward patience, so a
    // plateau stops early while the kept model is the newest best one
    if (report.best_epoch < 0 || rec.val_acc > report.best_val_acc) {
      report.best_epoch = epoch;
      report.best_val_acc = rec.val_acc;
      snapshot_best();
      since_best = 0;
    } else {
      if (rec.val_acc == report.best_val_acc) {
        report.best_epoch = epoch;
        snapshot_best();
      }
      if (++since_best >= hyper.patience) break;
    }
  }
  return report;
}

}  // namespace detail

inline TeacherResult train_teacher(const Graph& g, const SplitSpec& split,
                                   const TeacherConfig& cfg) {
  cfg.train.validate();
  TeacherResult out;
  out.arch = cfg.arch;
  Rng init_rng(cfg.train.seed, /*stream=*/1);
  Rng dropout_rng(cfg.train.seed, /*stream=*/2);
  const NormAdj adj = normalize_adjacency(g);
  const NormAdj teacher_adj =
      cfg.self_loops ? detail::normalize_with_self_loops(g) : adj;

  if (cfg.arch == TeacherArch::Sage) {
    SageModel model = make_sage(g.feature_dim(), cfg.hidden, g.num_classes,
                                cfg.train.dropout, init_rng);
    SageModel best = model;
    const auto params = sage_params(model);
    auto forward = [&]() {
      return sage_forward(model, g.features, g, /*train_mode=*/false);
    };
    auto backward = [&](AdamState& adam) {
      const SageTrace trace = sage_forward_trace(model, g.features, g,
                                                 /*train_mode=*/true,
                                                 &dropout_rng);
      const LossResult ce = loss_cross_entropy(softmax_rows(trace.logits),
                                               g.labels, split.train_idx);
      adam_step(params, sage_backward(model, g, trace, ce.grad_logits), adam);
      return ce.value;
    };
    out.report = detail::run_training(g, split, adj, cfg.train, params,
                                      forward, backward,
                                      [&]() { best = model; });
    out.sage = best;
    out.p_t = softmax_rows(
        sage_forward(out.sage, g.features, g, /*train_mode=*/false));
  } else {
    AppnpModel model =
        make_appnp(g.feature_dim(), {cfg.hidden}, g.num_classes,
                   cfg.train.dropout, cfg.appnp_gamma, cfg.appnp_steps,
                   init_rng);
    AppnpModel best = model;
    const auto params = appnp_params(model);
    auto forward = [&]() {
      return appnp_forward(model, g.features, teacher_adj,
                           /*train_mode=*/false);
    };
    auto backward = [&](AdamState& adam) {
      const AppnpTrace trace = appnp_forward_trace(
          model, g.features, teacher_adj, /*train_mode=*/true, &dropout_rng);
      const LossResult ce = loss_cross_entropy(softmax_rows(trace.logits),
                                               g.labels, split.train_idx);
      adam_step(params,
                appnp_backward(model, teacher_adj, trace, ce.grad_logits),
                adam);
      return ce.value;
    };
    out.report = detail::run_training(g, split, adj, cfg.train, params,
                                      forward, backward,
                                      [&]() { best = model; });
    out.appnp = best;
    out.p_t = softmax_rows(appnp_forward(out.appnp, g.features, teacher_adj,
                                         /*train_mode=*/false));
  }
  return out;
}

// ---------------------------------------------------------------------
// Student distillation

struct StudentResult {
  MlpModel model;
  TrainReport report;
};

inline StudentResult distill_student(const Graph& g, const ProbMatrix& p_t,
                                     const SplitSpec& split,
                                     const DistillConfig& cfg) {
  cfg.validate();
  if (p_t.rows() != g.num_nodes || p_t.cols() != g.num_classes)
    throw std::invalid_argument("distill_student: teacher matrix shape");

  const NormAdj adj = normalize_adjacency(g);
  const ProbMatrix tempered = apply_temperature(p_t, cfg.temperature);
  const bool teacher_side = cfg.loss_variant == LossVariant::Plain ||
                            cfg.loss_variant == LossVariant::Pnd ||
                            cfg.loss_variant == LossVariant::PndFix;
  const ProbMatrix target =
      teacher_side ? prepare_target(tempered, adj, cfg, split) : tempered;

  const IndexSet distill_idx = detail::distillation_nodes(g, split);
  std::vector<char> is_train(g.num_nodes, 0);
  for (int v : split.train_idx) is_train[v] = 1;

  Rng init_rng(cfg.train.seed, /*stream=*/1);
  Rng dropout_rng(cfg.train.seed, /*stream=*/2);
  Rng batch_rng(cfg.train.seed, /*stream=*/3);

  MlpModel model = make_mlp(g.feature_dim(), cfg.train.hidden, g.num_classes,
                            cfg.train.dropout, init_rng);
  MlpModel best = model;
  const auto params = mlp_params(model);

  auto run_batch = [&](const IndexSet& kl_idx, AdamState& adam) {
    const MlpTrace trace = mlp_forward_trace(model, g.features,
                                             /*train_mode=*/true,
                                             &dropout_rng);
    IndexSet ce_idx;
    if (cfg.alpha > 0.0)
      for (int v : kl_idx)
        if (is_train[v]) ce_idx.push_back(v);
    const PipelineGrad loss = student_loss(
        trace.logits, target, adj, g, cfg, kl_idx, ce_idx);
    adam_step(params, mlp_backward(model, trace, loss.grad_logits), adam);
    return loss.value;
  };

  auto forward = [&]() {
    return mlp_forward(model, g.features, /*train_mode=*/false);
  };
  auto backward = [&](AdamState& adam) {
    if (cfg.train.batch_size <= 0 ||
        cfg.train.batch_size >= static_cast<int>(distill_idx.size()))
      return run_batch(distill_idx, adam);
    IndexSet order = distill_idx;
    batch_rng.shuffle(order);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.train.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + cfg.train.batch_size);
      IndexSet batch(order.begin() + start, order.begin() + stop);
      total += run_batch(batch, adam);
      ++batches;
    }
    return total / std::max(batches, 1);
  };

  StudentResult out;
  out.report = detail::run_training(g, split, adj, cfg.train, params, forward,
                                    backward, [&]() { best = model; });
  out.model = best;
  return out;
}

}  // namespace propdistill
