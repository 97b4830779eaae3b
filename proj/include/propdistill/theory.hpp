#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "propdistill/data.hpp"
#include "propdistill/graph.hpp"
#include "propdistill/propagation.hpp"
#include "propdistill/rng.hpp"

namespace propdistill {

// Parameters of the self-correction analysis: a d-regular graph with
// homophily h, a teacher that predicts the true class with confidence p
// everywhere except one node of interest (confidence q < 1/|Y| on its true
// class) and an eps fraction of other nodes flipped to a random wrong
// class.
struct TheoryParams {
  int num_classes = 2;
  double h = 1.0;
  double p = 0.9;
  double q = 0.3;
  double gamma = 0.5;
  double eps = 0.0;
  int d = 10;  // used only by the simulation cross-check

  void validate() const {
    if (num_classes < 2)
      throw std::invalid_argument("TheoryParams: num_classes must be >= 2");
    if (!(h >= 0.0 && h <= 1.0))
      throw std::invalid_argument("TheoryParams: h outside [0,1]");
    const double inv_y = 1.0 / num_classes;
    if (!(p > inv_y && p <= 1.0))
      throw std::invalid_argument("TheoryParams: p outside (1/|Y|, 1]");
    if (!(q >= 0.0 && q < inv_y))
      throw std::invalid_argument("TheoryParams: q outside [0, 1/|Y|)");
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("TheoryParams: gamma outside (0,1)");
    if (!(eps >= 0.0 && eps < 1.0))
      throw std::invalid_argument("TheoryParams: eps outside [0,1)");
    if (d < 1) throw std::invalid_argument("TheoryParams: d must be >= 1");
  }
};

struct BetaPair {
  double beta;        // post-propagation mass on the true class of v*
  double beta_prime;  // post-propagation mass on each wrong class
};

// Literal evaluation of the exact one-step expressions; no approximation.
inline BetaPair beta_exact(const TheoryParams& tp) {
  tp.validate();
  const double m = static_cast<double>(tp.num_classes - 1);
  const double g = tp.gamma, h = tp.h, p = tp.p, q = tp.q, e = tp.eps;
  BetaPair out;
  out.beta = (1.0 - g) * q + g * h * ((1.0 - e) * p + e * (1.0 - p) / m) +
             g * (1.0 - h) *
                 (e * p / m + (m - e) * (1.0 - p) / (m * m));
  out.beta_prime =
      (1.0 - g) * (1.0 - q) / m +
      g * h * (e * p / m + (m - e) * (1.0 - p) / (m * m)) +
      g * (1.0 - h) / m * (e * (1.0 - p) / m + (1.0 - e) * p) +
      g * (1.0 - h) * (m - 1.0) / m *
          (e * p / m + (m - e) * (1.0 - p) / (m * m));
  return out;
}

struct CorrectionInterval {
  double q_lo = 0.0;  // max(0, unclamped)
  double q_hi = 0.0;  // 1/|Y|
  double q_lo_unclamped = 0.0;
  double c = 0.0;

  bool empty() const { return q_lo >= q_hi; }
  bool contains(double q) const { return q >= q_lo_unclamped && q <= q_hi; }
};

// The closed-form interval of q values whose prediction gets corrected by
// one propagation step, using C ~ (1 + 1/|Y|)hp - (h+p)/|Y| and
// b(eps) = (C + hp/|Y|)eps. `c_bias` is a negative-control hook: it
// perturbs C away from the derived value so the band check must fail.
inline CorrectionInterval correction_interval(const TheoryParams& tp,
                                              double c_bias = 0.0) {
  if (tp.gamma >= 1.0)
    throw std::invalid_argument("correction_interval: gamma must be < 1");
  const double y = static_cast<double>(tp.num_classes);
  const double h = tp.h, p = tp.p, g = tp.gamma, e = tp.eps;
  double c = (1.0 + 1.0 / y) * h * p - (h + p) / y;
  const double b = (c + h * p / y) * e;
  double arg = c - b;
  if (c_bias != 0.0) arg *= (1.0 - c_bias);
  CorrectionInterval out;
  out.c = c;
  out.q_hi = 1.0 / y;
  out.q_lo_unclamped = 1.0 / y - g / (1.0 - g) * arg;
  out.q_lo = std::max(0.0, out.q_lo_unclamped);
  return out;
}

// Largest teacher error ratio for which corrections remain possible:
// eps < (|Y|h - 1) / ((|Y|+1)h - 1), defined for h > 1/|Y|.
inline double epsilon_bound(double h, int num_classes) {
  const double y = static_cast<double>(num_classes);
  if (!(h > 1.0 / y))
    throw std::invalid_argument("epsilon_bound: requires h > 1/|Y|");
  return (y * h - 1.0) / ((y + 1.0) * h - 1.0);
}

// A-priori bound on |exact threshold - interval threshold|: the proof
// replaces (|Y|-2)/(|Y|-1) by 1, and the dropped term is at most
// gamma/(1-gamma) * (1 - hp) / (|Y| (|Y|-1)).
inline double approximation_band(const TheoryParams& tp) {
  const double y = static_cast<double>(tp.num_classes);
  return tp.gamma / (1.0 - tp.gamma) * (1.0 - tp.h * tp.p) / (y * (y - 1.0)) +
         1e-12;
}

struct TheoryCell {
  TheoryParams tp;
  bool exact_corrected = false;
  bool interval_corrected = false;
  double boundary_distance = 0.0;  // q - q_lo (unclamped)
  double band = 0.0;
};

struct TheoryReport {
  std::vector<TheoryCell> cells;
  long total = 0;
  long agree = 0;
  long outside_band = 0;

  double agreement_rate() const {
    return total == 0 ? 1.0 : static_cast<double>(agree) / total;
  }
};

// For every cell, compares the exact condition beta > beta' against
// membership of q in the closed-form interval and checks that any
// disagreement sits inside the approximation band.
inline TheoryReport verify_theorem(const std::vector<TheoryParams>& grid,
                                   double c_bias = 0.0) {
  TheoryReport rep;
  rep.cells.reserve(grid.size());
  for (const TheoryParams& tp : grid) {
    const BetaPair b = beta_exact(tp);
    const CorrectionInterval iv = correction_interval(tp, c_bias);
    TheoryCell cell;
    cell.tp = tp;
    cell.exact_corrected = b.beta > b.beta_prime;
    cell.interval_corrected = iv.contains(tp.q);
    cell.boundary_distance = tp.q - iv.q_lo_unclamped;
    cell.band = approximation_band(tp);
    ++rep.total;
    if (cell.exact_corrected == cell.interval_corrected) {
      ++rep.agree;
    } else if (std::abs(cell.boundary_distance) > cell.band) {
      ++rep.outside_band;
    }
    rep.cells.push_back(cell);
  }
  return rep;
}

inline std::vector<TheoryParams> default_theorem_grid() {
  std::vector<TheoryParams> grid;
  const int ys[] = {2, 3, 5, 10, 50, 100};
  const double hs[] = {0.55, 0.7, 0.85, 1.0};
  const double ps[] = {0.35, 0.6, 0.8, 0.95};
  const double gammas[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  const double epss[] = {0.0, 0.1, 0.3, 0.5};
  for (int y : ys)
    for (double h : hs)
      for (double p : ps) {
        if (p <= 1.0 / y) continue;
        for (double g : gammas)
          for (double e : epss)
            for (int j = 0; j < 8; ++j) {
              TheoryParams tp;
              tp.num_classes = y;
              tp.h = h;
              tp.p = p;
              tp.gamma = g;
              tp.eps = e;
              tp.q = (j + 0.5) / 8.0 / y;
              grid.push_back(tp);
            }
      }
  return grid;
}

struct EpsilonScanLine {
  TheoryParams base;  // eps swept, q ignored
  bool monotone = true;
  std::vector<double> q_lo_values;
};

// Checks that q_lo is non-decreasing in eps, i.e. more teacher error
// narrows the correction range. The scanned lines stay in the regime the
// analysis targets (h, p >= 1/2), where the slope C + hp/|Y| is provably
// nonnegative.
inline std::vector<EpsilonScanLine> epsilon_scan(
    const std::vector<TheoryParams>& lines, int steps = 19) {
  std::vector<EpsilonScanLine> out;
  for (const TheoryParams& base : lines) {
    EpsilonScanLine line;
    line.base = base;
    double prev = -1.0;
    for (int k = 0; k <= steps; ++k) {
      TheoryParams tp = base;
      tp.eps = 0.95 * k / steps;
      const CorrectionInterval iv = correction_interval(tp);
      line.q_lo_values.push_back(iv.q_lo);
      if (k > 0 && iv.q_lo < prev - 1e-12) line.monotone = false;
      prev = iv.q_lo;
    }
    out.push_back(line);
  }
  return out;
}

inline std::vector<TheoryParams> default_scan_lines() {
  std::vector<TheoryParams> lines;
  const int ys[] = {2, 3, 5, 10, 50};
  const double hs[] = {0.5, 0.7, 0.9, 1.0};
  const double ps[] = {0.5, 0.7, 0.9, 1.0};
  const double gammas[] = {0.1, 0.5, 0.9};
  for (int y : ys)
    for (double h : hs)
      for (double p : ps)
        for (double g : gammas) {
          TheoryParams tp;
          tp.num_classes = y;
          tp.h = h;
          tp.p = p;
          tp.gamma = g;
          tp.q = 0.0;
          tp.eps = 0.0;
          lines.push_back(tp);
        }
  return lines;
}

// Realizes the analysis concretely: builds the regular homophily graph,
// plants the synthetic teacher rows, runs exactly one propagation step
// and reports whether the argmax of the planted wrong node moved to its
// true class. One flag per trial.
inline std::vector<bool> simulate_correction(int num_nodes,
                                             const TheoryParams& tp,
                                             std::uint64_t seed,
                                             int num_trials = 1) {
  tp.validate();
  std::vector<bool> corrected;
  corrected.reserve(num_trials);
  const int y = tp.num_classes;
  const double m = static_cast<double>(y - 1);
  for (int trial = 0; trial < num_trials; ++trial) {
    const std::uint64_t trial_seed = seed + 0x9e37 * trial;
    Graph g = gen_homophily_regular(num_nodes, tp.d, tp.h, y, trial_seed,
                                    /*feature_dim=*/1, /*sep=*/0.0);
    NormAdj adj = normalize_adjacency(g);
    Matrix rows(num_nodes, y);
    for (int i = 0; i < num_nodes; ++i) {
      rows.row(i).setConstant((1.0 - tp.p) / m);
      rows(i, g.labels[i]) = tp.p;
    }
    const int v_star = 0;  // label 0 by construction
    rows.row(v_star).setConstant((1.0 - tp.q) / m);
    rows(v_star, 0) = tp.q;

    Rng rng(trial_seed, /*stream=*/0x7e11);
    const int n_corrupt =
        static_cast<int>(std::llround(tp.eps * (num_nodes - 1)));
    if (n_corrupt > 0) {
      IndexSet others;
      others.reserve(num_nodes - 1);
      for (int i = 1; i < num_nodes; ++i) others.push_back(i);
      rng.shuffle(others);
      for (int k = 0; k < n_corrupt; ++k) {
        const int i = others[k];
        int wrong = static_cast<int>(rng.uniform_int(y - 1));
        if (wrong >= g.labels[i]) ++wrong;
        rows.row(i).setConstant((1.0 - tp.p) / m);
        rows(i, wrong) = tp.p;
      }
    }

    const ProbMatrix prop =
        propagate_recursive(ProbMatrix(rows), adj, tp.gamma, 1);
    int argmax = 0;
    double best = prop(v_star, 0);
    for (int c = 1; c < y; ++c)
      if (prop(v_star, c) > best) {
        best = prop(v_star, c);
        argmax = c;
      }
    corrected.push_back(argmax == 0);
  }
  return corrected;
}

}  // namespace propdistill
