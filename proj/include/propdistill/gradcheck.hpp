#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "propdistill/nn.hpp"
#include "propdistill/rng.hpp"

namespace propdistill {

// Central-difference check of an analytic gradient. `loss_fn` re-evaluates
// the loss at the current parameter values; `grad_fn` returns analytic
// gradients matching `params` order. Samples at most `max_coords`
// coordinates and returns the worst scaled relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|).
// Callers must disable dropout: the closure has to be deterministic.
inline double grad_check(const std::function<double()>& loss_fn,
                         const std::function<std::vector<Matrix>()>& grad_fn,
                         const std::vector<Matrix*>& params, Rng& rng,
                         int max_coords = 200, double step = 1e-5) {
  const std::vector<Matrix> analytic = grad_fn();
  if (analytic.size() != params.size())
    throw std::invalid_argument("grad_check: gradient count mismatch");

  struct Coord {
    std::size_t param;
    Eigen::Index i, j;
  };
  std::vector<Coord> coords;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (Eigen::Index i = 0; i < params[k]->rows(); ++i)
      for (Eigen::Index j = 0; j < params[k]->cols(); ++j)
        coords.push_back({k, i, j});
  rng.shuffle(coords);
  if (static_cast<int>(coords.size()) > max_coords)
    coords.resize(max_coords);

  double worst = 0.0;
  for (const Coord& c : coords) {
    double& slot = (*params[c.param])(c.i, c.j);
    const double saved = slot;
    slot = saved + step;
    const double up = loss_fn();
    slot = saved - step;
    const double down = loss_fn();
    slot = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[c.param](c.i, c.j);
    const double err =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace propdistill
