#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "propdistill/graph.hpp"
#include "propdistill/rng.hpp"

namespace propdistill {

// Train / validation / test index sets, plus the production sub-splits of
// the test set (empty in pure transductive mode).
struct SplitSpec {
  IndexSet train_idx, val_idx, test_idx;
  IndexSet obs_idx, ind_idx;

  bool production_mode() const { return !ind_idx.empty(); }

  void validate(int num_nodes) const {
    std::vector<char> seen(num_nodes, 0);
    auto mark = [&](const IndexSet& set, const char* name) {
      for (int v : set) {
        if (v < 0 || v >= num_nodes)
          throw std::invalid_argument(std::string("SplitSpec: ") + name +
                                      " index out of range");
        if (seen[v]++)
          throw std::invalid_argument("SplitSpec: sets not disjoint");
      }
    };
    mark(train_idx, "train");
    mark(val_idx, "val");
    mark(test_idx, "test");
    if (production_mode()) {
      std::set<int> test(test_idx.begin(), test_idx.end());
      std::set<int> cover;
      for (int v : obs_idx)
        if (!test.count(v) || !cover.insert(v).second)
          throw std::invalid_argument("SplitSpec: obs not a test sub-split");
      for (int v : ind_idx)
        if (!test.count(v) || !cover.insert(v).second)
          throw std::invalid_argument("SplitSpec: ind not a test sub-split");
      if (cover.size() != test.size())
        throw std::invalid_argument("SplitSpec: obs+ind must cover test");
    } else if (!obs_idx.empty()) {
      throw std::invalid_argument("SplitSpec: obs without ind");
    }
  }
};

// Per-class sampling without replacement: `per_class_train` then
// `per_class_val` nodes per class, remainder to test.
inline SplitSpec make_split(const Graph& g, int per_class_train,
                            int per_class_val, std::uint64_t seed) {
  std::vector<IndexSet> by_class(g.num_classes);
  for (int i = 0; i < g.num_nodes; ++i) by_class[g.labels[i]].push_back(i);
  Rng rng(seed, /*stream=*/0x5117);
  SplitSpec s;
  for (int c = 0; c < g.num_classes; ++c) {
    IndexSet& ids = by_class[c];
    if (static_cast<int>(ids.size()) < per_class_train + per_class_val)
      throw std::invalid_argument("make_split: class " + std::to_string(c) +
                                  " too small");
    rng.shuffle(ids);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (static_cast<int>(k) < per_class_train)
        s.train_idx.push_back(ids[k]);
      else if (static_cast<int>(k) < per_class_train + per_class_val)
        s.val_idx.push_back(ids[k]);
      else
        s.test_idx.push_back(ids[k]);
    }
  }
  std::sort(s.train_idx.begin(), s.train_idx.end());
  std::sort(s.val_idx.begin(), s.val_idx.end());
  std::sort(s.test_idx.begin(), s.test_idx.end());
  s.validate(g.num_nodes);
  return s;
}

struct ProductionSplit {
  Graph graph;  // cross edges between obs and ind removed
  SplitSpec split;
};

// Holds out `ind_fraction` of the test nodes: their edges to the rest of
// the test set are removed and their features are never read in training.
inline ProductionSplit make_production_split(const Graph& g,
                                             const SplitSpec& transductive,
                                             double ind_fraction,
                                             std::uint64_t seed) {
  if (transductive.production_mode())
    throw std::invalid_argument(
        "make_production_split: expected a transductive split");
  if (!(ind_fraction > 0.0 && ind_fraction < 1.0))
    throw std::invalid_argument(
        "make_production_split: ind_fraction outside (0,1)");
  IndexSet test = transductive.test_idx;
  const int n_ind = static_cast<int>(
      std::llround(ind_fraction * static_cast<double>(test.size())));
  if (n_ind < 1)
    throw std::invalid_argument(
        "make_production_split: empty inductive set disallowed");
  if (n_ind >= static_cast<int>(test.size()))
    throw std::invalid_argument(
        "make_production_split: empty observed set disallowed");
  Rng rng(seed, /*stream=*/0x9b0d);
  rng.shuffle(test);
  ProductionSplit out;
  out.split = transductive;
  out.split.ind_idx.assign(test.begin(), test.begin() + n_ind);
  out.split.obs_idx.assign(test.begin() + n_ind, test.end());
  std::sort(out.split.ind_idx.begin(), out.split.ind_idx.end());
  std::sort(out.split.obs_idx.begin(), out.split.obs_idx.end());
  out.split.validate(g.num_nodes);
  out.graph = remove_cross_edges(g, out.split.obs_idx, out.split.ind_idx);
  return out;
}

// ---------------------------------------------------------------------
// Chains generator

struct ChainsData {
  Graph graph;
  SplitSpec split;
  IndexSet far_idx;  // nodes more than 2 hops from their base node
};

// `num_chains` disjoint paths of `length` nodes each; every node in a
// chain shares the chain's class. Class information lives only in the
// base node (chain endpoint), which carries an exact one-hot feature row.
// Other nodes get zero-mean noise of scale `noise_std` — with exact zeros
// a feature-only student cannot tell far nodes apart at all, so the
// default keeps a little per-node identity.
inline ChainsData gen_chains(int num_chains, int length, int num_classes,
                             std::uint64_t seed, double noise_std = 0.5) {
  if (num_chains < 1 || length < 1 || num_classes < 1)
    throw std::invalid_argument("gen_chains: bad sizes");
  if (num_chains % num_classes != 0)
    throw std::invalid_argument(
        "gen_chains: num_chains must be divisible by num_classes");
  const int n = num_chains * length;
  Rng rng(seed, /*stream=*/0xc4a1);
  Matrix features = Matrix::Zero(n, num_classes);
  std::vector<int> labels(n);
  std::vector<Edge> edges;
  ChainsData out;
  for (int c = 0; c < num_chains; ++c) {
    const int cls = c % num_classes;
    const int base = c * length;
    for (int j = 0; j < length; ++j) {
      const int v = base + j;
      labels[v] = cls;
      if (j == 0) {
        features(v, cls) = 1.0;
      } else if (noise_std > 0.0) {
        for (int f = 0; f < num_classes; ++f)
          features(v, f) = noise_std * rng.normal();
      }
      if (j + 1 < length) edges.push_back({v, v + 1});
      if (j == 0)
        out.split.train_idx.push_back(v);
      else if (j == 1)
        out.split.val_idx.push_back(v);
      else
        out.split.test_idx.push_back(v);
      if (j > 2) out.far_idx.push_back(v);
    }
  }
  out.graph =
      build_graph(n, edges, std::move(features), std::move(labels), num_classes);
  out.split.validate(n);
  return out;
}

// Recover the chain layout from a loaded bundle: every connected
// component must be a path whose single one-hot-feature endpoint is the
// base node. Errors out on anything that is not a chains bundle.
inline ChainsData derive_chains_structure(const Graph& g) {
  auto is_one_hot = [&](int v) {
    int ones = 0;
    for (int f = 0; f < g.feature_dim(); ++f) {
      const double x = g.features(v, f);
      if (x == 1.0)
        ++ones;
      else if (x != 0.0)
        return false;
    }
    return ones == 1 && g.feature_dim() >= g.num_classes &&
           g.features(v, g.labels[v]) == 1.0;
  };

  ChainsData out;
  out.graph = g;
  std::vector<char> visited(g.num_nodes, 0);
  for (int start = 0; start < g.num_nodes; ++start) {
    if (visited[start]) continue;
    // collect the component
    IndexSet comp;
    std::vector<int> stack = {start};
    visited[start] = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (int k = g.adj_ptr[v]; k < g.adj_ptr[v + 1]; ++k) {
        const int w = g.adj_idx[k];
        if (!visited[w]) {
          visited[w] = 1;
          stack.push_back(w);
        }
      }
    }
    int base = -1;
    for (int v : comp) {
      if (g.degree(v) > 2)
        throw std::invalid_argument(
            "derive_chains_structure: component is not a path");
      if (g.labels[v] != g.labels[start])
        throw std::invalid_argument(
            "derive_chains_structure: mixed labels within a chain");
      const bool endpoint = g.degree(v) <= 1;
      if (endpoint && is_one_hot(v)) base = v;
    }
    if (base < 0)
      throw std::invalid_argument(
          "derive_chains_structure: no one-hot base endpoint found");
    // walk the path from the base
    int prev = -1, cur = base, hop = 0;
    while (cur >= 0) {
      if (hop == 0)
        out.split.train_idx.push_back(cur);
      else if (hop == 1)
        out.split.val_idx.push_back(cur);
      else
        out.split.test_idx.push_back(cur);
      if (hop > 2) out.far_idx.push_back(cur);
      int next = -1;
      for (int k = g.adj_ptr[cur]; k < g.adj_ptr[cur + 1]; ++k)
        if (g.adj_idx[k] != prev) next = g.adj_idx[k];
      prev = cur;
      cur = next;
      ++hop;
    }
    if (hop != static_cast<int>(comp.size()))
      throw std::invalid_argument(
          "derive_chains_structure: component is not a simple path");
  }
  std::sort(out.split.train_idx.begin(), out.split.train_idx.end());
  std::sort(out.split.val_idx.begin(), out.split.val_idx.end());
  std::sort(out.split.test_idx.begin(), out.split.test_idx.end());
  std::sort(out.far_idx.begin(), out.far_idx.end());
  out.split.validate(g.num_nodes);
  return out;
}

// ---------------------------------------------------------------------
// Regular homophily generator

namespace detail {

// Pair up stubs into simple edges under a validity predicate, fixing
// collisions by swap-repair against already accepted edges.
template <typename Valid>
inline void pair_stubs(std::vector<int> stubs, Valid&& valid,
                       std::set<Edge>& edge_set, std::vector<Edge>& edges,
                       Rng& rng, const char* what) {
  if (stubs.size() % 2 != 0)
    throw std::invalid_argument(std::string("gen_homophily_regular: odd stub "
                                            "count for ") +
                                what);
  auto canon = [](int u, int v) -> Edge {
    return u < v ? Edge{u, v} : Edge{v, u};
  };
  auto ok = [&](int u, int v) {
    return u != v && valid(u, v) && !edge_set.count(canon(u, v));
  };
  const int outer_budget = 40;
  for (int attempt = 0; attempt < outer_budget; ++attempt) {
    rng.shuffle(stubs);
    std::vector<Edge> accepted;
    std::vector<int> leftover;
    std::set<Edge> local;
    auto try_accept = [&](int u, int v) {
      const Edge e = canon(u, v);
      if (ok(u, v) && !local.count(e)) {
        local.insert(e);
        accepted.push_back(e);
        return true;
      }
      return false;
    };
    for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
      if (!try_accept(stubs[i], stubs[i + 1])) {
        leftover.push_back(stubs[i]);
        leftover.push_back(stubs[i + 1]);
      }
    }
    // swap-repair: rewire each stuck pair against a random accepted edge
    long repair_budget = 400 + 200 * static_cast<long>(stubs.size());
    while (!leftover.empty() && repair_budget > 0 && !accepted.empty()) {
      --repair_budget;
      const int u = leftover[leftover.size() - 2];
      const int v = leftover[leftover.size() - 1];
      if (try_accept(u, v)) {
        leftover.pop_back();
        leftover.pop_back();
        continue;
      }
      const std::size_t pick = rng.uniform_int(accepted.size());
      const auto [x, y] = accepted[pick];
      const bool flip = rng.bernoulli(0.5);
      const int p1 = flip ? y : x;
      const int p2 = flip ? x : y;
      const Edge e1 = canon(u, p1);
      const Edge e2 = canon(v, p2);
      if (u != p1 && v != p2 && valid(u, p1) && valid(v, p2) &&
          !edge_set.count(e1) && !edge_set.count(e2) && !local.count(e1) &&
          !local.count(e2) && e1 != e2) {
        local.erase(canon(x, y));
        local.insert(e1);
        local.insert(e2);
        accepted[pick] = e1;
        accepted.push_back(e2);
        leftover.pop_back();
        leftover.pop_back();
      }
    }
    if (leftover.empty()) {
      for (const Edge& e : accepted) {
        edge_set.insert(e);
        edges.push_back(e);
      }
      return;
    }
  }
  throw std::runtime_error(std::string("gen_homophily_regular: infeasible "
                                       "parameters after retry budget (") +
                           what + ")");
}

// Zip two equal-length stub lists into a bipartite matching; only
// duplicate edges can be invalid, fixed by partner swaps.
inline void pair_stubs_bipartite(std::vector<int> a_stubs,
                                 std::vector<int> b_stubs,
                                 std::set<Edge>& edge_set,
                                 std::vector<Edge>& edges, Rng& rng,
                                 const char* what) {
  if (a_stubs.size() != b_stubs.size())
    throw std::invalid_argument(
        std::string("gen_homophily_regular: unbalanced stubs for ") + what);
  const std::size_t n = a_stubs.size();
  auto canon = [](int u, int v) -> Edge {
    return u < v ? Edge{u, v} : Edge{v, u};
  };
  const int outer_budget = 40;
  for (int attempt = 0; attempt < outer_budget; ++attempt) {
    rng.shuffle(a_stubs);
    rng.shuffle(b_stubs);
    std::map<Edge, int> count;
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < n; ++i) {
      const Edge e = canon(a_stubs[i], b_stubs[i]);
      if (++count[e] > 1 || edge_set.count(e)) bad.push_back(i);
    }
    auto count_of = [&](const Edge& e) {
      auto it = count.find(e);
      return it == count.end() ? 0 : it->second;
    };
    long budget = 400 + 200 * static_cast<long>(n);
    while (!bad.empty() && budget-- > 0) {
      const std::size_t i = bad.back();
      const Edge ei = canon(a_stubs[i], b_stubs[i]);
      if (count_of(ei) == 1 && !edge_set.count(ei)) {
        bad.pop_back();
        continue;
      }
      const std::size_t j = rng.uniform_int(n);
      if (j == i) continue;
      const Edge ej = canon(a_stubs[j], b_stubs[j]);
      const Edge ni = canon(a_stubs[i], b_stubs[j]);
      const Edge nj = canon(a_stubs[j], b_stubs[i]);
      auto count_after = [&](const Edge& e) {
        return count_of(e) - (e == ei) - (e == ej);
      };
      if (ni != nj && count_after(ni) == 0 && count_after(nj) == 0 &&
          !edge_set.count(ni) && !edge_set.count(nj)) {
        --count[ei];
        --count[ej];
        ++count[ni];
        ++count[nj];
        std::swap(b_stubs[i], b_stubs[j]);
        bad.push_back(j);
      }
    }
    bool clean = true;
    for (const auto& [e, c] : count)
      if (c > 1 || (c > 0 && edge_set.count(e))) clean = false;
    if (clean) {
      for (std::size_t i = 0; i < n; ++i) {
        const Edge e = canon(a_stubs[i], b_stubs[i]);
        edge_set.insert(e);
        edges.push_back(e);
      }
      return;
    }
  }
  throw std::runtime_error(std::string("gen_homophily_regular: infeasible "
                                       "parameters after retry budget (") +
                           what + ")");
}

}  // namespace detail

// Every node gets degree exactly d with round(h*d) same-class neighbors.
// Cross-class neighbors are spread uniformly over the other classes:
// exactly (d - s)/(|Y|-1) per class when that divides, otherwise uniform
// in expectation via pooled matching. Features are a Gaussian mixture
// with one mean per class (scale `sep`, noise 1) so feature-only models
// see a learnable but imperfect signal.
inline Graph gen_homophily_regular(int num_nodes, int degree, double homophily,
                                   int num_classes, std::uint64_t seed,
                                   int feature_dim = 16, double sep = 1.0) {
  if (num_nodes < 1 || degree < 1 || num_classes < 2 || feature_dim < 1)
    throw std::invalid_argument("gen_homophily_regular: bad sizes");
  if (!(homophily >= 0.0 && homophily <= 1.0))
    throw std::invalid_argument("gen_homophily_regular: h outside [0,1]");
  if (num_nodes % num_classes != 0)
    throw std::invalid_argument(
        "gen_homophily_regular: num_nodes must be divisible by num_classes");
  const int per_class = num_nodes / num_classes;
  const int same = static_cast<int>(std::lround(homophily * degree));
  const int cross = degree - same;
  if (same > per_class - 1)
    throw std::invalid_argument(
        "gen_homophily_regular: same-class degree exceeds class size");
  if ((static_cast<long>(per_class) * same) % 2 != 0)
    throw std::invalid_argument(
        "gen_homophily_regular: per-class node count * round(h*d) must be even");
  if (cross > num_nodes - per_class)
    throw std::invalid_argument(
        "gen_homophily_regular: cross degree exceeds other-class capacity");

  std::vector<int> labels(num_nodes);
  for (int i = 0; i < num_nodes; ++i) labels[i] = i / per_class;

  Rng rng(seed, /*stream=*/0x8e6b);
  std::set<Edge> edge_set;
  std::vector<Edge> edges;

  if (same > 0) {
    for (int c = 0; c < num_classes; ++c) {
      std::vector<int> stubs;
      stubs.reserve(static_cast<std::size_t>(per_class) * same);
      for (int i = 0; i < per_class; ++i)
        for (int k = 0; k < same; ++k) stubs.push_back(c * per_class + i);
      detail::pair_stubs(
          std::move(stubs), [](int, int) { return true; }, edge_set, edges,
          rng, "same-class block");
    }
  }

  if (cross > 0) {
    if (cross % (num_classes - 1) == 0) {
      const int k = cross / (num_classes - 1);
      if (k > per_class)
        throw std::invalid_argument(
            "gen_homophily_regular: per-pair cross degree exceeds class size");
      for (int a = 0; a < num_classes; ++a) {
        for (int b = a + 1; b < num_classes; ++b) {
          std::vector<int> a_stubs, b_stubs;
          for (int i = 0; i < per_class; ++i)
            for (int t = 0; t < k; ++t) {
              a_stubs.push_back(a * per_class + i);
              b_stubs.push_back(b * per_class + i);
            }
          detail::pair_stubs_bipartite(std::move(a_stubs), std::move(b_stubs),
                                       edge_set, edges, rng,
                                       "cross-class pair");
        }
      }
    } else {
      std::vector<int> stubs;
      stubs.reserve(static_cast<std::size_t>(num_nodes) * cross);
      for (int i = 0; i < num_nodes; ++i)
        for (int k = 0; k < cross; ++k) stubs.push_back(i);
      detail::pair_stubs(
          std::move(stubs),
          [&](int u, int v) { return labels[u] != labels[v]; }, edge_set,
          edges, rng, "cross-class pool");
    }
  }

  Matrix means(num_classes, feature_dim);
  for (int c = 0; c < num_classes; ++c)
    for (int f = 0; f < feature_dim; ++f) means(c, f) = sep * rng.normal();
  Matrix features(num_nodes, feature_dim);
  for (int i = 0; i < num_nodes; ++i)
    for (int f = 0; f < feature_dim; ++f)
      features(i, f) = means(labels[i], f) + rng.normal();

  return build_graph(num_nodes, edges, std::move(features), std::move(labels),
                     num_classes);
}

}  // namespace propdistill
