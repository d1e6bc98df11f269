#pragma once

// Comparison baselines (GNMDS, CKL, STE, each with a rank-p projection after
// every gradient step), majority-vote pruning and evaluation metrics.

#include "roe/comparison_graph.hpp"
#include "roe/gram_ops.hpp"
#include "roe/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace roe {

// ---------------------------------------------------------------- metrics

/// Fraction of comparisons with d_ij >= d_lk under G. Ties count as wrong.
inline double classification_error(const Eigen::Ref<const Eigen::MatrixXd>& g, std::span<const Quadruple> comparisons) {
  if (comparisons.empty()) throw std::invalid_argument("classification_error: empty comparison set");
  const Eigen::MatrixXd d = gram_to_distance(g);
  std::size_t wrong = 0;
  for (const auto& q : comparisons) wrong += d(q.i, q.j) >= d(q.l, q.k) ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(comparisons.size());
}

inline double classification_error(const Eigen::Ref<const Eigen::MatrixXd>& g, std::span<const Triple> comparisons) {
  if (comparisons.empty()) throw std::invalid_argument("classification_error: empty comparison set");
  const Eigen::MatrixXd d = gram_to_distance(g);
  std::size_t wrong = 0;
  for (const auto& t : comparisons) wrong += d(t.i, t.j) >= d(t.i, t.k) ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(comparisons.size());
}

inline double classification_error(const Eigen::Ref<const Eigen::MatrixXd>& g, const std::vector<Triple>& comparisons) {
  return classification_error(g, std::span<const Triple>(comparisons));
}

inline double classification_error(const Eigen::Ref<const Eigen::MatrixXd>& g,
                                   const std::vector<Quadruple>& comparisons) {
  return classification_error(g, std::span<const Quadruple>(comparisons));
}

/// Edge orientations of a graph as a comparison list.
inline std::vector<Quadruple> comparisons_of(const ComparisonGraph& graph) {
  std::vector<Quadruple> out;
  out.reserve(graph.num_edges());
  for (const auto& e : graph.edges()) out.push_back(e.tuple);
  return out;
}

struct Summary {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single value
  double mean = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(values.begin(), values.end());
  Summary s;
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

struct DetectionScore {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t actual = 0;
};

/// Scores a set of flagged edge indices against ground-truth outlier flags.
inline DetectionScore detection_score(const std::vector<std::size_t>& flagged, const std::vector<bool>& truth) {
  DetectionScore s;
  s.predicted = flagged.size();
  s.actual = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
  for (auto c : flagged) {
    if (c >= truth.size()) throw std::out_of_range("detection_score: edge index out of range");
    s.true_positives += truth[c] ? 1 : 0;
  }
  s.precision = s.predicted ? static_cast<double>(s.true_positives) / static_cast<double>(s.predicted) : 0.0;
  s.recall = s.actual ? static_cast<double>(s.true_positives) / static_cast<double>(s.actual) : 0.0;
  return s;
}

/// Indices of the k largest |v_c| (stable: lower index wins ties).
inline std::vector<std::size_t> top_k_abs(const Eigen::Ref<const Eigen::VectorXd>& v, std::size_t k) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) idx[c] = c;
  k = std::min(k, idx.size());
  std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) {
    return std::abs(v[static_cast<Index>(a)]) > std::abs(v[static_cast<Index>(b)]);
  });
  idx.resize(k);
  return idx;
}

// ---------------------------------------------------------------- pruning

/// For each pair of opposite edges keep only the heavier one; ties drop both.
inline ComparisonGraph majority_vote_prune(const ComparisonGraph& graph) {
  std::vector<AggregatedEdge> kept;
  for (std::size_t c = 0; c < graph.num_edges(); ++c) {
    const auto rev = graph.reverse_of(c);
    if (rev && graph.edge(*rev).weight >= graph.edge(c).weight) continue;
    kept.push_back(graph.edge(c));
  }
  return ComparisonGraph::from_edges(graph.n(), std::move(kept), graph.margin());
}

/// Same edges, every weight set to one.
inline ComparisonGraph unit_weights(const ComparisonGraph& graph) {
  auto edges = graph.edges();
  for (auto& e : edges) e.weight = 1.0;
  return ComparisonGraph::from_edges(graph.n(), std::move(edges), graph.margin());
}

/// Whether the pair-level digraph ({i,j} -> {l,k} per edge) has a directed cycle.
inline bool has_directed_cycle(const ComparisonGraph& graph) {
  const Index n = graph.n();
  auto pair_id = [n](Index a, Index b) {
    const auto [lo, hi] = detail::ordered_pair(a, b);
    return static_cast<std::size_t>(lo * n + hi);
  };
  const auto vertices = static_cast<std::size_t>(n * n);
  std::vector<std::vector<std::size_t>> out(vertices);
  for (const auto& e : graph.edges()) out[pair_id(e.tuple.i, e.tuple.j)].push_back(pair_id(e.tuple.l, e.tuple.k));
  // Iterative three-colour DFS.
  std::vector<std::uint8_t> colour(vertices, 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t root = 0; root < vertices; ++root) {
    if (colour[root] || out[root].empty()) continue;
    stack.push_back({root, 0});
    colour[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < out[v].size()) {
        const std::size_t u = out[v][next++];
        if (colour[u] == 1) return true;
        if (colour[u] == 0) {
          colour[u] = 1;
          stack.push_back({u, 0});
        }
      } else {
        colour[v] = 2;
        stack.pop_back();
      }
    }
  }
  return false;
}

// ---------------------------------------------------------------- baselines

enum class BaselineMethod { gnmds, ckl, ste };

inline const char* to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::gnmds: return "GNMDS-p";
    case BaselineMethod::ckl: return "CKL-p";
    case BaselineMethod::ste: return "STE-p";
  }
  return "?";
}

inline BaselineMethod parse_baseline_method(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (s.ends_with("-p")) s.resize(s.size() - 2);
  if (s == "gnmds") return BaselineMethod::gnmds;
  if (s == "ckl") return BaselineMethod::ckl;
  if (s == "ste") return BaselineMethod::ste;
  throw std::invalid_argument("unknown baseline '" + s + "' (expected gnmds, ckl or ste)");
}

struct BaselineSpec {
  BaselineMethod method = BaselineMethod::ste;
  Index p = 10;
  double hinge_margin = 1.0;  // GNMDS
  double mu0 = 0.05;          // CKL additive constant
  double trace_weight = 0.0;  // optional trace penalty on G
  double init_scale = 0.1;    // start: centred X^T X, X ~ N(0, init_scale^2)
  int max_iter = 300;
  double step0 = 1.0;
  double armijo = 1e-4;
  double tol = 1e-7;
  int tol_window = 5;
  std::uint64_t seed = 0;
};

struct BaselineFit {
  Eigen::MatrixXd g;
  BaselineSpec spec;
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  double validation_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<BaselineSpec, double>> grid_scores;
};

namespace detail {

inline void add_pair_pattern(Eigen::MatrixXd& m, Index a, Index b, double s) {
  m(a, a) += s;
  m(b, b) += s;
  m(a, b) -= s;
  m(b, a) -= s;
}

/// Mean loss over triplet edges (i, j, i, k), with j the preferred (nearer) object.
inline double baseline_loss(const BaselineSpec& spec, const ComparisonGraph& graph,
                            const Eigen::Ref<const Eigen::MatrixXd>& g, Eigen::MatrixXd* grad) {
  const Index n = graph.n();
  const double scale = 1.0 / static_cast<double>(graph.num_edges());
  if (grad) grad->setZero(n, n);
  double total = 0.0;
  for (const auto& e : graph.edges()) {
    const auto& q = e.tuple;
    const double a = pair_distance(g, q.i, q.j);
    const double b = pair_distance(g, q.l, q.k);
    const double x = a - b;
    double da = 0.0;
    double db = 0.0;
    switch (spec.method) {
      case BaselineMethod::gnmds: {
        const double h = x + spec.hinge_margin;
        if (h > 0.0) {
          total += h;
          da = 1.0;
          db = -1.0;
        }
        break;
      }
      case BaselineMethod::ckl: {
        const double bb = std::max(b, 0.0) + spec.mu0;
        const double sum = std::max(a, 0.0) + std::max(b, 0.0) + 2.0 * spec.mu0;
        total += std::log(sum) - std::log(bb);
        da = 1.0 / sum;
        db = 1.0 / sum - 1.0 / bb;
        break;
      }
      case BaselineMethod::ste: {
        // log(1 + exp(x)) = -log p(j nearer than k)
        total += x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        const double sig = x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        da = sig;
        db = -sig;
        break;
      }
    }
    if (grad) {
      add_pair_pattern(*grad, q.i, q.j, scale * da);
      add_pair_pattern(*grad, q.l, q.k, scale * db);
    }
  }
  total *= scale;
  if (spec.trace_weight > 0.0) {
    total += spec.trace_weight * g.trace();
    if (grad) {
      // Gradient of tr(G) restricted to centred matrices.
      *grad += spec.trace_weight *
               (Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n)));
    }
  }
  return total;
}

}  // namespace detail

/// Projected gradient descent with Armijo backtracking; every iterate is
/// truncated to rank p.
inline BaselineFit fit_baseline_once(const BaselineSpec& spec, const ComparisonGraph& graph) {
  if (graph.empty()) throw std::invalid_argument("fit_baseline: empty graph");
  if (!graph.all_triples()) throw std::invalid_argument("fit_baseline: baselines need triplet comparisons");
  if (spec.p < 1 || spec.p > graph.n()) throw std::invalid_argument("fit_baseline: p outside [1, n]");
  const Index n = graph.n();
  CounterRng rng(spec.seed, streams::baseline_init);
  Eigen::MatrixXd x(spec.p, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < spec.p; ++i) x(i, j) = spec.init_scale * rng.normal();
  }
  BaselineFit fit;
  fit.spec = spec;
  Eigen::MatrixXd g = truncate_rank(double_center(x.transpose() * x), spec.p);
  Eigen::MatrixXd grad;
  double loss = detail::baseline_loss(spec, graph, g, &grad);
  double step = spec.step0;
  int small = 0;
  Eigen::MatrixXd next_grad;
  for (fit.iterations = 0; fit.iterations < spec.max_iter; ++fit.iterations) {
    Eigen::MatrixXd next;
    double next_loss = 0.0;
    bool accepted = false;
    while (step > 1e-14) {
      next = truncate_rank(g - step * grad, spec.p);
      next_loss = detail::baseline_loss(spec, graph, next, &next_grad);
      const double decrease = ((g - next).array() * grad.array()).sum();
      if (std::isfinite(next_loss) && next_loss <= loss - spec.armijo * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      fit.converged = true;  // no descent direction left at machine step sizes
      break;
    }
    const double rel = std::abs(loss - next_loss) / std::max(std::abs(loss), 1e-300);
    g = std::move(next);
    grad = next_grad;
    loss = next_loss;
    step *= 1.5;
    small = rel < spec.tol ? small + 1 : 0;
    if (small >= spec.tol_window) {
      fit.converged = true;
      ++fit.iterations;
      break;
    }
  }
  fit.diverged = !g.allFinite() || !std::isfinite(loss);
  fit.g = std::move(g);
  fit.loss = loss;
  return fit;
}

/// Small validation grid per method.
inline std::vector<BaselineSpec> default_grid(const BaselineSpec& base) {
  std::vector<BaselineSpec> grid;
  auto with = [&](auto setter) {
    BaselineSpec s = base;
    setter(s);
    grid.push_back(s);
  };
  switch (base.method) {
    case BaselineMethod::gnmds:
      for (double tw : {0.0, 1e-3}) with([tw](BaselineSpec& s) { s.trace_weight = tw; });
      break;
    case BaselineMethod::ckl:
      for (double mu : {0.01, 0.05, 0.2}) with([mu](BaselineSpec& s) { s.mu0 = mu; });
      break;
    case BaselineMethod::ste:
      for (double tw : {0.0, 1e-3}) with([tw](BaselineSpec& s) { s.trace_weight = tw; });
      break;
  }
  return grid;
}

/// Fits every grid point and keeps the one with the lowest validation error
/// (first wins ties). Without a validation set only grid[0] is fitted.
inline BaselineFit fit_baseline(const std::vector<BaselineSpec>& grid, const ComparisonGraph& graph,
                                std::span<const Triple> validation) {
  if (grid.empty()) throw std::invalid_argument("fit_baseline: empty grid");
  if (validation.empty()) return fit_baseline_once(grid.front(), graph);
  BaselineFit best;
  std::vector<std::pair<BaselineSpec, double>> scores;
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& spec : grid) {
    auto fit = fit_baseline_once(spec, graph);
    const double err = fit.diverged ? 1.0 : classification_error(fit.g, validation);
    scores.emplace_back(spec, err);
    if (err < best_err) {
      best_err = err;
      best = std::move(fit);
    }
  }
  best.validation_error = best_err;
  best.grid_scores = std::move(scores);
  return best;
}

inline BaselineFit fit_baseline(const BaselineSpec& spec, const ComparisonGraph& graph,
                                std::span<const Triple> validation) {
  return fit_baseline(default_grid(spec), graph, validation);
}

/// Baseline input: majority-vote pruned, one unit-weight edge per surviving
/// comparison.
inline ComparisonGraph baseline_input(const ComparisonGraph& graph) { return unit_weights(majority_vote_prune(graph)); }

}  // namespace roe
