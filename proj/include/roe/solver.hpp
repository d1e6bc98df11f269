#pragma once

// Robust ordinal embedding: FISTA over beta = (G, gamma) for
//
//   F(G, gamma) = 1/2 sum_c w_c^2 (y_c - gamma_c - <G, A_c>)^2 + lambda sum_c w_c |gamma_c|
//
// subject to G PSD with rank <= p.

#include "roe/comparison_graph.hpp"
#include "roe/gram_ops.hpp"
#include "roe/rank_reduction.hpp"
#include "roe/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace roe {

enum class RankMode { per_iteration, post_hoc };

inline const char* to_string(RankMode mode) { return mode == RankMode::per_iteration ? "per_iteration" : "post_hoc"; }

inline RankMode parse_rank_mode(const std::string& s) {
  if (s == "per_iteration") return RankMode::per_iteration;
  if (s == "post_hoc") return RankMode::post_hoc;
  throw std::invalid_argument("unknown rank mode '" + s + "' (expected per_iteration or post_hoc)");
}

struct SolverConfig {
  double lambda = 1.0;
  Index p = 10;
  double margin = 1.0;
  double L0 = 1.0;
  double eta = 2.0;
  int max_iter = 2000;
  double tol_obj = 1e-7;
  int tol_obj_window = 5;
  double tol_iter = 1e-8;
  RankMode rank_mode = RankMode::per_iteration;
  int rank_period = 1;
  std::uint64_t seed = 0;
  int max_backtracks = 64;

  // lambda continuation: start at lambda_start and divide by lambda_factor
  // whenever a stage converges or runs stage_max_iter iterations.
  // lambda_start <= lambda disables it.
  double lambda_start = 1e3;
  double lambda_factor = 10.0;
  int stage_max_iter = 150;

  // Exact rank reduction runs only when |E| * (r(r+1)/2)^2 stays below
  // this; otherwise the rank step goes straight to spectral rounding.
  double rank_reduction_budget = 2e7;

  void validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (p < 1) throw std::invalid_argument("p must be >= 1");
    if (!(margin > 0.0)) throw std::invalid_argument("margin must be > 0");
    if (!(L0 > 0.0)) throw std::invalid_argument("L0 must be > 0");
    if (!(eta > 1.0)) throw std::invalid_argument("eta must be > 1");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
    if (rank_period < 1) throw std::invalid_argument("rank_period must be >= 1");
    if (tol_obj_window < 1) throw std::invalid_argument("tol_obj_window must be >= 1");
    if (!(lambda_factor > 1.0)) throw std::invalid_argument("lambda_factor must be > 1");
    if (stage_max_iter < 1) throw std::invalid_argument("stage_max_iter must be >= 1");
  }

  /// Continuation schedule ending at `lambda`.
  std::vector<double> lambda_path() const {
    std::vector<double> path;
    if (lambda_start > lambda) {
      for (double l = lambda_start; l > lambda * (1.0 + 1e-12); l /= lambda_factor) path.push_back(l);
    }
    path.push_back(lambda);
    return path;
  }
};

struct RoeProblem {
  const ComparisonGraph& graph;
  double lambda = 1.0;
  Index p = 1;

  double margin() const { return graph.margin(); }
  /// Whether p(p+1)/2 <= |E|, the counting condition under which an exact
  /// rank-p solution of the constraint system is guaranteed to exist.
  bool rank_bound_applicable() const { return p * (p + 1) / 2 <= static_cast<Index>(graph.num_edges()); }
};

/// 1/2 || W (y - gamma - Z g) ||^2.
inline double smooth_loss(const ComparisonGraph& graph, const Eigen::Ref<const Eigen::MatrixXd>& g,
                          const Eigen::Ref<const Eigen::VectorXd>& gamma) {
  const Eigen::VectorXd r = graph.weights().cwiseProduct(graph.targets() - gamma - apply_design(graph, g));
  return 0.5 * r.squaredNorm();
}

inline double weighted_l1(const ComparisonGraph& graph, const Eigen::Ref<const Eigen::VectorXd>& gamma) {
  return graph.weights().cwiseProduct(gamma.cwiseAbs()).sum();
}

inline double objective(const RoeProblem& problem, const Eigen::Ref<const Eigen::MatrixXd>& g,
                        const Eigen::Ref<const Eigen::VectorXd>& gamma) {
  if (gamma.size() != static_cast<Index>(problem.graph.num_edges())) {
    throw std::invalid_argument("objective: gamma has wrong length");
  }
  const double value = smooth_loss(problem.graph, g, gamma) + problem.lambda * weighted_l1(problem.graph, gamma);
  if (!std::isfinite(value)) throw std::domain_error("objective is not finite");
  return value;
}

struct Gradient {
  Eigen::MatrixXd g;
  Eigen::VectorXd gamma;
};

/// With r = W^2 (Z g + gamma - y): dG = sum_c r_c A_c, dgamma = r.
inline Gradient gradient_f(const ComparisonGraph& graph, const Eigen::Ref<const Eigen::MatrixXd>& g,
                           const Eigen::Ref<const Eigen::VectorXd>& gamma) {
  const Eigen::VectorXd w2 = graph.weights().cwiseAbs2();
  Eigen::VectorXd r = w2.cwiseProduct(apply_design(graph, g) + gamma - graph.targets());
  Gradient out{apply_design_adjoint(graph, r), std::move(r)};
  return out;
}

inline Gradient gradient_f(const RoeProblem& problem, const Eigen::Ref<const Eigen::MatrixXd>& g,
                           const Eigen::Ref<const Eigen::VectorXd>& gamma) {
  return gradient_f(problem.graph, g, gamma);
}

/// T_mu(v)_i = sign(v_i) max(|v_i| - mu_i, 0).
inline Eigen::VectorXd soft_threshold(const Eigen::Ref<const Eigen::VectorXd>& v,
                                      const Eigen::Ref<const Eigen::VectorXd>& mu) {
  if (v.size() != mu.size()) throw std::invalid_argument("soft_threshold: size mismatch");
  Eigen::VectorXd out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]) - mu[i];
    out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
  }
  return out;
}

inline double soft_threshold(double v, double mu) {
  const double a = std::abs(v) - mu;
  return a > 0.0 ? std::copysign(a, v) : 0.0;
}

/// gamma minimizing F for a fixed G: gamma_c = T_{lambda / w_c}(y_c - <G, A_c>).
inline Eigen::VectorXd optimal_gamma(const RoeProblem& problem, const Eigen::Ref<const Eigen::MatrixXd>& g) {
  const auto& graph = problem.graph;
  const Eigen::VectorXd residual = graph.targets() - apply_design(graph, g);
  Eigen::VectorXd mu(residual.size());
  for (Index c = 0; c < mu.size(); ++c) {
    const double w = graph.weights()[c];
    mu[c] = w > 0.0 ? problem.lambda / w : std::numeric_limits<double>::infinity();
  }
  return soft_threshold(residual, mu);
}

/// What the rank step did to one candidate G.
struct RankStepReport {
  Eigen::Index rank_in = 0;         // after PSD projection
  Eigen::Index rank_reduced = 0;    // after exact rank reduction (== rank_in when skipped)
  int reduction_loops = 0;
  bool reduction_skipped = false;   // budget exceeded
  bool rounded = false;             // spectral rounding to the top-p eigenspace was needed
  Eigen::Index rank_out = 0;
};

namespace detail {

inline Eigen::Index count_positive(const Eigen::VectorXd& descending, double rel_tol) {
  if (descending.size() == 0 || !(descending[0] > 0.0)) return 0;
  Eigen::Index r = 0;
  while (r < descending.size() && descending[r] > rel_tol * descending[0]) ++r;
  return r;
}

inline Eigen::MatrixXd assemble(const SortedEigen& eig, Eigen::Index r) {
  const auto v = eig.vectors.leftCols(r);
  return v * eig.values.head(r).asDiagonal() * v.transpose();
}

}  // namespace detail

/// Projects M onto {G PSD, rank <= p}: centre (exact, every A_c is doubly
/// centred), clamp the spectrum, then, when rank > p, run the exact rank reduction (if the
/// budget allows) and round any remaining excess to the top-p eigenspace.
inline Eigen::MatrixXd rank_step(const Eigen::Ref<const Eigen::MatrixXd>& m, const ComparisonGraph& graph, Index p,
                                 const std::vector<ConstraintMatrix>* constraints, double budget,
                                 RankStepReport* report = nullptr) {
  RankStepReport local;
  RankStepReport& rep = report ? *report : local;
  rep = {};
  SortedEigen eig = sorted_eigen(double_center(m));
  eig.values = eig.values.cwiseMax(0.0);
  const Eigen::Index r = detail::count_positive(eig.values, kPsdTolerance);
  rep.rank_in = r;
  rep.rank_reduced = r;
  if (r <= p) {
    rep.rank_out = r;
    return detail::assemble(eig, r);
  }
  Eigen::MatrixXd g = detail::assemble(eig, r);
  const double dim = static_cast<double>(r) * static_cast<double>(r + 1) / 2.0;
  if (constraints && static_cast<double>(graph.num_edges()) * dim * dim <= budget) {
    auto reduced = rank_reduce(g, *constraints, p);
    rep.reduction_loops = reduced.diagnostics.loops;
    rep.rank_reduced = reduced.diagnostics.final_rank;
    if (reduced.diagnostics.final_rank <= p) {
      rep.rank_out = reduced.diagnostics.final_rank;
      return reduced.gram;
    }
    g = std::move(reduced.gram);
    eig = sorted_eigen(g);
    eig.values = eig.values.cwiseMax(0.0);
  } else {
    rep.reduction_skipped = true;
  }
  rep.rounded = true;
  rep.rank_out = std::min(p, detail::count_positive(eig.values, kPsdTolerance));
  return detail::assemble(eig, rep.rank_out);
}

/// One accepted FISTA iteration as logged in the trace.
struct TraceEntry {
  int iteration = 0;
  double lambda = 0.0;
  double objective = 0.0;
  double lipschitz = 0.0;
  int backtracks = 0;
  bool restarted = false;
  Eigen::Index rank = 0;
  std::optional<RankStepReport> rank_step;
};

struct SolverState {
  Eigen::MatrixXd g;           // beta_k
  Eigen::VectorXd gamma;
  Eigen::MatrixXd g_prev;      // beta_{k-1}
  Eigen::VectorXd gamma_prev;
  Eigen::MatrixXd g_tilde;     // momentum iterate
  Eigen::VectorXd gamma_tilde;
  double lipschitz = 1.0;
  double t = 1.0;
  int k = 0;
  std::vector<double> objective_history;
};

struct ProxResult {
  Eigen::MatrixXd g;
  Eigen::VectorXd gamma;
  std::optional<RankStepReport> rank_step;
};

/// Forward-backward step from the momentum iterate with step 1/L.
/// `apply_rank` switches the G-prox from the PSD projection to the rank step.
inline ProxResult prox_step(const RoeProblem& problem, const SolverState& state, const Gradient& grad, double L,
                            bool apply_rank, const std::vector<ConstraintMatrix>* constraints = nullptr,
                            double budget = 2e7) {
  ProxResult out;
  const Eigen::MatrixXd m = state.g_tilde - grad.g / L;
  if (apply_rank) {
    RankStepReport rep;
    out.g = rank_step(m, problem.graph, problem.p, constraints, budget, &rep);
    out.rank_step = rep;
  } else {
    out.g = psd_project(m);
  }
  const Eigen::VectorXd mu = (problem.lambda / L) * problem.graph.weights();
  out.gamma = soft_threshold(state.gamma_tilde - grad.gamma / L, mu);
  return out;
}

struct BacktrackResult {
  double lipschitz = 0.0;
  int doublings = 0;
  ProxResult point;
};

/// Smallest L = eta^i L_prev with f(P_L) <= f(tilde) + <P_L - tilde, grad> + L/2 ||P_L - tilde||^2.
/// The nonsmooth term appears on both sides of F <= Q and cancels.
inline BacktrackResult backtrack(const RoeProblem& problem, const SolverState& state, const Gradient& grad,
                                 double f_tilde, double eta, int max_doublings, bool apply_rank,
                                 const std::vector<ConstraintMatrix>* constraints = nullptr, double budget = 2e7) {
  double L = state.lipschitz;
  for (int i = 0; i <= max_doublings; ++i) {
    ProxResult p = prox_step(problem, state, grad, L, apply_rank, constraints, budget);
    const Eigen::MatrixXd dg = p.g - state.g_tilde;
    const Eigen::VectorXd dgamma = p.gamma - state.gamma_tilde;
    const double q = f_tilde + (dg.array() * grad.g.array()).sum() + dgamma.dot(grad.gamma) +
                     0.5 * L * (dg.squaredNorm() + dgamma.squaredNorm());
    const double f_new = smooth_loss(problem.graph, p.g, p.gamma);
    if (!std::isfinite(f_new)) throw std::domain_error("backtrack: non-finite loss");
    if (f_new <= q + 1e-12 * std::max(1.0, std::abs(q))) return {L, i, std::move(p)};
    L *= eta;
  }
  throw std::runtime_error("backtrack: no valid step after " + std::to_string(max_doublings) + " doublings");
}

struct RoeSolution {
  Eigen::MatrixXd g;
  Eigen::VectorXd gamma;
  Embedding x;
  double objective = 0.0;
  double lambda = 0.0;
  int iterations = 0;
  Eigen::Index rank = 0;
  bool converged = false;
  bool diverged = false;
  std::string diagnostic;
  bool rank_bound_applicable = true;
  std::vector<std::size_t> outliers;  // edges with |gamma_c| > support threshold
  double support_threshold = 0.0;
  std::vector<TraceEntry> trace;
  std::optional<RankStepReport> final_rank_step;
};

/// Called at the end of each continuation stage with the stage's iterate.
struct StageSnapshot {
  double lambda;
  int iterations;
  const Eigen::MatrixXd& g;
  const Eigen::VectorXd& gamma;
};
using StageCallback = std::function<void(const StageSnapshot&)>;

/// Random centred rank-p start: PSD part of X^T X with X ~ N(0, 1)^{p x n}.
inline Eigen::MatrixXd initial_gram(Index n, Index p, std::uint64_t seed) {
  CounterRng rng(seed, streams::solver_init);
  Eigen::MatrixXd x(p, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < p; ++i) x(i, j) = rng.normal();
  }
  return psd_project(double_center(x.transpose() * x));
}

namespace detail {

inline double rel_change(double before, double after) {
  return std::abs(after - before) / std::max(std::abs(before), std::numeric_limits<double>::min());
}

inline void finish_solution(RoeSolution& sol, const RoeProblem& problem) {
  sol.rank = numerical_rank(sol.g, 1e-8);
  sol.support_threshold = 0.5 * problem.margin();
  sol.outliers.clear();
  for (Index c = 0; c < sol.gamma.size(); ++c) {
    if (std::abs(sol.gamma[c]) > sol.support_threshold) sol.outliers.push_back(static_cast<std::size_t>(c));
  }
  const Index dim = std::min<Index>(problem.p, sol.g.rows());
  sol.x = dim >= 1 ? factorize(sol.g, dim) : Embedding{Eigen::MatrixXd(0, sol.g.rows())};
  sol.objective = objective(problem, sol.g, sol.gamma);
}

}  // namespace detail

/// FISTA with backtracking, momentum restart, lambda continuation and the
/// configured rank schedule. Never throws on numerical trouble: the last good
/// iterate is returned with `diverged` set.
inline RoeSolution solve(const ComparisonGraph& graph, const SolverConfig& config,
                         const std::optional<Eigen::MatrixXd>& g0 = std::nullopt,
                         const StageCallback& on_stage = nullptr) {
  config.validate();
  if (graph.empty()) throw std::invalid_argument("solve: graph has no edges");
  const Index n = graph.n();
  if (config.p > n) throw std::invalid_argument("solve: p exceeds n");
  const auto path = config.lambda_path();
  const bool per_iteration = config.rank_mode == RankMode::per_iteration;
  std::vector<ConstraintMatrix> constraints = constraint_matrices(graph);

  RoeSolution sol;
  SolverState s;
  s.g = g0 ? psd_project(double_center(*g0)) : initial_gram(n, config.p, config.seed);
  s.gamma = Eigen::VectorXd::Zero(static_cast<Index>(graph.num_edges()));
  s.g_prev = s.g;
  s.gamma_prev = s.gamma;
  s.g_tilde = s.g;
  s.gamma_tilde = s.gamma;
  s.lipschitz = config.L0;

  std::size_t stage = 0;
  RoeProblem problem{graph, path[0], config.p};
  sol.rank_bound_applicable = problem.rank_bound_applicable();
  double f_prev = objective(problem, s.g, s.gamma);
  s.objective_history.push_back(f_prev);
  int stage_iter = 0;
  int small_steps = 0;
  bool restarted = false;

  auto end_stage = [&](const Eigen::MatrixXd& g, const Eigen::VectorXd& gamma) {
    if (on_stage) on_stage(StageSnapshot{problem.lambda, s.k, g, gamma});
  };

  try {
    while (s.k < config.max_iter) {
      const bool apply_rank = per_iteration && (s.k % config.rank_period == 0);
      const double f_tilde = smooth_loss(graph, s.g_tilde, s.gamma_tilde);
      const Gradient grad = gradient_f(graph, s.g_tilde, s.gamma_tilde);
      auto bt = backtrack(problem, s, grad, f_tilde, config.eta, config.max_backtracks, apply_rank, &constraints,
                          config.rank_reduction_budget);
      s.lipschitz = bt.lipschitz;
      ++s.k;
      ++stage_iter;
      const double f_new = objective(problem, bt.point.g, bt.point.gamma);

      if (f_new > f_prev && !restarted) {
        // Reject, restart momentum from the last accepted point.
        s.t = 1.0;
        s.g_tilde = s.g;
        s.gamma_tilde = s.gamma;
        restarted = true;
        continue;
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * s.t * s.t));
      const double step = std::sqrt((bt.point.g - s.g).squaredNorm() + (bt.point.gamma - s.gamma).squaredNorm());
      const double scale = std::max(1.0, std::sqrt(s.g.squaredNorm() + s.gamma.squaredNorm()));
      s.g_prev = std::move(s.g);
      s.gamma_prev = std::move(s.gamma);
      s.g = std::move(bt.point.g);
      s.gamma = std::move(bt.point.gamma);
      const double beta = (s.t - 1.0) / t_next;
      s.g_tilde = s.g + beta * (s.g - s.g_prev);
      s.gamma_tilde = s.gamma + beta * (s.gamma - s.gamma_prev);
      s.t = t_next;

      TraceEntry entry;
      entry.iteration = s.k;
      entry.lambda = problem.lambda;
      entry.objective = f_new;
      entry.lipschitz = s.lipschitz;
      entry.backtracks = bt.doublings;
      entry.restarted = restarted;
      entry.rank_step = bt.point.rank_step;
      entry.rank = bt.point.rank_step ? bt.point.rank_step->rank_out : -1;
      sol.trace.push_back(entry);
      s.objective_history.push_back(f_new);
      restarted = false;

      small_steps = detail::rel_change(f_prev, f_new) < config.tol_obj ? small_steps + 1 : 0;
      f_prev = f_new;
      const bool stalled = small_steps >= config.tol_obj_window || step / scale < config.tol_iter;
      const bool last_stage = stage + 1 == path.size();
      if (last_stage) {
        if (stalled) {
          sol.converged = true;
          break;
        }
      } else if (stalled || stage_iter >= config.stage_max_iter) {
        end_stage(s.g, s.gamma);
        ++stage;
        problem.lambda = path[stage];
        stage_iter = 0;
        small_steps = 0;
        s.t = 1.0;
        s.g_tilde = s.g;
        s.gamma_tilde = s.gamma;
        f_prev = objective(problem, s.g, s.gamma);
      }
    }
  } catch (const std::exception& e) {
    sol.diverged = true;
    sol.diagnostic = e.what();
  }
  // A run cut short before reaching the final lambda still reports at it.
  problem.lambda = path.back();
  sol.lambda = problem.lambda;
  sol.iterations = s.k;

  if (!per_iteration || config.rank_period > 1) {
    RankStepReport rep;
    s.g = rank_step(s.g, graph, config.p, &constraints, config.rank_reduction_budget, &rep);
    sol.final_rank_step = rep;
    if (rep.rounded) s.gamma = optimal_gamma(problem, s.g);
  }
  sol.g = std::move(s.g);
  sol.gamma = std::move(s.gamma);
  detail::finish_solution(sol, problem);
  end_stage(sol.g, sol.gamma);
  return sol;
}

/// Lower is better, e.g. classification error on a validation split.
using ValidationScore = std::function<double(const Eigen::MatrixXd&)>;

struct ValidatedSolution {
  RoeSolution solution;
  std::vector<std::pair<double, double>> stage_scores;  // (lambda, validation score)
};

/// Runs the continuation path down to config.lambda and keeps the stage whose
/// rank-p iterate scores lowest on `score` (ties: the later stage).
inline ValidatedSolution solve_with_validation(const ComparisonGraph& graph, const SolverConfig& config,
                                               const ValidationScore& score) {
  ValidatedSolution out;
  struct Best {
    double score = std::numeric_limits<double>::infinity();
    double lambda = 0.0;
    Eigen::MatrixXd g;
    Eigen::VectorXd gamma;
  } best;
  auto on_stage = [&](const StageSnapshot& snap) {
    const Eigen::MatrixXd g = rank_step(snap.g, graph, config.p, nullptr, 0.0);
    const double value = score(g);
    out.stage_scores.emplace_back(snap.lambda, value);
    if (value <= best.score) best = {value, snap.lambda, g, snap.gamma};
  };
  out.solution = solve(graph, config, std::nullopt, on_stage);
  if (best.lambda != out.solution.lambda) {
    RoeProblem problem{graph, best.lambda, config.p};
    out.solution.g = std::move(best.g);
    out.solution.gamma = std::move(best.gamma);
    out.solution.lambda = best.lambda;
    detail::finish_solution(out.solution, problem);
  }
  return out;
}

}  // namespace roe
