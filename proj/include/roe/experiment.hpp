#pragma once

// Trial runners shared by the command-line tool and the acceptance suite.

#include "roe/baselines.hpp"
#include "roe/datagen.hpp"
#include "roe/solver.hpp"

#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace roe {

/// Runs body(0..count-1) on `jobs` threads. Each index writes only its own
/// result slot, so output order never depends on scheduling. The first
/// exception is rethrown after all workers finish.
template <typename Body>
void parallel_for(std::size_t count, unsigned jobs, Body&& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct TrialConfig {
  SyntheticSpec data;
  SolverConfig solver;
  bool tune_lambda = true;  // pick lambda on the validation split along the continuation path
  std::vector<BaselineMethod> baselines{BaselineMethod::gnmds, BaselineMethod::ckl, BaselineMethod::ste};
  BaselineSpec baseline;
};

struct TrialResult {
  std::uint64_t seed = 0;
  double roe_error = 1.0;
  double roe_lambda = 0.0;
  int roe_iterations = 0;
  bool roe_converged = false;
  bool failed = false;  // a solve diverged or threw
  std::string message;
  std::map<BaselineMethod, double> baseline_errors;
  DetectionScore detection;  // top-k |gamma| against planted wrong-direction edges
};

/// One synthetic trial with every stage seeded from `seed`.
inline TrialResult run_trial(const TrialConfig& cfg, std::uint64_t seed) {
  TrialResult r;
  r.seed = seed;
  try {
    SyntheticSpec spec = cfg.data;
    spec.seed = seed;
    const auto ds = generate_dataset(spec);
    const auto graph = ds.train_graph(cfg.solver.margin);
    SolverConfig sc = cfg.solver;
    sc.seed = seed;
    sc.p = std::min<Index>(sc.p, graph.n());
    RoeSolution sol;
    if (cfg.tune_lambda) {
      sol = solve_with_validation(graph, sc, [&ds](const Eigen::MatrixXd& g) {
              return classification_error(g, ds.validation);
            }).solution;
    } else {
      sol = solve(graph, sc);
    }
    r.roe_error = classification_error(sol.g, ds.test);
    r.roe_lambda = sol.lambda;
    r.roe_iterations = sol.iterations;
    r.roe_converged = sol.converged;
    if (sol.diverged) {
      r.failed = true;
      r.message = "ROE diverged: " + sol.diagnostic;
    }
    const auto truth = wrong_direction_edges(graph, ds.points);
    const auto planted = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
    r.detection = detection_score(top_k_abs(sol.gamma, planted), truth);
    if (!cfg.baselines.empty()) {
      const auto input = baseline_input(graph);
      for (auto method : cfg.baselines) {
        BaselineSpec bs = cfg.baseline;
        bs.method = method;
        bs.p = sc.p;
        bs.seed = seed;
        const auto fit = fit_baseline(bs, input, ds.validation);
        r.baseline_errors[method] = classification_error(fit.g, ds.test);
        if (fit.diverged) {
          r.failed = true;
          r.message += std::string(r.message.empty() ? "" : "; ") + to_string(method) + " diverged";
        }
      }
    }
  } catch (const std::exception& e) {
    r.failed = true;
    r.message = e.what();
  }
  return r;
}

inline std::vector<TrialResult> run_trials(const TrialConfig& cfg, std::uint64_t base_seed, std::size_t trials,
                                           unsigned jobs = 1) {
  std::vector<TrialResult> out(trials);
  parallel_for(trials, jobs, [&](std::size_t t) { out[t] = run_trial(cfg, base_seed + t); });
  return out;
}

/// Fixed-lambda ROE errors: result[l][t] for lambdas[l], trial t.
inline std::vector<std::vector<TrialResult>> lambda_sweep(const TrialConfig& cfg, const std::vector<double>& lambdas,
                                                          std::uint64_t base_seed, std::size_t trials,
                                                          unsigned jobs = 1) {
  std::vector<std::vector<TrialResult>> out(lambdas.size(), std::vector<TrialResult>(trials));
  parallel_for(lambdas.size() * trials, jobs, [&](std::size_t cell) {
    const std::size_t l = cell / trials;
    const std::size_t t = cell % trials;
    TrialConfig c = cfg;
    c.solver.lambda = lambdas[l];
    c.tune_lambda = false;
    c.baselines.clear();
    out[l][t] = run_trial(c, base_seed + t);
  });
  return out;
}

/// All methods per outlier ratio: result[q][t].
inline std::vector<std::vector<TrialResult>> noise_sweep(const TrialConfig& cfg, const std::vector<double>& ratios,
                                                         std::uint64_t base_seed, std::size_t trials,
                                                         unsigned jobs = 1) {
  std::vector<std::vector<TrialResult>> out(ratios.size(), std::vector<TrialResult>(trials));
  parallel_for(ratios.size() * trials, jobs, [&](std::size_t cell) {
    const std::size_t q = cell / trials;
    const std::size_t t = cell % trials;
    TrialConfig c = cfg;
    c.data.outlier_ratio = ratios[q];
    out[q][t] = run_trial(c, base_seed + t);
  });
  return out;
}

/// Small fully enumerated instance: all valid triplets of n random points,
/// one vote each, a fraction q of the votes flipped.
struct ToyInstance {
  Eigen::MatrixXd points;
  LabeledTripletSet set;
  ComparisonGraph graph;
  std::vector<bool> outlier_edges;
};

inline ToyInstance make_toy(Index n, Index dim, double q, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n = n;
  spec.dim = dim;
  spec.seed = seed;
  ToyInstance toy;
  toy.points = generate_points(spec);
  toy.set = inject_outliers(LabeledTripletSet::single_votes(valid_triplets(toy.points)), q, seed);
  toy.graph = ingest(to_annotations(toy.set), n);
  toy.outlier_edges = wrong_direction_edges(toy.graph, toy.points);
  return toy;
}

/// Three object pairs a = {0,1}, b = {2,3}, c = {4,5} whose true order is
/// d_a < d_b < d_c. Votes: a<b 3:1, b<c 3:1, a<c 2 against c<a 3. Majority
/// voting keeps a->b, b->c, c->a: a cycle.
struct CondorcetInstance {
  ComparisonGraph graph;
  std::vector<Quadruple> truth;  // correct orientation of each compared pair of pairs
};

inline CondorcetInstance condorcet_instance() {
  const Quadruple ab{0, 1, 2, 3};
  const Quadruple bc{2, 3, 4, 5};
  const Quadruple ac{0, 1, 4, 5};
  std::vector<Annotation> votes{
      {ab, 3, {}}, {ab.reversed(), 1, {}}, {bc, 3, {}}, {bc.reversed(), 1, {}}, {ac, 2, {}}, {ac.reversed(), 3, {}},
  };
  return {ingest(votes, 6), {ab, bc, ac}};
}

}  // namespace roe
