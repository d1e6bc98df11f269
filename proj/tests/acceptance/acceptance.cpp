// Acceptance driver: one PASS / FAIL / SKIP line per criterion.
//
// Environment overrides:
//   ROE_ACCEPTANCE_TRIALS         trials for the synthetic protocol (default 20)
//   ROE_ACCEPTANCE_LAMBDA_TRIALS  trials per lambda in the lambda sweep (default 10)
//   ROE_ACCEPTANCE_JOBS           worker threads (default: hardware concurrency)
//   ROE_MUSIC_TRIPLETS            path to an i,j,k triplet CSV for the music check

#include "roe/roe.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

std::size_t env_size(const char* name, std::size_t fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  return static_cast<std::size_t>(std::stoul(v));
}

unsigned jobs() {
  const auto hw = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(env_size("ROE_ACCEPTANCE_JOBS", hw));
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

double median_of(std::vector<double> v) { return roe::summarize(v).median; }

// ------------------------------------------------------------ synthetic protocol (1-3)

struct Protocol {
  std::vector<roe::TrialResult> clean;
  std::vector<roe::TrialResult> noisy;
  std::size_t failures = 0;
};

const Protocol& protocol() {
  static const Protocol result = [] {
    Protocol p;
    const std::size_t trials = env_size("ROE_ACCEPTANCE_TRIALS", 20);
    roe::TrialConfig cfg;  // n = 100, dim = p = 10, 10000 train triplets, 15-50 votes
    const auto t0 = std::chrono::steady_clock::now();
    p.clean = roe::run_trials(cfg, 1000, trials, jobs());
    cfg.data.outlier_ratio = 0.25;
    cfg.baselines.clear();
    p.noisy = roe::run_trials(cfg, 1000, trials, jobs());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto* set : {&p.clean, &p.noisy})
      for (const auto& r : *set) {
        if (r.failed) {
          ++p.failures;
          std::cerr << "trial " << r.seed << " failed: " << r.message << '\n';
        }
      }
    std::cerr << "synthetic protocol: " << trials << " trials x 2 settings in " << fmt(secs) << " s\n";
    return p;
  }();
  return result;
}

std::vector<double> roe_errors(const std::vector<roe::TrialResult>& rs) {
  std::vector<double> out;
  for (const auto& r : rs) out.push_back(r.roe_error);
  return out;
}

std::vector<double> baseline_errors(const std::vector<roe::TrialResult>& rs, roe::BaselineMethod m) {
  std::vector<double> out;
  for (const auto& r : rs) {
    const auto it = r.baseline_errors.find(m);
    if (it != r.baseline_errors.end()) out.push_back(it->second);
  }
  return out;
}

const std::vector<roe::BaselineMethod> kBaselines{roe::BaselineMethod::gnmds, roe::BaselineMethod::ckl,
                                                  roe::BaselineMethod::ste};

Outcome criterion_clean() {
  const auto& p = protocol();
  const double roe_med = median_of(roe_errors(p.clean));
  bool below_all = true;
  std::string detail = "ROE median " + fmt(roe_med) + " (<= 0.13 required)";
  for (auto m : kBaselines) {
    const double b = median_of(baseline_errors(p.clean, m));
    below_all &= roe_med < b;
    detail += std::string(", ") + roe::to_string(m) + " " + fmt(b);
  }
  detail += below_all ? "; below every baseline" : "; NOT below every baseline";
  if (p.failures) detail += "; " + std::to_string(p.failures) + " failed trials";
  return verdict(roe_med <= 0.13 && below_all && p.failures == 0, detail);
}

Outcome criterion_contaminated() {
  const auto& p = protocol();
  const double clean = median_of(roe_errors(p.clean));
  const double noisy = median_of(roe_errors(p.noisy));
  return verdict(noisy <= 0.14 && noisy - clean <= 0.03,
                 "ROE median at q=0.25 " + fmt(noisy) + " (<= 0.14), degradation " + fmt(noisy - clean) +
                     " (<= 0.03)");
}

Outcome criterion_baseline_band() {
  const auto& p = protocol();
  std::map<roe::BaselineMethod, double> med;
  for (auto m : kBaselines) med[m] = median_of(baseline_errors(p.clean, m));
  const double ste = med[roe::BaselineMethod::ste];
  const bool in_band = ste >= 0.15 && ste <= 0.25;
  const bool gnmds_worst = med[roe::BaselineMethod::gnmds] >= med[roe::BaselineMethod::ckl] &&
                           med[roe::BaselineMethod::gnmds] >= med[roe::BaselineMethod::ste];
  return verdict(in_band && gnmds_worst, "STE-p median " + fmt(ste) + (in_band ? " in" : " outside") +
                                             " [0.15, 0.25]; GNMDS-p " + fmt(med[roe::BaselineMethod::gnmds]) +
                                             ", CKL-p " + fmt(med[roe::BaselineMethod::ckl]) +
                                             (gnmds_worst ? " (GNMDS worst)" : " (GNMDS not worst)"));
}

// ------------------------------------------------------------ lambda stability (4)

Outcome criterion_lambda() {
  const std::size_t trials = env_size("ROE_ACCEPTANCE_LAMBDA_TRIALS", 10);
  roe::TrialConfig cfg;
  cfg.baselines.clear();
  const std::vector<double> lambdas{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  const auto cells = roe::lambda_sweep(cfg, lambdas, 2000, trials, jobs());
  double lo = 1.0, hi = 0.0;
  std::string means;
  std::size_t failures = 0;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    const auto errs = roe_errors(cells[l]);
    for (const auto& r : cells[l]) failures += r.failed;
    const double mean = roe::summarize(errs).mean;
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
    means += (l ? " " : "") + fmt(mean);
  }
  return verdict(hi - lo <= 0.05 && failures == 0, "mean error range " + fmt(hi - lo) + " (<= 0.05) over " +
                                                       std::to_string(trials) + " trials/lambda; means [" + means +
                                                       "]" + (failures ? "; failed trials" : ""));
}

// ------------------------------------------------------------ rank-reduction contract (5)

Eigen::Index independent_count(const std::vector<roe::Quadruple>& tuples, roe::Index n) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(tuples.size()), n * n);
  for (std::size_t c = 0; c < tuples.size(); ++c) {
    const Eigen::MatrixXd a = oracle::dense_constraint(tuples[c], n);
    m.row(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::RowVectorXd>(a.data(), n * n);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s.size() == 0 || s[0] == 0.0 ? 0 : (s.array() > 1e-9 * s[0]).count();
}

Outcome criterion_rank_reduction() {
  roe::CounterRng rng(5005);
  int violations = 0;
  double worst_drift = 0.0, worst_min_eig = 0.0;
  std::string first;
  for (int inst = 0; inst < 200; ++inst) {
    const roe::Index n = 4 + static_cast<roe::Index>(rng.below(17));  // 4..20
    const std::size_t edges = 1 + rng.below(40);                       // 1..40
    std::vector<roe::Quadruple> tuples;
    std::vector<roe::ConstraintMatrix> constraints;
    for (std::size_t c = 0; c < edges; ++c) {
      tuples.push_back(oracle::random_tuple(rng, n, rng.below(2) == 0));
      constraints.push_back(roe::constraint_matrix(tuples.back(), n));
    }
    const Eigen::MatrixXd g0 = oracle::random_psd(rng, n, n);
    Eigen::VectorXd before(static_cast<Eigen::Index>(edges));
    for (std::size_t c = 0; c < edges; ++c)
      before[static_cast<Eigen::Index>(c)] = (g0.array() * oracle::dense_constraint(tuples[c], n).array()).sum();

    roe::RankReductionWorkspace ws(g0, constraints);
    bool ok = true;
    while (auto delta = ws.null_direction()) {
      const auto r = ws.rank();
      ws.reduce_once(*delta);
      if (ws.rank() >= r) {
        ok = false;
        if (first.empty()) first = "instance " + std::to_string(inst) + ": rank did not drop";
        break;
      }
    }
    const Eigen::MatrixXd g = ws.gram();
    const double scale = std::max(1.0, before.cwiseAbs().maxCoeff());
    for (std::size_t c = 0; c < edges; ++c) {
      const double after = (g.array() * oracle::dense_constraint(tuples[c], n).array()).sum();
      worst_drift = std::max(worst_drift, std::abs(after - before[static_cast<Eigen::Index>(c)]) / scale);
    }
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().minCoeff();
    worst_min_eig = std::min(worst_min_eig, min_eig);
    const auto r = ws.rank();
    const auto m = independent_count(tuples, n);
    if (r * (r + 1) / 2 > m) {
      ok = false;
      if (first.empty())
        first = "instance " + std::to_string(inst) + ": r*=" + std::to_string(r) + " but " + std::to_string(m) +
                " independent constraints";
    }
    violations += !ok;
  }
  const bool pass = violations == 0 && worst_drift <= 1e-8 && worst_min_eig >= -1e-9;
  return verdict(pass, "200 instances; max constraint drift " + fmt(worst_drift, 3) + " (<= 1e-8), min eigenvalue " +
                           fmt(worst_min_eig, 3) + " (>= -1e-9), " + std::to_string(violations) +
                           " rank/bound violations" + (first.empty() ? "" : " (" + first + ")"));
}

// ------------------------------------------------------------ gradient (6)

Outcome criterion_gradient() {
  roe::CounterRng rng(6006);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const roe::Index n = 4 + static_cast<roe::Index>(rng.below(9));
    std::vector<roe::Annotation> raw;
    const std::size_t count = 3 + rng.below(30);
    for (std::size_t c = 0; c < count; ++c)
      raw.push_back({oracle::random_tuple(rng, n, rng.below(2) == 0), 1 + rng.below(5), {}});
    const auto graph = roe::ingest(raw, n);
    const Eigen::MatrixXd g = oracle::random_symmetric(rng, n);
    Eigen::VectorXd gamma(static_cast<Eigen::Index>(graph.num_edges()));
    for (auto& v : gamma) v = rng.normal();
    const auto grad = roe::gradient_f(graph, g, gamma);
    // f reads one triangle of G, so directions are symmetric and compared through <grad, D>.
    const Eigen::MatrixXd dg = oracle::random_symmetric(rng, n);
    Eigen::VectorXd dgamma(gamma.size());
    for (auto& v : dgamma) v = rng.normal();
    const double h = 1e-5;
    const double fd = (roe::smooth_loss(graph, g + h * dg, gamma + h * dgamma) -
                       roe::smooth_loss(graph, g - h * dg, gamma - h * dgamma)) /
                      (2 * h);
    const double analytic = (grad.g.array() * dg.array()).sum() + grad.gamma.dot(dgamma);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)));
  }
  return verdict(worst <= 1e-5, "50 instances; max relative directional-derivative error " + fmt(worst, 3));
}

// ------------------------------------------------------------ proximal oracles (7)

Outcome criterion_prox() {
  roe::CounterRng rng(7007);
  const double res = 1e-4;
  double worst_shrink = 0.0;
  for (int c = 0; c < 10000; ++c) {
    const double v = 4.0 * (rng.uniform() - 0.5);
    const double mu = 2.0 * rng.uniform();
    // argmin_x 1/2 (x - v)^2 + mu |x| on a grid of step res over [-2, 2]
    double best_x = 0.0, best_f = 0.5 * v * v;
    for (int k = -20000; k <= 20000; ++k) {
      const double x = k * res;
      const double f = 0.5 * (x - v) * (x - v) + mu * std::abs(x);
      if (f < best_f) {
        best_f = f;
        best_x = x;
      }
    }
    worst_shrink = std::max(worst_shrink, std::abs(roe::soft_threshold(v, mu) - best_x));
  }
  double worst_psd = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(29));
    const Eigen::MatrixXd m = oracle::random_symmetric(rng, n);
    worst_psd = std::max(worst_psd, (roe::psd_project(m) - oracle::psd_part_via_svd(m)).norm());
  }
  return verdict(worst_shrink <= res && worst_psd <= 1e-10,
                 "shrinkage max deviation from grid minimizer " + fmt(worst_shrink, 3) +
                     " (grid 1e-4, 10^4 coordinates); psd_project vs SVD clip max Frobenius gap " +
                     fmt(worst_psd, 3));
}

// ------------------------------------------------------------ exact recovery (8)

Outcome criterion_exact_recovery() {
  const auto toy = roe::make_toy(10, 2, 0.0, 8);
  roe::SolverConfig cfg;
  cfg.p = 2;
  const auto sol = roe::solve(toy.graph, cfg);
  const double err = roe::classification_error(sol.g, roe::comparisons_of(toy.graph));
  const double gmax = sol.gamma.size() ? sol.gamma.cwiseAbs().maxCoeff() : 0.0;
  return verdict(err == 0.0 && gmax < 1e-3 && !sol.diverged,
                 std::to_string(toy.graph.num_edges()) + " triplets; training error " + fmt(err) +
                     ", max |gamma| " + fmt(gmax, 3) + " (< 1e-3), rank " + std::to_string(sol.rank));
}

// ------------------------------------------------------------ outlier identification (9)

Outcome criterion_outliers() {
  const auto toy = roe::make_toy(10, 2, 0.25, 9);
  roe::SolverConfig cfg;
  cfg.p = 2;
  const auto sol = roe::solve(toy.graph, cfg);
  const auto planted = static_cast<std::size_t>(std::count(toy.outlier_edges.begin(), toy.outlier_edges.end(), true));
  const auto score = roe::detection_score(roe::top_k_abs(sol.gamma, planted), toy.outlier_edges);
  const double random_recall = static_cast<double>(planted) / static_cast<double>(toy.graph.num_edges());
  return verdict(score.recall >= 2.0 * random_recall,
                 "top-" + std::to_string(planted) + " recall " + fmt(score.recall) + " vs random " +
                     fmt(random_recall) + " (>= 2x required)");
}

// ------------------------------------------------------------ Condorcet (10)

Outcome criterion_condorcet() {
  const auto inst = roe::condorcet_instance();
  const bool cyclic = roe::has_directed_cycle(roe::majority_vote_prune(inst.graph));
  roe::SolverConfig cfg;
  cfg.p = 2;
  const auto sol = roe::solve(inst.graph, cfg);
  const double err = roe::classification_error(sol.g, inst.truth);
  return verdict(cyclic && err == 0.0, std::string("pruned graph ") + (cyclic ? "cyclic" : "acyclic") +
                                           "; ROE error on true orientations " + fmt(err));
}

// ------------------------------------------------------------ music (optional)

Outcome criterion_music() {
  const char* path = std::getenv("ROE_MUSIC_TRIPLETS");
  if (!path || !*path) return {Verdict::skip, "ROE_MUSIC_TRIPLETS not set; external dataset unavailable"};
  const auto loaded = roe::load_annotations(path);
  std::vector<roe::Annotation> all = loaded.annotations;
  roe::Index n = loaded.n.value_or(0);
  for (const auto& a : all) n = std::max({n, a.tuple.i + 1, a.tuple.j + 1, a.tuple.k + 1, a.tuple.l + 1});
  const std::size_t trials = env_size("ROE_ACCEPTANCE_TRIALS", 20);
  std::vector<double> roe_errs;
  std::map<roe::BaselineMethod, std::vector<double>> base_errs;
  std::vector<std::size_t> order(all.size());
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    roe::CounterRng rng(9000 + t);
    rng.shuffle(order);
    const std::size_t n_test = all.size() / 10, n_val = all.size() / 10;
    std::vector<roe::Annotation> train;
    std::vector<roe::Quadruple> val, test;
    std::vector<roe::Triple> val_triples;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& a = all[order[r]];
      if (r < n_test) {
        test.push_back(a.tuple);
      } else if (r < n_test + n_val) {
        val.push_back(a.tuple);
        if (a.tuple.shares_anchor()) val_triples.push_back({a.tuple.i, a.tuple.j, a.tuple.k});
      } else {
        train.push_back(a);
      }
    }
    const auto graph = roe::ingest(train, n);
    roe::SolverConfig sc;
    const auto sol = roe::solve_with_validation(graph, sc, [&val](const Eigen::MatrixXd& g) {
                       return roe::classification_error(g, val);
                     }).solution;
    roe_errs.push_back(roe::classification_error(sol.g, test));
    const auto input = roe::baseline_input(graph);
    for (auto m : kBaselines) {
      roe::BaselineSpec bs;
      bs.method = m;
      bs.p = sc.p;
      bs.seed = t;
      const auto fit = roe::fit_baseline(bs, input, val_triples);
      base_errs[m].push_back(roe::classification_error(fit.g, test));
    }
  }
  const double roe_std = roe::summarize(roe_errs).stddev;
  bool ok = true;
  std::string detail = "ROE std " + fmt(roe_std);
  for (auto& [m, errs] : base_errs) {
    const double s = roe::summarize(errs).stddev;
    ok &= roe_std < s;
    detail += std::string(", ") + roe::to_string(m) + " std " + fmt(s);
  }
  return verdict(ok, detail);
}

}  // namespace

int main() {
  struct Entry {
    const char* label;
    Outcome (*run)();
  };
  const Entry entries[] = {
      {"1 clean synthetic reproduction", criterion_clean},
      {"2 contamination robustness", criterion_contaminated},
      {"3 baseline sanity band", criterion_baseline_band},
      {"4 lambda stability", criterion_lambda},
      {"5 rank-reduction contract", criterion_rank_reduction},
      {"6 gradient correctness", criterion_gradient},
      {"7 proximal oracles", criterion_prox},
      {"8 exact recovery", criterion_exact_recovery},
      {"9 outlier identification", criterion_outliers},
      {"10 Condorcet demonstration", criterion_condorcet},
      {"music-artists std", criterion_music},
  };
  int failures = 0;
  for (const auto& e : entries) {
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o = {Verdict::fail, std::string("threw: ") + ex.what()};
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::fail;
    std::cout << tag << "  [" << e.label << "] " << o.detail << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
