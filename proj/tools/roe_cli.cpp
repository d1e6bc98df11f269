// roe_cli: generate synthetic data, fit ROE and baseline embeddings, evaluate
// them and run noise / lambda sweeps. All randomness comes from --seed.

#include "roe/roe.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitSubRunFailed = 1;
constexpr int kExitInputError = 2;

fs::path default_out(const std::string& command) {
  const char* root = std::getenv("ROE_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "roe_out") / command;
}

void add_data_flags(CLI::App& cmd, roe::SyntheticSpec& spec, std::string& flip_mode) {
  cmd.add_option("--n", spec.n, "Number of objects")->capture_default_str();
  cmd.add_option("--dim", spec.dim, "Ambient dimension of the ground-truth points")->capture_default_str();
  cmd.add_option("--variance", spec.variance, "Per-coordinate variance of the points")->capture_default_str();
  cmd.add_option("--train", spec.train_size, "Training triplets")->capture_default_str();
  cmd.add_option("--validation", spec.validation_size, "Validation triplets")->capture_default_str();
  cmd.add_option("--s-min", spec.s_min, "Minimum votes per triplet")->capture_default_str();
  cmd.add_option("--s-max", spec.s_max, "Maximum votes per triplet")->capture_default_str();
  cmd.add_option("--q", spec.outlier_ratio, "Outlier ratio")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--flip-mode", flip_mode, "Outlier granularity")
      ->capture_default_str()
      ->check(CLI::IsMember({"vote", "triplet"}));
  cmd.add_option("--noise-sigma", spec.noise_sigma, "Additive comparison noise (0 = off)")->capture_default_str();
}

struct SolverFlags {
  roe::SolverConfig config;
  std::string rank_mode = "per_iteration";
  std::string config_file;
};

void add_solver_flags(CLI::App& cmd, SolverFlags& f) {
  auto& c = f.config;
  cmd.add_option("--config", f.config_file, "JSON file with solver settings (flags override it)");
  cmd.add_option("--lambda", c.lambda, "Outlier penalty weight")->capture_default_str();
  cmd.add_option("--p", c.p, "Embedding rank")->capture_default_str();
  cmd.add_option("--margin", c.margin, "Target margin m (y_c = -m)")->capture_default_str();
  cmd.add_option("--L0", c.L0, "Initial Lipschitz estimate")->capture_default_str();
  cmd.add_option("--eta", c.eta, "Backtracking factor")->capture_default_str();
  cmd.add_option("--max-iter", c.max_iter, "Iteration cap")->capture_default_str();
  cmd.add_option("--tol-obj", c.tol_obj, "Relative objective change tolerance")->capture_default_str();
  cmd.add_option("--tol-iter", c.tol_iter, "Relative iterate change tolerance")->capture_default_str();
  cmd.add_option("--rank-mode", f.rank_mode, "per_iteration or post_hoc")
      ->capture_default_str()
      ->check(CLI::IsMember({"per_iteration", "post_hoc"}));
  cmd.add_option("--rank-period", c.rank_period, "Apply the rank step every k iterations")->capture_default_str();
  cmd.add_option("--lambda-start", c.lambda_start, "Continuation start (<= lambda disables)")->capture_default_str();
  cmd.add_option("--lambda-factor", c.lambda_factor, "Continuation divisor")->capture_default_str();
  cmd.add_option("--stage-max-iter", c.stage_max_iter, "Iterations per continuation stage")->capture_default_str();
  cmd.add_option("--rank-reduction-budget", c.rank_reduction_budget, "Work cap for exact rank reduction")
      ->capture_default_str();
}

/// Applies --config first, then re-applies any flag given on the command line.
roe::SolverConfig resolve_solver(const CLI::App& cmd, SolverFlags& f) {
  roe::SolverConfig out = f.config;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw std::runtime_error("cannot open " + f.config_file);
    roe::SolverConfig from_file;
    roe::apply_json(from_file, roe::Json::parse(in));
    const roe::SolverConfig& flags = f.config;
    out = from_file;
    auto given = [&cmd](const char* name) { return cmd.count(name) > 0; };
    if (given("--lambda")) out.lambda = flags.lambda;
    if (given("--p")) out.p = flags.p;
    if (given("--margin")) out.margin = flags.margin;
    if (given("--L0")) out.L0 = flags.L0;
    if (given("--eta")) out.eta = flags.eta;
    if (given("--max-iter")) out.max_iter = flags.max_iter;
    if (given("--tol-obj")) out.tol_obj = flags.tol_obj;
    if (given("--tol-iter")) out.tol_iter = flags.tol_iter;
    if (given("--rank-period")) out.rank_period = flags.rank_period;
    if (given("--lambda-start")) out.lambda_start = flags.lambda_start;
    if (given("--lambda-factor")) out.lambda_factor = flags.lambda_factor;
    if (given("--stage-max-iter")) out.stage_max_iter = flags.stage_max_iter;
    if (given("--rank-reduction-budget")) out.rank_reduction_budget = flags.rank_reduction_budget;
    if (given("--rank-mode")) out.rank_mode = roe::parse_rank_mode(f.rank_mode);
  } else {
    out.rank_mode = roe::parse_rank_mode(f.rank_mode);
  }
  out.validate();
  return out;
}

roe::Json base_config(const std::string& command, std::uint64_t seed) {
  return roe::Json{{"command", command}, {"seed", seed}};
}

// ------------------------------------------------------------ generate

int cmd_generate(const roe::SyntheticSpec& spec, const fs::path& out) {
  const auto ds = roe::generate_dataset(spec);
  auto config = base_config("generate", spec.seed);
  config["data"] = roe::to_json(spec);
  const auto annotations = roe::to_annotations(ds.train);
  roe::write_annotations_csv(out / "train.csv", annotations, config);
  roe::write_triplets_csv(out / "validation.csv", ds.validation, config);
  roe::write_triplets_csv(out / "test.csv", ds.test, config);
  roe::write_matrix_csv(out / "points.csv", ds.points.transpose(), config);
  const roe::Json sidecar{{"n", spec.n}};
  for (const char* name : {"train.json", "validation.json", "test.json"}) roe::write_json(out / name, sidecar);

  const auto flipped = ds.train.flipped_counts();
  roe::Json manifest{{"config", config},
                     {"n", spec.n},
                     {"valid_triplets", ds.valid_count},
                     {"train_triplets", ds.train.size()},
                     {"validation_triplets", ds.validation.size()},
                     {"test_triplets", ds.test.size()},
                     {"total_votes", ds.train.total_votes()},
                     {"planted_flips", ds.train.flipped_total()},
                     {"train_split_index", ds.train_index},
                     {"votes", ds.train.votes},
                     {"flipped_votes", flipped}};
  roe::write_json(out / "manifest.json", manifest);
  std::cout << "wrote " << out.string() << ": " << ds.train.size() << " train triplets (" << ds.train.total_votes()
            << " votes, " << ds.train.flipped_total() << " flipped), " << ds.validation.size() << " validation, "
            << ds.test.size() << " test\n";
  return 0;
}

// ------------------------------------------------------------ embed

int cmd_embed(const fs::path& train, const std::string& validation, const roe::SolverConfig& sc, const fs::path& out,
              std::optional<roe::Index> n_override) {
  auto loaded = roe::load_annotations(train);
  if (n_override) loaded.n = n_override;
  const auto graph = roe::ingest(loaded.annotations, loaded.n, sc.margin);
  auto config = base_config("embed", sc.seed);
  config["train"] = train.string();
  config["validation"] = validation;
  config["solver"] = roe::to_json(sc);

  roe::RoeSolution sol;
  if (!validation.empty()) {
    const auto val = roe::load_comparisons(validation);
    auto v = roe::solve_with_validation(graph, sc, [&val](const Eigen::MatrixXd& g) {
      return roe::classification_error(g, val);
    });
    roe::Json scores = roe::Json::array();
    for (const auto& [l, s] : v.stage_scores) scores.push_back(roe::Json{{"lambda", l}, {"validation_error", s}});
    config["validation_scores"] = scores;
    sol = std::move(v.solution);
  } else {
    sol = roe::solve(graph, sc);
  }
  const double train_error = roe::classification_error(sol.g, roe::comparisons_of(graph));
  auto j = roe::solution_to_json(sol, graph, config);
  j["train_error"] = train_error;
  roe::write_json(out / "solution.json", j);
  roe::write_trace_csv(out / "trace.csv", sol, config);
  roe::write_embedding_json(out / "embedding.json", sol.x, config);
  std::cout << "edges " << graph.num_edges() << ", lambda " << sol.lambda << ", iterations " << sol.iterations
            << (sol.converged ? " (converged)" : " (iteration cap)") << ", rank " << sol.rank << ", objective "
            << sol.objective << ", train error " << train_error << ", outliers " << sol.outliers.size() << '\n';
  if (sol.diverged) {
    std::cerr << "solve diverged: " << sol.diagnostic << '\n';
    return kExitSubRunFailed;
  }
  return 0;
}

// ------------------------------------------------------------ baseline

int cmd_baseline(const fs::path& train, const std::string& validation, roe::BaselineSpec bs, bool no_prune,
                 const fs::path& out) {
  const auto graph = roe::load_graph(train);
  const auto input = no_prune ? roe::unit_weights(graph) : roe::baseline_input(graph);
  std::vector<roe::Triple> val;
  if (!validation.empty()) {
    for (const auto& q : roe::load_comparisons(validation)) {
      if (!q.shares_anchor()) throw std::invalid_argument("baseline validation must hold triplets");
      val.push_back({q.i, q.j, q.k});
    }
  }
  bs.p = std::min<roe::Index>(bs.p, graph.n());
  const auto fit = roe::fit_baseline(bs, input, val);
  auto config = base_config("baseline", bs.seed);
  config["train"] = train.string();
  config["validation"] = validation;
  config["baseline"] = roe::to_json(fit.spec);
  config["majority_vote_pruned"] = !no_prune;
  const auto x = roe::factorize(fit.g, bs.p);
  roe::Json j{{"config", config},
              {"method", roe::to_string(fit.spec.method)},
              {"n", fit.g.rows()},
              {"p", bs.p},
              {"loss", fit.loss},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"diverged", fit.diverged},
              {"G", roe::matrix_to_json(fit.g)},
              {"X", roe::matrix_to_json(x.x)}};
  if (!val.empty()) j["validation_error"] = fit.validation_error;
  roe::write_json(out / "solution.json", j);
  roe::write_embedding_json(out / "embedding.json", x, config);
  std::cout << roe::to_string(fit.spec.method) << ": " << input.num_edges() << " edges, " << fit.iterations
            << " iterations, loss " << fit.loss;
  if (!val.empty()) std::cout << ", validation error " << fit.validation_error;
  std::cout << '\n';
  return fit.diverged ? kExitSubRunFailed : 0;
}

// ------------------------------------------------------------ evaluate

Eigen::MatrixXd load_gram(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = roe::Json::parse(in);
  if (j.contains("G")) return roe::matrix_from_json(j.at("G"));
  if (j.contains("x")) {
    const Eigen::MatrixXd x = roe::matrix_from_json(j.at("x"));
    return x.transpose() * x;
  }
  throw std::invalid_argument(path.string() + " has neither a \"G\" nor an \"x\" matrix");
}

int cmd_evaluate(const std::vector<std::string>& inputs, const fs::path& test, const fs::path& out) {
  const auto comparisons = roe::load_comparisons(test);
  auto config = base_config("evaluate", 0);
  config["test"] = test.string();
  config["inputs"] = inputs;
  roe::EvalReport report;
  for (const auto& input : inputs) {
    const auto g = load_gram(input);
    const double err = roe::classification_error(g, comparisons);
    report.rows.push_back({input, "test", {err}});
    std::cout << input << ": classification error " << err << " on " << comparisons.size() << " comparisons\n";
  }
  roe::write_json(out / "report.json", roe::to_json(report, config));
  roe::write_report_csv(out / "report.csv", report, config);
  return 0;
}

// ------------------------------------------------------------ sweep

struct SweepOptions {
  std::string kind = "both";
  std::size_t trials = 20;
  unsigned jobs = 1;
  std::vector<double> ratios{0.0, 0.10, 0.15, 0.20, 0.25};
  std::vector<double> lambdas{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
};

int cmd_sweep(const roe::TrialConfig& tc, const SweepOptions& opt, const fs::path& out) {
  auto config = base_config("sweep", tc.data.seed);
  config["data"] = roe::to_json(tc.data);
  config["solver"] = roe::to_json(tc.solver);
  config["baseline"] = roe::to_json(tc.baseline);
  config["trials"] = opt.trials;
  config["outlier_ratios"] = opt.ratios;
  config["lambdas"] = opt.lambdas;
  bool failed = false;

  if (opt.kind == "noise" || opt.kind == "both") {
    const auto cells = roe::noise_sweep(tc, opt.ratios, tc.data.seed, opt.trials, opt.jobs);
    roe::EvalReport report;
    auto csv = roe::detail::open_out(out / "noise_vs_error.csv");
    roe::detail::write_config_line(csv, config);
    csv << "q,method,mean,std,min,median,max,trials\n";
    for (std::size_t q = 0; q < cells.size(); ++q) {
      const std::string setting = "q=" + std::to_string(opt.ratios[q]);
      std::vector<roe::EvalReport::Row> rows{{"ROE", setting, {}}};
      std::map<roe::BaselineMethod, std::vector<double>> baseline_errors;
      for (const auto& r : cells[q]) {
        failed |= r.failed;
        if (r.failed) std::cerr << "trial seed " << r.seed << " (" << setting << "): " << r.message << '\n';
        rows[0].errors.push_back(r.roe_error);
        for (const auto& [m, e] : r.baseline_errors) baseline_errors[m].push_back(e);
      }
      for (auto& [m, errors] : baseline_errors) rows.push_back({roe::to_string(m), setting, std::move(errors)});
      for (auto& row : rows) {
        const auto s = roe::summarize(row.errors);
        csv << opt.ratios[q] << ',' << row.method << ',' << s.mean << ',' << s.stddev << ',' << s.min << ','
            << s.median << ',' << s.max << ',' << s.count << '\n';
        report.rows.push_back(std::move(row));
      }
    }
    roe::write_json(out / "noise_report.json", roe::to_json(report, config));
    std::cout << "wrote " << (out / "noise_vs_error.csv").string() << '\n';
  }

  if (opt.kind == "lambda" || opt.kind == "both") {
    const auto cells = roe::lambda_sweep(tc, opt.lambdas, tc.data.seed, opt.trials, opt.jobs);
    roe::EvalReport report;
    auto csv = roe::detail::open_out(out / "lambda_vs_error.csv");
    roe::detail::write_config_line(csv, config);
    csv << "lambda,mean,std,min,median,max,trials\n";
    for (std::size_t l = 0; l < cells.size(); ++l) {
      roe::EvalReport::Row row{"ROE", "lambda=" + std::to_string(opt.lambdas[l]), {}};
      for (const auto& r : cells[l]) {
        failed |= r.failed;
        if (r.failed) std::cerr << "trial seed " << r.seed << " (" << row.setting << "): " << r.message << '\n';
        row.errors.push_back(r.roe_error);
      }
      const auto s = roe::summarize(row.errors);
      csv << opt.lambdas[l] << ',' << s.mean << ',' << s.stddev << ',' << s.min << ',' << s.median << ',' << s.max
          << ',' << s.count << '\n';
      report.rows.push_back(std::move(row));
    }
    roe::write_json(out / "lambda_report.json", roe::to_json(report, config));
    std::cout << "wrote " << (out / "lambda_vs_error.csv").string() << '\n';
  }
  return failed ? kExitSubRunFailed : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust ordinal embedding from contaminated relative comparisons"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random stage")->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (train/validation/test CSV + manifest)");
  roe::SyntheticSpec spec;
  std::string flip_mode = "vote";
  std::string gen_out;
  add_data_flags(*gen, spec, flip_mode);
  gen->add_option("--out", gen_out, "Output directory");

  // embed
  auto* emb = app.add_subcommand("embed", "Fit the robust embedding to an annotation CSV");
  std::string emb_train, emb_val, emb_out;
  std::optional<roe::Index> emb_n;
  SolverFlags emb_flags;
  emb->add_option("--train", emb_train, "Annotation CSV")->required()->check(CLI::ExistingFile);
  emb->add_option("--validation", emb_val, "Comparison CSV used to choose lambda along the path")
      ->check(CLI::ExistingFile);
  emb->add_option("--objects", emb_n, "Object count (overrides the JSON sidecar)");
  emb->add_option("--out", emb_out, "Output directory");
  add_solver_flags(*emb, emb_flags);

  // baseline
  auto* base = app.add_subcommand("baseline", "Fit GNMDS-p, CKL-p or STE-p to a triplet CSV");
  std::string base_train, base_val, base_out, base_method = "ste";
  bool no_prune = false;
  roe::BaselineSpec bs;
  base->add_option("--method", base_method, "gnmds, ckl or ste")
      ->capture_default_str()
      ->check(CLI::IsMember({"gnmds", "ckl", "ste", "GNMDS-p", "CKL-p", "STE-p"}));
  base->add_option("--train", base_train, "Triplet CSV")->required()->check(CLI::ExistingFile);
  base->add_option("--validation", base_val, "Triplet CSV for the hyperparameter grid")->check(CLI::ExistingFile);
  base->add_option("--p", bs.p, "Embedding rank")->capture_default_str();
  base->add_option("--max-iter", bs.max_iter, "Iteration cap")->capture_default_str();
  base->add_flag("--no-prune", no_prune, "Skip majority-vote pruning");
  base->add_option("--out", base_out, "Output directory");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Classification error of saved embeddings on a comparison CSV");
  std::vector<std::string> eval_inputs;
  std::string eval_test, eval_out;
  eval->add_option("--input", eval_inputs, "solution.json or embedding.json (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--test", eval_test, "Comparison CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Output directory");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Noise-ratio and lambda sweeps over repeated synthetic trials");
  roe::SyntheticSpec sweep_spec;
  std::string sweep_flip = "vote";
  SolverFlags sweep_flags;
  SweepOptions sweep_opt;
  std::string sweep_out;
  int baseline_iter = roe::BaselineSpec{}.max_iter;
  add_data_flags(*sweep, sweep_spec, sweep_flip);
  add_solver_flags(*sweep, sweep_flags);
  sweep->add_option("--kind", sweep_opt.kind, "noise, lambda or both")
      ->capture_default_str()
      ->check(CLI::IsMember({"noise", "lambda", "both"}));
  sweep->add_option("--trials", sweep_opt.trials, "Trials per cell")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--jobs", sweep_opt.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--ratios", sweep_opt.ratios, "Outlier ratios")->capture_default_str();
  sweep->add_option("--lambdas", sweep_opt.lambdas, "Lambda grid")->capture_default_str();
  sweep->add_option("--baseline-max-iter", baseline_iter, "Baseline iteration cap")->capture_default_str();
  sweep->add_option("--out", sweep_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      spec.seed = seed;
      spec.flip_mode = roe::parse_flip_mode(flip_mode);
      return cmd_generate(spec, gen_out.empty() ? default_out("generate") : fs::path(gen_out));
    }
    if (*emb) {
      emb_flags.config.seed = seed;
      auto sc = resolve_solver(*emb, emb_flags);
      sc.seed = seed;
      return cmd_embed(emb_train, emb_val, sc, emb_out.empty() ? default_out("embed") : fs::path(emb_out), emb_n);
    }
    if (*base) {
      bs.method = roe::parse_baseline_method(base_method);
      bs.seed = seed;
      return cmd_baseline(base_train, base_val, bs, no_prune,
                          base_out.empty() ? default_out("baseline") : fs::path(base_out));
    }
    if (*eval) {
      return cmd_evaluate(eval_inputs, eval_test, eval_out.empty() ? default_out("evaluate") : fs::path(eval_out));
    }
    if (*sweep) {
      roe::TrialConfig tc;
      sweep_spec.seed = seed;
      sweep_spec.flip_mode = roe::parse_flip_mode(sweep_flip);
      tc.data = sweep_spec;
      tc.solver = resolve_solver(*sweep, sweep_flags);
      tc.solver.seed = seed;
      tc.baseline.max_iter = baseline_iter;
      return cmd_sweep(tc, sweep_opt, sweep_out.empty() ? default_out("sweep") : fs::path(sweep_out));
    }
  } catch (const roe::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSubRunFailed;
  }
  return 0;
}
