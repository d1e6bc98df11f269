// Small end-to-end run: synthetic data with planted flips, ROE fit, and a
// comparison against STE on the held-out split.

#include "roe/roe.hpp"

#include <iostream>

int main() {
  roe::SyntheticSpec spec;
  spec.n = 30;
  spec.dim = 2;
  spec.train_size = 1500;
  spec.validation_size = 500;
  spec.outlier_ratio = 0.2;
  spec.seed = 11;
  const auto ds = roe::generate_dataset(spec);
  const auto graph = ds.train_graph();

  roe::SolverConfig config;
  config.p = 2;
  const auto fit = roe::solve_with_validation(graph, config, [&](const Eigen::MatrixXd& g) {
    return roe::classification_error(g, ds.validation);
  });
  const auto& sol = fit.solution;
  std::cout << "ROE: lambda " << sol.lambda << ", rank " << sol.rank << ", " << sol.iterations << " iterations, test error "
            << roe::classification_error(sol.g, ds.test) << '\n';

  const auto truth = roe::wrong_direction_edges(graph, ds.points);
  const auto planted = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
  const auto score = roe::detection_score(roe::top_k_abs(sol.gamma, planted), truth);
  std::cout << "outlier edges: " << planted << " planted, top-k recall " << score.recall << '\n';

  roe::BaselineSpec ste;
  ste.method = roe::BaselineMethod::ste;
  ste.p = 2;
  const auto base = roe::fit_baseline(ste, roe::baseline_input(graph), ds.validation);
  std::cout << "STE-p: test error " << roe::classification_error(base.g, ds.test) << '\n';
}
