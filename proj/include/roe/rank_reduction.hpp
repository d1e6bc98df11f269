#pragma once

// Rank reduction for PSD solutions of equality-constrained SDPs.
//
// Given G = U U^T and constraint matrices A_c, any symmetric Delta with
// <Delta, U^T A_c U> = 0 for every c yields a family
//   G(alpha) = U (I + alpha Delta) U^T
// on which every <G, A_c> is constant. Taking alpha = -1/sigma_1, with sigma_1
// the eigenvalue of Delta of largest magnitude, keeps I + alpha Delta PSD and
// makes it singular, so the rank drops by at least one.

#include "roe/comparison_graph.hpp"
#include "roe/gram_ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace roe {

/// Per-call record emitted into solver traces.
struct RankReductionDiagnostics {
  Eigen::Index initial_rank = 0;
  Eigen::Index final_rank = 0;
  int loops = 0;
  bool null_space_exhausted = false;  // stopped because null(A_U) = {0}
};

struct RankReductionOptions {
  double factor_tolerance = 1e-9;   // eigenvalues kept when factoring G = U U^T, relative to lambda_max
  double null_tolerance = 1e-8;     // singular values below this * sigma_max span the null space
  double collapse_tolerance = 1e-9; // eigenvalues of I - Delta/sigma_1 treated as zero, relative
};

/// U with G = U U^T, keeping eigenvalues above tol * lambda_max. Columns are
/// ordered by descending eigenvalue.
inline Eigen::MatrixXd psd_factor(const Eigen::Ref<const Eigen::MatrixXd>& g, double rel_tol = 1e-9) {
  const auto eig = sorted_eigen(g);
  const double top = eig.values.size() ? eig.values[0] : 0.0;
  Eigen::Index r = 0;
  if (top > 0.0) {
    while (r < eig.values.size() && eig.values[r] > rel_tol * top) ++r;
  }
  return eig.vectors.leftCols(r) * eig.values.head(r).cwiseSqrt().asDiagonal();
}

/// Symmetric r x r matrix <-> vector of its upper triangle, off-diagonals
/// scaled by sqrt(2) so the Frobenius inner product becomes Euclidean.
inline Eigen::VectorXd svec(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  const Eigen::Index r = a.rows();
  Eigen::VectorXd v(r * (r + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) v[k++] = (i == j) ? a(i, j) : std::sqrt(2.0) * a(i, j);
  }
  return v;
}

inline Eigen::MatrixXd smat(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index r) {
  if (v.size() != r * (r + 1) / 2) throw std::invalid_argument("smat: size mismatch");
  Eigen::MatrixXd a(r, r);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double value = (i == j) ? v[k] : v[k] / std::sqrt(2.0);
      a(i, j) = value;
      a(j, i) = value;
      ++k;
    }
  }
  return a;
}

/// U^T A_c U for every constraint.
inline std::vector<Eigen::MatrixXd> reduced_constraints(const Eigen::Ref<const Eigen::MatrixXd>& u,
                                                        const std::vector<ConstraintMatrix>& constraints) {
  const Eigen::Index r = u.cols();
  std::vector<Eigen::MatrixXd> out;
  out.reserve(constraints.size());
  for (const auto& a : constraints) {
    if (a.n != u.rows()) throw std::invalid_argument("reduced_constraints: dimension mismatch");
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(r, r);
    for (const auto& e : a.entries) b.noalias() += e.value * u.row(e.row).transpose() * u.row(e.col);
    out.push_back(symmetrize(b));
  }
  return out;
}

inline std::vector<ConstraintMatrix> constraint_matrices(const ComparisonGraph& graph) {
  std::vector<ConstraintMatrix> out;
  out.reserve(graph.num_edges());
  for (const auto& edge : graph.edges()) out.push_back(constraint_matrix(edge, graph.n()));
  return out;
}

namespace detail {

/// Multiplicity of the signed max-magnitude eigenvalue, i.e. the rank drop a
/// step along this direction would produce.
inline Eigen::Index rank_drop(const Eigen::MatrixXd& delta, double tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(delta, Eigen::EigenvaluesOnly);
  const auto& values = solver.eigenvalues();
  Eigen::Index arg = 0;
  values.cwiseAbs().maxCoeff(&arg);
  const double sigma = values[arg];
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (std::abs(values[i] - sigma) <= tol * std::abs(sigma)) ++count;
  }
  return count;
}

}  // namespace detail

/// Basis of null(A_U) as svec columns (empty when only the trivial solution).
inline Eigen::MatrixXd null_space_basis(const std::vector<Eigen::MatrixXd>& reduced, Eigen::Index r,
                                        double null_tolerance = 1e-8) {
  const Eigen::Index dim = r * (r + 1) / 2;
  const auto rows = static_cast<Eigen::Index>(reduced.size());
  if (dim == 0) return Eigen::MatrixXd(0, 0);
  if (rows == 0) return Eigen::MatrixXd::Identity(dim, dim);
  Eigen::MatrixXd m(rows, dim);
  for (Eigen::Index c = 0; c < rows; ++c) m.row(c) = svec(reduced[static_cast<std::size_t>(c)]).transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const auto& sigma = svd.singularValues();
  const double top = sigma.size() ? sigma[0] : 0.0;
  Eigen::Index numeric_rank = 0;
  while (numeric_rank < sigma.size() && sigma[numeric_rank] > null_tolerance * top && top > 0.0) ++numeric_rank;
  return svd.matrixV().rightCols(dim - numeric_rank);
}

/// A unit-Frobenius symmetric Delta orthogonal to every reduced constraint, or
/// nullopt when null(A_U) = {0}. Among several basis directions the one with
/// the largest rank drop wins; ties go to the first.
inline std::optional<Eigen::MatrixXd> find_null_direction(const std::vector<Eigen::MatrixXd>& reduced, Eigen::Index r,
                                                          double null_tolerance = 1e-8) {
  if (r < 1) throw std::invalid_argument("find_null_direction: r must be >= 1");
  const Eigen::MatrixXd basis = null_space_basis(reduced, r, null_tolerance);
  if (basis.cols() == 0) return std::nullopt;
  Eigen::Index best = -1;
  Eigen::Index best_drop = 0;
  for (Eigen::Index b = 0; b < basis.cols(); ++b) {
    const auto drop = detail::rank_drop(smat(basis.col(b), r), 1e-9);
    if (drop > best_drop) {
      best = b;
      best_drop = drop;
    }
  }
  Eigen::MatrixXd delta = smat(basis.col(best), r);
  return delta / delta.norm();
}

/// Factor U and reduced constraints U^T A_c U for one rank-reduction run.
class RankReductionWorkspace {
 public:
  RankReductionWorkspace(const Eigen::Ref<const Eigen::MatrixXd>& g, const std::vector<ConstraintMatrix>& constraints,
                         RankReductionOptions options = {})
      : options_(options), u_(psd_factor(g, options.factor_tolerance)) {
    reduced_ = reduced_constraints(u_, constraints);
  }

  Eigen::Index rank() const { return u_.cols(); }
  const Eigen::MatrixXd& factor() const { return u_; }
  const std::vector<Eigen::MatrixXd>& reduced() const { return reduced_; }
  Eigen::MatrixXd gram() const { return u_ * u_.transpose(); }

  std::optional<Eigen::MatrixXd> null_direction() const {
    if (rank() == 0) return std::nullopt;
    return find_null_direction(reduced_, rank(), options_.null_tolerance);
  }

  /// G* = U (I - Delta / sigma_1) U^T. The new factor is U Q sqrt(Lambda) with
  /// the collapsed eigen-directions of I - Delta/sigma_1 dropped, so the
  /// returned Gram matrix has strictly lower rank.
  Eigen::MatrixXd reduce_once(const Eigen::Ref<const Eigen::MatrixXd>& delta) {
    if (delta.rows() != rank() || delta.cols() != rank()) throw std::invalid_argument("reduce_once: bad Delta size");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrize(delta));
    const auto& values = solver.eigenvalues();
    Eigen::Index arg = 0;
    values.cwiseAbs().maxCoeff(&arg);
    const double sigma = values[arg];
    if (sigma == 0.0) throw std::logic_error("reduce_once: zero direction");
    const Eigen::VectorXd shrunk = (1.0 - values.array() / sigma).matrix();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < shrunk.size(); ++i) {
      if (shrunk[i] > options_.collapse_tolerance) keep.push_back(i);
    }
    Eigen::MatrixXd q(rank(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      q.col(col) = solver.eigenvectors().col(keep[c]) * std::sqrt(shrunk[keep[c]]);
    }
    // U^T A_c U transforms as Q^T (.) Q, no need to revisit the constraints.
    for (auto& b : reduced_) b = symmetrize(q.transpose() * b * q);
    u_ = u_ * q;
    return gram();
  }

 private:
  RankReductionOptions options_;
  Eigen::MatrixXd u_;
  std::vector<Eigen::MatrixXd> reduced_;
};

struct RankReductionResult {
  Eigen::MatrixXd gram;
  RankReductionDiagnostics diagnostics;
};

/// Repeats reduce_once until null(A_U) = {0} or rank <= p. All <G, A_c> are
/// preserved; the result stays PSD.
inline RankReductionResult rank_reduce(const Eigen::Ref<const Eigen::MatrixXd>& g,
                                       const std::vector<ConstraintMatrix>& constraints, Eigen::Index p,
                                       RankReductionOptions options = {}) {
  detail::require_square(g, "rank_reduce");
  if (p < 0) throw std::invalid_argument("rank_reduce: p must be >= 0");
  RankReductionWorkspace ws(g, constraints, options);
  RankReductionResult result;
  result.diagnostics.initial_rank = ws.rank();
  const Eigen::Index max_loops = ws.rank();
  while (ws.rank() > p && result.diagnostics.loops < max_loops) {
    auto delta = ws.null_direction();
    if (!delta) {
      result.diagnostics.null_space_exhausted = true;
      break;
    }
    ws.reduce_once(*delta);
    ++result.diagnostics.loops;
  }
  result.diagnostics.final_rank = ws.rank();
  result.gram = ws.gram();
  return result;
}

inline RankReductionResult rank_reduce(const Eigen::Ref<const Eigen::MatrixXd>& g, const ComparisonGraph& graph,
                                       Eigen::Index p, RankReductionOptions options = {}) {
  return rank_reduce(g, constraint_matrices(graph), p, options);
}

}  // namespace roe
