#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace roe {

/// Eigenvalues below this (in absolute terms) are treated as zero when
/// clamping a numerically PSD matrix.
inline constexpr double kPsdTolerance = 1e-9;

/// p x n point coordinates, one column per object.
struct Embedding {
  Eigen::MatrixXd x;

  Eigen::Index dim() const { return x.rows(); }
  Eigen::Index size() const { return x.cols(); }
  Eigen::MatrixXd gram() const { return x.transpose() * x; }
};

/// Spectrum in descending eigenvalue order. Each eigenvector is signed so that
/// its first non-negligible component is positive.
struct SortedEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

namespace detail {

inline void require_square(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(what) + ": expected a square matrix, got " + std::to_string(m.rows()) +
                                "x" + std::to_string(m.cols()));
  }
}

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) throw std::domain_error(std::string(what) + ": non-finite input");
}

}  // namespace detail

inline Eigen::MatrixXd symmetrize(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return 0.5 * (m + m.transpose());
}

inline SortedEigen sorted_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  detail::require_square(m, "sorted_eigen");
  detail::require_finite(m, "sorted_eigen");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrize(m));
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Eigen::Index n = m.rows();
  SortedEigen out{solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
  for (Eigen::Index c = 0; c < n; ++c) {
    auto v = out.vectors.col(c);
    for (Eigen::Index r = 0; r < n; ++r) {
      if (std::abs(v[r]) > 1e-12) {
        if (v[r] < 0) v = -v;
        break;
      }
    }
  }
  return out;
}

/// D_ij = g_ii - 2 g_ij + g_jj (squared Euclidean distances of the points
/// behind G). Round-off negatives above -kPsdTolerance are clamped to zero.
inline Eigen::MatrixXd gram_to_distance(const Eigen::Ref<const Eigen::MatrixXd>& g) {
  detail::require_square(g, "gram_to_distance");
  const Eigen::VectorXd diag = g.diagonal();
  const Eigen::Index n = g.rows();
  Eigen::MatrixXd d = diag * Eigen::RowVectorXd::Ones(n) - 2.0 * g + Eigen::VectorXd::Ones(n) * diag.transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j || (d(i, j) < 0.0 && d(i, j) > -kPsdTolerance)) d(i, j) = 0.0;
    }
  }
  return d;
}

/// Nearest PSD matrix in Frobenius norm: clamp negative eigenvalues to zero.
inline Eigen::MatrixXd psd_project(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  detail::require_square(m, "psd_project");
  detail::require_finite(m, "psd_project");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrize(m));
  if (solver.info() != Eigen::Success) throw std::runtime_error("psd_project: eigendecomposition failed");
  const Eigen::VectorXd clamped = solver.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd& v = solver.eigenvectors();
  return v * clamped.asDiagonal() * v.transpose();
}

/// Keeps the top-p eigenvalues (clamped at zero) and zeroes the rest.
inline Eigen::MatrixXd truncate_rank(const Eigen::Ref<const Eigen::MatrixXd>& g, Eigen::Index p) {
  detail::require_square(g, "truncate_rank");
  if (p < 0 || p > g.rows()) {
    throw std::invalid_argument("truncate_rank: p = " + std::to_string(p) + " outside [0, " +
                                std::to_string(g.rows()) + "]");
  }
  detail::require_finite(g, "truncate_rank");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrize(g));
  if (solver.info() != Eigen::Success) throw std::runtime_error("truncate_rank: eigendecomposition failed");
  // Ascending order: the top p live in the last p columns.
  const auto top_vectors = solver.eigenvectors().rightCols(p);
  const Eigen::VectorXd top_values = solver.eigenvalues().tail(p).cwiseMax(0.0);
  return top_vectors * top_values.asDiagonal() * top_vectors.transpose();
}

/// X = Lambda_p^{1/2} V_p^T from the top-p eigenpairs, so X^T X is the best
/// rank-p PSD approximation of G.
inline Embedding factorize(const Eigen::Ref<const Eigen::MatrixXd>& g, Eigen::Index p) {
  detail::require_square(g, "factorize");
  if (p < 1 || p > g.rows()) {
    throw std::invalid_argument("factorize: p = " + std::to_string(p) + " outside [1, " + std::to_string(g.rows()) +
                                "]");
  }
  const auto eig = sorted_eigen(g);
  const Eigen::VectorXd scale = eig.values.head(p).cwiseMax(0.0).cwiseSqrt();
  return {scale.asDiagonal() * eig.vectors.leftCols(p).transpose()};
}

/// Count of singular values above rel_tol * sigma_max.
inline Eigen::Index numerical_rank(const Eigen::Ref<const Eigen::MatrixXd>& m, double rel_tol = 1e-8) {
  if (m.size() == 0) return 0;
  Eigen::VectorXd sigma;
  if (m.rows() == m.cols() && m.isApprox(m.transpose(), 1e-12)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrize(m), Eigen::EigenvaluesOnly);
    sigma = solver.eigenvalues().cwiseAbs();
  } else {
    sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  }
  const double top = sigma.maxCoeff();
  if (top <= 0.0) return 0;
  return (sigma.array() > rel_tol * top).count();
}

inline double min_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  detail::require_square(m, "min_eigenvalue");
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrize(m), Eigen::EigenvaluesOnly);
  return solver.eigenvalues()[0];
}

/// J G J with J = I - 11^T/n. Leaves every pairwise distance unchanged.
inline Eigen::MatrixXd double_center(const Eigen::Ref<const Eigen::MatrixXd>& g) {
  detail::require_square(g, "double_center");
  const Eigen::VectorXd row_mean = g.rowwise().mean();
  const Eigen::RowVectorXd col_mean = g.colwise().mean();
  const double grand = g.mean();
  Eigen::MatrixXd out = g;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += grand;
  return out;
}

}  // namespace roe
