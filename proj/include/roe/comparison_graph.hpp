#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace roe {

using Index = std::int64_t;

/// Raised for malformed annotations; `record` is the offending position in the
/// input list (or line number when produced by a file loader).
class InputError : public std::invalid_argument {
 public:
  InputError(const std::string& what, std::size_t record)
      : std::invalid_argument(what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

/// "Pair (i,j) is more similar than pair (l,k)", i.e. d_ij < d_lk.
struct Quadruple {
  Index i = 0, j = 0, l = 0, k = 0;

  Quadruple reversed() const { return {l, k, i, j}; }
  bool shares_anchor() const { return i == l; }
  friend bool operator==(const Quadruple&, const Quadruple&) = default;
};

/// "j is closer to i than k is", the quadruple (i, j, i, k).
struct Triple {
  Index i = 0, j = 0, k = 0;

  Quadruple as_quadruple() const { return {i, j, i, k}; }
  friend bool operator==(const Triple&, const Triple&) = default;
};

/// One raw annotation line; `count` identical votes.
struct Annotation {
  Quadruple tuple;
  std::uint64_t count = 1;
  std::string annotator;

  static Annotation quadruple(Index i, Index j, Index l, Index k, std::uint64_t count = 1) {
    return {{i, j, l, k}, count, {}};
  }
  static Annotation triple(Index i, Index j, Index k, std::uint64_t count = 1) {
    return {Triple{i, j, k}.as_quadruple(), count, {}};
  }
};

/// All votes for one direction between two object pairs.
struct AggregatedEdge {
  Quadruple tuple;
  double weight = 0.0;
  double target = 0.0;

  bool is_triple() const { return tuple.shares_anchor(); }
  Triple as_triple() const { return {tuple.i, tuple.j, tuple.k}; }
};

/// Sparse symmetric n x n matrix A_c with <G, A_c> = d_ij - d_lk.
struct ConstraintMatrix {
  struct Entry {
    Index row;
    Index col;
    double value;
  };
  Index n = 0;
  std::vector<Entry> entries;  // both triangles stored

  double inner(const Eigen::Ref<const Eigen::MatrixXd>& g) const {
    double sum = 0.0;
    for (const auto& e : entries) sum += e.value * g(e.row, e.col);
    return sum;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : entries) a(e.row, e.col) += e.value;
    return a;
  }
};

namespace detail {

inline std::pair<Index, Index> ordered_pair(Index a, Index b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

struct EdgeKey {
  Index a0, a1, b0, b1;
  friend bool operator==(const EdgeKey&, const EdgeKey&) = default;
};

inline EdgeKey key_of(const Quadruple& q) {
  auto [a0, a1] = ordered_pair(q.i, q.j);
  auto [b0, b1] = ordered_pair(q.l, q.k);
  return {a0, a1, b0, b1};
}

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& key) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (Index v : {key.a0, key.a1, key.b0, key.b1}) {
      h ^= static_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

inline void validate(const Quadruple& q, std::optional<Index> n, std::size_t record) {
  const auto where = " (record " + std::to_string(record) + ")";
  for (Index v : {q.i, q.j, q.l, q.k}) {
    if (v < 0) throw InputError("negative object index" + where, record);
    if (n && v >= *n) {
      throw InputError("object index " + std::to_string(v) + " out of range for n = " + std::to_string(*n) + where,
                       record);
    }
  }
  if (q.i == q.j || q.l == q.k) throw InputError("degenerate pair (i = j or l = k)" + where, record);
  if (ordered_pair(q.i, q.j) == ordered_pair(q.l, q.k)) {
    throw InputError("pair compared with itself" + where, record);
  }
}

}  // namespace detail

/// Directed multigraph over object pairs. Opposite directions of the same
/// comparison are kept as separate edges; nothing is pruned here.
class ComparisonGraph {
 public:
  ComparisonGraph() = default;

  Index n() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  const std::vector<AggregatedEdge>& edges() const { return edges_; }
  const AggregatedEdge& edge(std::size_t c) const { return edges_[c]; }
  const Eigen::VectorXd& weights() const { return w_; }
  const Eigen::VectorXd& targets() const { return y_; }
  double margin() const { return margin_; }

  /// Index of the edge carrying exactly this direction, if present.
  std::optional<std::size_t> find(const Quadruple& q) const {
    auto it = index_.find(detail::key_of(q));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> reverse_of(std::size_t c) const { return find(edges_[c].tuple.reversed()); }

  bool all_triples() const {
    return std::all_of(edges_.begin(), edges_.end(), [](const auto& e) { return e.is_triple(); });
  }

  /// Builds a graph from already-aggregated edges (first occurrence order kept).
  static ComparisonGraph from_edges(Index n, std::vector<AggregatedEdge> edges, double margin = 1.0) {
    ComparisonGraph g;
    g.n_ = n;
    g.margin_ = margin;
    for (std::size_t c = 0; c < edges.size(); ++c) {
      detail::validate(edges[c].tuple, n, c);
      if (!g.index_.emplace(detail::key_of(edges[c].tuple), c).second) {
        throw InputError("duplicate directed edge", c);
      }
    }
    g.edges_ = std::move(edges);
    g.refresh_vectors();
    return g;
  }

  friend ComparisonGraph ingest(std::span<const Annotation>, std::optional<Index>, double);

 private:
  void refresh_vectors() {
    w_.resize(static_cast<Index>(edges_.size()));
    y_.resize(static_cast<Index>(edges_.size()));
    for (std::size_t c = 0; c < edges_.size(); ++c) {
      w_[static_cast<Index>(c)] = edges_[c].weight;
      y_[static_cast<Index>(c)] = edges_[c].target;
    }
  }

  Index n_ = 0;
  double margin_ = 1.0;
  std::vector<AggregatedEdge> edges_;
  Eigen::VectorXd w_;
  Eigen::VectorXd y_;
  std::unordered_map<detail::EdgeKey, std::size_t, detail::EdgeKeyHash> index_;
};

/// Merges identical directed annotations into weighted edges.
///
/// Every stored edge gets target y_c = -margin in its own orientation, so the
/// regression pushes d_ij - d_lk towards -margin. When `n` is omitted it is
/// inferred as max index + 1. Edges are kept in first-seen order.
inline ComparisonGraph ingest(std::span<const Annotation> annotations, std::optional<Index> n = std::nullopt,
                              double margin = 1.0) {
  if (!(margin > 0.0)) throw std::invalid_argument("margin must be positive");
  Index inferred = 0;
  for (std::size_t r = 0; r < annotations.size(); ++r) {
    const auto& q = annotations[r].tuple;
    detail::validate(q, n, r);
    inferred = std::max({inferred, q.i + 1, q.j + 1, q.l + 1, q.k + 1});
  }
  ComparisonGraph g;
  g.n_ = n.value_or(inferred);
  g.margin_ = margin;
  for (std::size_t r = 0; r < annotations.size(); ++r) {
    const auto& a = annotations[r];
    if (a.count == 0) continue;
    auto [it, inserted] = g.index_.emplace(detail::key_of(a.tuple), g.edges_.size());
    if (inserted) {
      g.edges_.push_back({a.tuple, static_cast<double>(a.count), -margin});
    } else {
      g.edges_[it->second].weight += static_cast<double>(a.count);
    }
  }
  g.refresh_vectors();
  return g;
}

inline ComparisonGraph ingest(const std::vector<Annotation>& annotations, std::optional<Index> n = std::nullopt,
                              double margin = 1.0) {
  return ingest(std::span<const Annotation>(annotations), n, margin);
}

/// A_c for a quadruple; a triple (i,j,i,k) collapses to the A_t pattern with a
/// zero at (i,i).
inline ConstraintMatrix constraint_matrix(const Quadruple& q, Index n) {
  std::vector<ConstraintMatrix::Entry> raw;
  raw.reserve(8);
  auto add_pair = [&raw](Index a, Index b, double s) {
    raw.push_back({a, a, s});
    raw.push_back({b, b, s});
    raw.push_back({a, b, -s});
    raw.push_back({b, a, -s});
  };
  add_pair(q.i, q.j, 1.0);
  add_pair(q.l, q.k, -1.0);
  std::sort(raw.begin(), raw.end(), [](const auto& x, const auto& y) {
    return std::tie(x.row, x.col) < std::tie(y.row, y.col);
  });
  ConstraintMatrix a;
  a.n = n;
  for (const auto& e : raw) {
    if (!a.entries.empty() && a.entries.back().row == e.row && a.entries.back().col == e.col) {
      a.entries.back().value += e.value;
    } else {
      a.entries.push_back(e);
    }
  }
  std::erase_if(a.entries, [](const auto& e) { return e.value == 0.0; });
  return a;
}

inline ConstraintMatrix constraint_matrix(const AggregatedEdge& edge, Index n) { return constraint_matrix(edge.tuple, n); }

namespace detail {
inline double pair_distance(const Eigen::Ref<const Eigen::MatrixXd>& g, Index a, Index b) {
  return g(a, a) - 2.0 * g(a, b) + g(b, b);
}

inline void check_square(const Eigen::Ref<const Eigen::MatrixXd>& g, Index n) {
  if (g.rows() != n || g.cols() != n) {
    throw std::invalid_argument("Gram matrix is " + std::to_string(g.rows()) + "x" + std::to_string(g.cols()) +
                                ", graph expects " + std::to_string(n) + "x" + std::to_string(n));
  }
}
}  // namespace detail

/// (Z g)_c = <G, A_c> = d_ij - d_lk, evaluated edge by edge.
inline Eigen::VectorXd apply_design(const ComparisonGraph& graph, const Eigen::Ref<const Eigen::MatrixXd>& g) {
  detail::check_square(g, graph.n());
  Eigen::VectorXd out(static_cast<Index>(graph.num_edges()));
  for (std::size_t c = 0; c < graph.num_edges(); ++c) {
    const auto& q = graph.edge(c).tuple;
    out[static_cast<Index>(c)] = detail::pair_distance(g, q.i, q.j) - detail::pair_distance(g, q.l, q.k);
  }
  return out;
}

/// Sum_c r_c A_c.
inline Eigen::MatrixXd apply_design_adjoint(const ComparisonGraph& graph, const Eigen::Ref<const Eigen::VectorXd>& r) {
  if (r.size() != static_cast<Index>(graph.num_edges())) {
    throw std::invalid_argument("residual has " + std::to_string(r.size()) + " entries, graph has " +
                                std::to_string(graph.num_edges()) + " edges");
  }
  const Index n = graph.n();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  auto add_pair = [&out](Index a, Index b, double s) {
    out(a, a) += s;
    out(b, b) += s;
    out(a, b) -= s;
    out(b, a) -= s;
  };
  for (std::size_t c = 0; c < graph.num_edges(); ++c) {
    const double rc = r[static_cast<Index>(c)];
    if (rc == 0.0) continue;
    const auto& q = graph.edge(c).tuple;
    add_pair(q.i, q.j, rc);
    add_pair(q.l, q.k, -rc);
  }
  return out;
}

/// The |E| x n^2 design matrix Z with rows vec(A_c) (column-major vec).
inline Eigen::SparseMatrix<double> design_matrix(const ComparisonGraph& graph) {
  const Index n = graph.n();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.num_edges() * 8);
  for (std::size_t c = 0; c < graph.num_edges(); ++c) {
    for (const auto& e : constraint_matrix(graph.edge(c), n).entries) {
      triplets.emplace_back(static_cast<Index>(c), e.col * n + e.row, e.value);
    }
  }
  Eigen::SparseMatrix<double> z(static_cast<Index>(graph.num_edges()), n * n);
  z.setFromTriplets(triplets.begin(), triplets.end());
  return z;
}

}  // namespace roe
