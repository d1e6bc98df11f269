#include "roe/comparison_graph.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

using roe::Annotation;
using roe::Quadruple;

TEST(Ingest, MergesIdenticalVotesAndKeepsBothDirections) {
  std::vector<Annotation> raw(3, Annotation::quadruple(1, 2, 3, 4));
  raw.push_back(Annotation::quadruple(3, 4, 1, 2));
  const auto g = roe::ingest(raw);
  ASSERT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.edge(0).tuple, (Quadruple{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(g.edge(0).weight, 3.0);
  EXPECT_EQ(g.edge(1).tuple, (Quadruple{3, 4, 1, 2}));
  EXPECT_DOUBLE_EQ(g.edge(1).weight, 1.0);
  EXPECT_EQ(g.n(), 5);
  EXPECT_EQ(g.reverse_of(0), std::optional<std::size_t>(1));
}

TEST(Ingest, PairOrderWithinATupleDoesNotSplitEdges) {
  const auto g = roe::ingest({Annotation::quadruple(1, 2, 3, 4), Annotation::quadruple(2, 1, 4, 3)});
  ASSERT_EQ(g.num_edges(), 1u);
  EXPECT_DOUBLE_EQ(g.edge(0).weight, 2.0);
}

TEST(Ingest, EmptyListGivesEmptyGraph) {
  const auto g = roe::ingest(std::vector<Annotation>{});
  EXPECT_EQ(g.num_edges(), 0u);
  EXPECT_EQ(g.weights().size(), 0);
  EXPECT_EQ(g.targets().size(), 0);
}

TEST(Ingest, TargetsAreMinusMarginInEachOrientation) {
  const auto g = roe::ingest({Annotation::triple(0, 1, 2), Annotation::triple(0, 2, 1)}, 3, 0.5);
  ASSERT_EQ(g.num_edges(), 2u);
  EXPECT_DOUBLE_EQ(g.targets()[0], -0.5);
  EXPECT_DOUBLE_EQ(g.targets()[1], -0.5);
}

TEST(Ingest, CountColumnActsAsRepeatedVotes) {
  const auto g = roe::ingest({Annotation::triple(0, 1, 2, 4), Annotation::triple(0, 1, 2, 0)});
  ASSERT_EQ(g.num_edges(), 1u);
  EXPECT_DOUBLE_EQ(g.edge(0).weight, 4.0);
}

TEST(Ingest, RejectsDegenerateAndOutOfRangeRecords) {
  auto record_of = [](const std::vector<Annotation>& raw, std::optional<roe::Index> n) -> std::size_t {
    try {
      roe::ingest(raw, n);
    } catch (const roe::InputError& e) {
      return e.record();
    }
    return 999;
  };
  const auto ok = Annotation::triple(0, 1, 2);
  EXPECT_EQ(record_of({ok, Annotation::quadruple(1, 1, 2, 3)}, std::nullopt), 1u);
  EXPECT_EQ(record_of({ok, ok, Annotation::quadruple(0, 1, 2, 2)}, std::nullopt), 2u);
  EXPECT_EQ(record_of({Annotation::quadruple(0, 1, 1, 0)}, std::nullopt), 0u);
  EXPECT_EQ(record_of({ok, Annotation::triple(0, 1, 5)}, 4), 1u);
  EXPECT_EQ(record_of({Annotation::quadruple(-1, 1, 2, 3)}, std::nullopt), 0u);
}

TEST(Ingest, PermutationInvariantMultiset) {
  roe::CounterRng rng(7);
  std::vector<Annotation> raw;
  for (int r = 0; r < 200; ++r) raw.push_back({oracle::random_tuple(rng, 6, r % 2 == 0), 1, {}});
  auto shuffled = raw;
  rng.shuffle(shuffled);
  auto as_map = [](const roe::ComparisonGraph& g) {
    std::map<std::tuple<roe::Index, roe::Index, roe::Index, roe::Index>, double> m;
    for (const auto& e : g.edges()) {
      const auto a = std::minmax(e.tuple.i, e.tuple.j);
      const auto b = std::minmax(e.tuple.l, e.tuple.k);
      m[{a.first, a.second, b.first, b.second}] += e.weight;
    }
    return m;
  };
  EXPECT_EQ(as_map(roe::ingest(raw, 6)), as_map(roe::ingest(shuffled, 6)));
}

TEST(ConstraintMatrix, QuadrupleMatchesEntryTable) {
  const Quadruple q{0, 1, 2, 3};
  Eigen::MatrixXd expected(4, 4);
  expected << 1, -1, 0, 0,
              -1, 1, 0, 0,
              0, 0, -1, 1,
              0, 0, 1, -1;
  EXPECT_TRUE(roe::constraint_matrix(q, 4).to_dense().isApprox(expected));
  EXPECT_LE(roe::constraint_matrix(q, 4).entries.size(), 8u);
}

TEST(ConstraintMatrix, TripleHasZeroAtAnchor) {
  const auto a = roe::constraint_matrix(roe::Triple{0, 1, 2}.as_quadruple(), 3).to_dense();
  Eigen::MatrixXd expected(3, 3);
  expected << 0, -1, 1,
              -1, 1, 0,
              1, 0, -1;
  EXPECT_TRUE(a.isApprox(expected));
  EXPECT_EQ(a.diagonal(), Eigen::Vector3d(0, 1, -1));
  EXPECT_EQ(roe::constraint_matrix(roe::Triple{0, 1, 2}.as_quadruple(), 3).entries.size(), 6u);
}

TEST(ConstraintMatrix, TripleIngestMatchesHandPattern) {
  const auto g = roe::ingest({Annotation::triple(3, 0, 4)}, 6);
  EXPECT_TRUE(roe::constraint_matrix(g.edge(0), 6).to_dense().isApprox(oracle::dense_triplet_constraint(3, 0, 4, 6)));
}

TEST(ConstraintMatrix, InnerProductIsDistanceDifference) {
  roe::CounterRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd g = oracle::random_psd(rng, 5, 5);
    const auto q = oracle::random_tuple(rng, 5, trial % 3 == 0);
    const double expected = (g(q.i, q.i) - 2 * g(q.i, q.j) + g(q.j, q.j)) - (g(q.l, q.l) - 2 * g(q.l, q.k) + g(q.k, q.k));
    EXPECT_NEAR(roe::constraint_matrix(q, 5).inner(g), expected, 1e-12 * (1 + std::abs(expected)));
  }
}

TEST(ConstraintMatrix, SymmetricZeroRowSumsAndSkewUnderReversal) {
  roe::CounterRng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = oracle::random_tuple(rng, 7, trial % 2 == 0);
    const Eigen::MatrixXd a = roe::constraint_matrix(q, 7).to_dense();
    EXPECT_TRUE(a.isApprox(a.transpose()));
    EXPECT_LT(a.rowwise().sum().cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE((roe::constraint_matrix(q.reversed(), 7).to_dense() + a).isZero());
    EXPECT_TRUE(a.isApprox(oracle::dense_constraint(q, 7)));
  }
}

TEST(ApplyDesign, TrivialCases) {
  const auto g = roe::ingest({Annotation::quadruple(0, 1, 2, 3)}, 4);
  EXPECT_TRUE(roe::apply_design(g, Eigen::MatrixXd::Zero(4, 4)).isZero());
  EXPECT_DOUBLE_EQ(roe::apply_design(g, Eigen::MatrixXd::Identity(4, 4))[0], 0.0);
  EXPECT_THROW(roe::apply_design(g, Eigen::MatrixXd::Zero(3, 3)), std::invalid_argument);
}

TEST(ApplyDesign, MatchesDenseVecOracle) {
  roe::CounterRng rng(13);
  for (roe::Index n : {4, 6, 8}) {
    std::vector<Annotation> raw;
    for (int r = 0; r < 30; ++r) raw.push_back({oracle::random_tuple(rng, n, r % 2 == 1), 1, {}});
    const auto graph = roe::ingest(raw, n);
    std::vector<Quadruple> edges;
    for (const auto& e : graph.edges()) edges.push_back(e.tuple);
    const Eigen::MatrixXd g = oracle::random_symmetric(rng, n);
    const Eigen::VectorXd dense = oracle::dense_design(edges, n) * Eigen::Map<const Eigen::VectorXd>(g.data(), n * n);
    const Eigen::VectorXd fast = roe::apply_design(graph, g);
    EXPECT_LT((dense - fast).norm(), 1e-12 * (1 + dense.norm()));
    // Sparse design matrix agrees with the dense oracle too.
    const Eigen::MatrixXd z = Eigen::MatrixXd(roe::design_matrix(graph));
    EXPECT_TRUE(z.isApprox(oracle::dense_design(edges, n)));
  }
}

TEST(ApplyDesign, AgreesWithExplicitDistances) {
  roe::CounterRng rng(14);
  const Eigen::MatrixXd g = oracle::random_psd(rng, 9, 3);
  std::vector<Annotation> raw;
  for (int r = 0; r < 40; ++r) raw.push_back({oracle::random_tuple(rng, 9, false), 1, {}});
  const auto graph = roe::ingest(raw, 9);
  const auto z = roe::apply_design(graph, g);
  for (std::size_t c = 0; c < graph.num_edges(); ++c) {
    const auto& q = graph.edge(c).tuple;
    const double expected = oracle::distance(g, q.i, q.j) - oracle::distance(g, q.l, q.k);
    EXPECT_NEAR(z[static_cast<Eigen::Index>(c)], expected, 1e-12 * (1 + std::abs(expected)));
  }
}

TEST(ApplyDesignAdjoint, OneHotGivesConstraintAndZeroGivesZero) {
  const auto graph = roe::ingest({Annotation::quadruple(0, 1, 2, 3), Annotation::triple(4, 0, 2)}, 5);
  EXPECT_TRUE(roe::apply_design_adjoint(graph, Eigen::VectorXd::Zero(2)).isZero());
  for (std::size_t c = 0; c < 2; ++c) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
    e[static_cast<Eigen::Index>(c)] = 1;
    EXPECT_TRUE(roe::apply_design_adjoint(graph, e).isApprox(roe::constraint_matrix(graph.edge(c), 5).to_dense()));
  }
  EXPECT_THROW(roe::apply_design_adjoint(graph, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST(ApplyDesignAdjoint, AdjointIdentity) {
  roe::CounterRng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Annotation> raw;
    for (int r = 0; r < 25; ++r) raw.push_back({oracle::random_tuple(rng, 7, r % 2 == 0), 1, {}});
    const auto graph = roe::ingest(raw, 7);
    const Eigen::MatrixXd g = oracle::random_symmetric(rng, 7);
    const Eigen::VectorXd r = oracle::random_matrix(rng, static_cast<Eigen::Index>(graph.num_edges()), 1);
    const double lhs = roe::apply_design(graph, g).dot(r);
    const double rhs = (g.array() * roe::apply_design_adjoint(graph, r).array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(FromEdges, RejectsDuplicateDirections) {
  std::vector<roe::AggregatedEdge> edges{{{0, 1, 2, 3}, 1, -1}, {{1, 0, 3, 2}, 2, -1}};
  EXPECT_THROW(roe::ComparisonGraph::from_edges(4, edges), roe::InputError);
}
