#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <queue>

#include "bdfl/topology.hpp"

using namespace bdfl;

namespace {

Graph path3() {
  Graph g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  return g;
}

Graph complete(std::size_t n) {
  Graph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) g.add_edge(i, j);
  return g;
}

void expect_matrix(const SquareMatrix& m, const std::vector<std::vector<double>>& want) {
  ASSERT_EQ(m.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want.size(); ++j) EXPECT_DOUBLE_EQ(m(i, j), want[i][j]) << i << "," << j;
}

bool bfs_connected(const Graph& g) {
  const std::size_t n = g.num_nodes();
  if (n <= 1) return true;
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    for (std::size_t v = 0; v < n; ++v)
      if (g.has_edge(u, v) && !seen[v]) seen[v] = true, ++count, q.push(v);
  }
  return count == n;
}

}  // namespace

TEST(DegreeMatrix, SpecExamples) {
  expect_matrix(degree_matrix(path3()), {{1, 0, 0}, {0, 2, 0}, {0, 0, 1}});
  expect_matrix(degree_matrix(Graph(2)), {{0, 0}, {0, 0}});
  expect_matrix(degree_matrix(complete(3)), {{2, 0, 0}, {0, 2, 0}, {0, 0, 2}});
}

TEST(Laplacian, SpecExamples) {
  expect_matrix(laplacian(complete(3)), {{2, -1, -1}, {-1, 2, -1}, {-1, -1, 2}});
  expect_matrix(laplacian(Graph(1)), {{0}});
  expect_matrix(laplacian(path3()), {{1, -1, 0}, {-1, 2, -1}, {0, -1, 1}});
}

TEST(Graph, RejectsSelfLoopsAndOutOfRange) {
  Graph g(3);
  EXPECT_THROW(g.add_edge(1, 1), DomainError);
  EXPECT_THROW(g.add_edge(0, 3), DomainError);
}

TEST(AlgebraicConnectivity, SpecExamples) {
  EXPECT_NEAR(algebraic_connectivity(Graph(2)), 0.0, 1e-12);
  EXPECT_NEAR(algebraic_connectivity(complete(3)), 3.0, 1e-12);
  EXPECT_NEAR(algebraic_connectivity(path3()), 1.0, 1e-12);
  EXPECT_FALSE(is_connected(Graph(2)));
  EXPECT_TRUE(is_connected(path3()));
}

TEST(AlgebraicConnectivity, CompleteGraphSpectrum) {
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto eig = symmetric_eigenvalues(laplacian(complete(n)));
    EXPECT_NEAR(eig.front(), 0.0, 1e-10);
    for (std::size_t k = 1; k < n; ++k) EXPECT_NEAR(eig[k], static_cast<double>(n), 1e-10);
  }
}

// Every simple graph on up to 6 nodes: Jacobi eigenvalues against Eigen, and
// the λ2 test against breadth-first search.
TEST(AlgebraicConnectivity, AllSmallGraphsMatchIndependentOracles) {
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    const std::size_t graphs = std::size_t{1} << pairs.size();
    for (std::size_t mask = 0; mask < graphs; ++mask) {
      Graph g(n);
      for (std::size_t e = 0; e < pairs.size(); ++e)
        if (mask >> e & 1) g.add_edge(pairs[e].first, pairs[e].second);
      const auto lap = laplacian(g);
      Eigen::MatrixXd m(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = lap(i, j);
      const Eigen::VectorXd ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
      const auto ours = symmetric_eigenvalues(lap);
      for (std::size_t k = 0; k < n; ++k) ASSERT_NEAR(ours[k], ref(k), 1e-9) << "n=" << n << " mask=" << mask;
      ASSERT_EQ(is_connected(g), bfs_connected(g)) << "n=" << n << " mask=" << mask;
    }
  }
}

TEST(InducedTopology, SpecExamples) {
  const auto two = induced_topology({0, 1}, 2);
  EXPECT_TRUE(two.has_edge(0, 1));
  EXPECT_EQ(two.num_edges(), 1u);

  const auto star = induced_topology({0}, 3);
  EXPECT_TRUE(star.has_edge(0, 1));
  EXPECT_TRUE(star.has_edge(0, 2));
  EXPECT_FALSE(star.has_edge(1, 2));

  const auto k3 = induced_topology({0, 1, 2}, 4);
  EXPECT_TRUE(k3.has_edge(0, 1) && k3.has_edge(0, 2) && k3.has_edge(1, 2));
  EXPECT_TRUE(k3.has_edge(0, 3));
  EXPECT_EQ(k3.num_edges(), 4u);
}

TEST(InducedTopology, AlwaysConnectedForNonEmptySelection) {
  for (std::size_t u = 1; u <= 8; ++u)
    for (std::size_t mask = 1; mask < (std::size_t{1} << u); ++mask) {
      std::vector<std::size_t> sel;
      for (std::size_t i = 0; i < u; ++i)
        if (mask >> i & 1) sel.push_back(i);
      const auto g = induced_topology(sel, u);
      ASSERT_TRUE(u == 1 || algebraic_connectivity(g) > kConnectivityTolerance);
    }
}

TEST(InducedTopology, RejectsEmptyOrOutOfRangeSelection) {
  EXPECT_THROW(induced_topology({}, 3), DomainError);
  EXPECT_THROW(induced_topology({3}, 3), DomainError);
}
