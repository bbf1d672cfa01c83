#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "bdfl/errors.hpp"

namespace bdfl {

/// Dense row-major square matrix. Only what the Laplacian machinery needs.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < n_; ++i) {
      os << (i == 0 ? "[" : " ");
      for (std::size_t j = 0; j < n_; ++j) os << (j ? ", " : "[") << (*this)(i, j);
      os << "]" << (i + 1 == n_ ? "]" : "\n");
    }
    return os.str();
  }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Undirected, unweighted P2P graph over U clients.
class Graph {
 public:
  explicit Graph(std::size_t num_nodes) : n_(num_nodes), adj_(num_nodes * num_nodes, 0) {
    if (num_nodes == 0) throw DomainError("graph needs at least one node");
  }

  std::size_t num_nodes() const noexcept { return n_; }

  void add_edge(std::size_t i, std::size_t j) {
    if (i >= n_ || j >= n_) throw DomainError("edge endpoint out of range");
    if (i == j) throw DomainError("self loops are not allowed");
    adj_[i * n_ + j] = 1;
    adj_[j * n_ + i] = 1;
  }

  bool has_edge(std::size_t i, std::size_t j) const { return adj_[i * n_ + j] != 0; }

  std::size_t degree(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < n_; ++j) d += adj_[i * n_ + j];
    return d;
  }

  std::size_t num_edges() const {
    std::size_t e = 0;
    for (std::size_t i = 0; i < n_; ++i) e += degree(i);
    return e / 2;
  }

 private:
  std::size_t n_;
  std::vector<unsigned char> adj_;
};

// Below this λ2 the graph counts as disconnected.
inline constexpr double kConnectivityTolerance = 1e-9;

inline SquareMatrix degree_matrix(const Graph& g) {
  SquareMatrix d(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) d(i, i) = static_cast<double>(g.degree(i));
  return d;
}

inline SquareMatrix laplacian(const Graph& g) {
  const auto n = g.num_nodes();
  SquareMatrix l = degree_matrix(g);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (g.has_edge(i, j)) l(i, j) = -1.0;
  return l;
}

/// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi rotation.
inline std::vector<double> symmetric_eigenvalues(SquareMatrix a, int max_sweeps = 100) {
  const std::size_t n = a.size();
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
  const SquareMatrix input = a;
  const double target = 1e-14 * std::max(scale, 1.0);

  int sweep = 0;
  while (off_norm() > target) {
    if (++sweep > max_sweeps) {
      throw EigenNonConvergence("Jacobi eigen-solver did not converge for matrix\n" +
                                input.to_string());
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::hypot(t, 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

/// Second-smallest Laplacian eigenvalue; zero for a single node.
inline double algebraic_connectivity(const Graph& g) {
  if (g.num_nodes() == 1) return 0.0;
  const auto eig = symmetric_eigenvalues(laplacian(g));
  return std::max(eig[1], 0.0);
}

inline bool is_connected(const Graph& g) {
  return g.num_nodes() == 1 || algebraic_connectivity(g) > kConnectivityTolerance;
}

/// Round topology: selected clients form a clique, every other client
/// hangs off the lowest-indexed selected client so it still receives blocks.
inline Graph induced_topology(const std::vector<std::size_t>& selected, std::size_t num_clients) {
  if (selected.empty()) throw DomainError("induced topology needs a non-empty selection");
  Graph g(num_clients);
  std::vector<bool> in(num_clients, false);
  for (auto i : selected) {
    if (i >= num_clients) throw DomainError("selected client out of range");
    in[i] = true;
  }
  const std::size_t hub = *std::min_element(selected.begin(), selected.end());
  for (std::size_t i = 0; i < num_clients; ++i) {
    if (!in[i]) {
      g.add_edge(hub, i);
      continue;
    }
    for (std::size_t j = i + 1; j < num_clients; ++j)
      if (in[j]) g.add_edge(i, j);
  }
  return g;
}

}  // namespace bdfl
