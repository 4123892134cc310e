// SPDX-License-Identifier: Apache-2.0
//
// Fixed mesh topology and the self-looped, symmetrically normalized
// propagation operator  P = D^-1/2 (A + I) D^-1/2  used by every graph
// convolution in the models.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "altsim/tensor.hpp"

namespace altsim {

using Edge = std::array<std::size_t, 2>;
using Vec3 = std::array<double, 3>;

class Graph {
 public:
  Graph() = default;

  /// Throws IndexError for out-of-range endpoints and ContractError for
  /// self-loops or duplicate (unordered) edges. Isolated nodes are fine.
  static Graph build(std::size_t num_nodes, std::span<const Edge> edges);

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const CsrMatrix& propagation() const { return *propagation_; }
  const std::shared_ptr<const CsrMatrix>& propagation_ptr() const noexcept { return propagation_; }

  /// Neighbours of `node`, excluding itself, in ascending order.
  std::vector<std::size_t> neighbours(std::size_t node) const;
  bool connected() const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::shared_ptr<const CsrMatrix> propagation_;
};

/// P . x
Tensor propagate(const Graph& g, const Tensor& x);

/// P . x . theta, differentiable in x and theta.
Tensor graph_conv(const Graph& g, const Tensor& x, const Tensor& theta);

enum class MeshKind { Grid, Ring, Loaded };

std::string to_string(MeshKind kind);

struct MeshSpec {
  MeshKind kind = MeshKind::Grid;
  std::size_t nx = 0;
  std::size_t ny = 0;
  double spacing = 0.0;
  std::vector<Vec3> rest_positions;
};

struct Mesh {
  MeshSpec spec;
  Graph graph;

  std::size_t num_nodes() const { return graph.num_nodes(); }
  /// Rest positions as an |V| x 3 tensor.
  Tensor rest_tensor() const;
};

/// Planar nx*ny grid centred on the origin in the z = 0 plane, 4-connected
/// plus both diagonals of every quad.
Mesh make_grid_mesh(std::size_t nx, std::size_t ny, double spacing);

/// Closed loop of n nodes on a circle, each linked to its first and second
/// neighbours along the loop.
Mesh make_ring_mesh(std::size_t n, double radius);

/// Throws ContractError if any rest edge is degenerate or the graph is
/// disconnected.
void validate_mesh(const Mesh& mesh);

inline constexpr int kGraphFileVersion = 1;

void save_mesh(const Mesh& mesh, const std::filesystem::path& path);
Mesh load_mesh(const std::filesystem::path& path);

}  // namespace altsim
