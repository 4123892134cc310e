// SPDX-License-Identifier: Apache-2.0

#include "altsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

namespace altsim {

Graph Graph::build(std::size_t num_nodes, std::span<const Edge> edges) {
  if (num_nodes == 0) throw ContractError("graph needs at least one node");

  std::set<Edge> seen;
  std::vector<std::vector<std::size_t>> adjacency(num_nodes);
  for (const auto& e : edges) {
    if (e[0] >= num_nodes || e[1] >= num_nodes)
      throw IndexError("edge (" + std::to_string(e[0]) + "," + std::to_string(e[1]) +
                       ") references a node outside [0, " + std::to_string(num_nodes) + ")");
    if (e[0] == e[1]) throw ContractError("self-loop edge at node " + std::to_string(e[0]));
    const Edge key{std::min(e[0], e[1]), std::max(e[0], e[1])};
    if (!seen.insert(key).second)
      throw ContractError("duplicate edge (" + std::to_string(key[0]) + "," +
                          std::to_string(key[1]) + ")");
    adjacency[e[0]].push_back(e[1]);
    adjacency[e[1]].push_back(e[0]);
  }

  // Degrees of A + I.
  std::vector<double> degree(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    adjacency[i].push_back(i);
    std::sort(adjacency[i].begin(), adjacency[i].end());
    degree[i] = static_cast<double>(adjacency[i].size());
  }

  auto csr = std::make_shared<CsrMatrix>();
  csr->rows = csr->cols = num_nodes;
  csr->row_ptr.push_back(0);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (auto j : adjacency[i]) {
      csr->col_index.push_back(j);
      // 1/sqrt(d_i d_j) is exactly symmetric because the product commutes.
      csr->values.push_back(1.0 / std::sqrt(degree[i] * degree[j]));
    }
    csr->row_ptr.push_back(csr->col_index.size());
  }

  Graph g;
  g.num_nodes_ = num_nodes;
  g.edges_.assign(edges.begin(), edges.end());
  g.propagation_ = std::move(csr);
  return g;
}

std::vector<std::size_t> Graph::neighbours(std::size_t node) const {
  if (node >= num_nodes_) throw IndexError("node index out of range");
  const auto& p = *propagation_;
  std::vector<std::size_t> out;
  for (auto k = p.row_ptr[node]; k < p.row_ptr[node + 1]; ++k)
    if (p.col_index[k] != node) out.push_back(p.col_index[k]);
  return out;
}

bool Graph::connected() const {
  if (num_nodes_ == 0) return false;
  std::vector<bool> visited(num_nodes_, false);
  std::vector<std::size_t> stack{0};
  visited[0] = true;
  std::size_t count = 1;
  const auto& p = *propagation_;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (auto k = p.row_ptr[v]; k < p.row_ptr[v + 1]; ++k) {
      const auto w = p.col_index[k];
      if (!visited[w]) {
        visited[w] = true;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == num_nodes_;
}

Tensor propagate(const Graph& g, const Tensor& x) {
  if (x.rank() != 2 || x.rows() != g.num_nodes())
    throw DimensionError("graph has " + std::to_string(g.num_nodes()) + " nodes but features are " +
                         shape_string(x.shape()));
  return spmm(g.propagation_ptr(), x);
}

Tensor graph_conv(const Graph& g, const Tensor& x, const Tensor& theta) {
  if (theta.rank() != 2 || x.rank() != 2 || theta.rows() != x.cols())
    throw DimensionError("graph_conv: features " + shape_string(x.shape()) + " vs weights " +
                         shape_string(theta.shape()));
  return matmul(propagate(g, x), theta);
}

// ---- meshes ------------------------------------------------------------------

std::string to_string(MeshKind kind) {
  switch (kind) {
    case MeshKind::Grid: return "grid";
    case MeshKind::Ring: return "ring";
    case MeshKind::Loaded: return "loaded";
  }
  return "unknown";
}

Tensor Mesh::rest_tensor() const {
  std::vector<double> v;
  v.reserve(spec.rest_positions.size() * 3);
  for (const auto& p : spec.rest_positions) v.insert(v.end(), p.begin(), p.end());
  return Tensor::from({spec.rest_positions.size(), 3}, std::move(v));
}

Mesh make_grid_mesh(std::size_t nx, std::size_t ny, double spacing) {
  if (nx < 2 || ny < 2) throw ContractError("grid mesh needs nx, ny >= 2");
  if (!(spacing > 0.0)) throw ContractError("grid spacing must be positive");

  Mesh mesh;
  mesh.spec.kind = MeshKind::Grid;
  mesh.spec.nx = nx;
  mesh.spec.ny = ny;
  mesh.spec.spacing = spacing;
  const double cx = 0.5 * static_cast<double>(nx - 1) * spacing;
  const double cy = 0.5 * static_cast<double>(ny - 1) * spacing;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i)
      mesh.spec.rest_positions.push_back(
          {static_cast<double>(i) * spacing - cx, static_cast<double>(j) * spacing - cy, 0.0});

  auto id = [nx](std::size_t i, std::size_t j) { return j * nx + i; };
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) edges.push_back({id(i, j), id(i + 1, j)});
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) edges.push_back({id(i, j), id(i, j + 1)});
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      edges.push_back({id(i, j), id(i + 1, j + 1)});
      edges.push_back({id(i + 1, j), id(i, j + 1)});
    }
  mesh.graph = Graph::build(nx * ny, edges);
  return mesh;
}

Mesh make_ring_mesh(std::size_t n, double radius) {
  if (n < 5) throw ContractError("ring mesh needs at least 5 nodes");
  if (!(radius > 0.0)) throw ContractError("ring radius must be positive");
  Mesh mesh;
  mesh.spec.kind = MeshKind::Ring;
  mesh.spec.nx = n;
  mesh.spec.ny = 1;
  mesh.spec.spacing = 2.0 * radius * std::sin(std::numbers::pi / static_cast<double>(n));
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    mesh.spec.rest_positions.push_back({radius * std::cos(a), radius * std::sin(a), 0.0});
    edges.push_back({i, (i + 1) % n});
    edges.push_back({i, (i + 2) % n});
  }
  mesh.graph = Graph::build(n, edges);
  return mesh;
}

void validate_mesh(const Mesh& mesh) {
  if (mesh.spec.rest_positions.size() != mesh.graph.num_nodes())
    throw ContractError("mesh has " + std::to_string(mesh.spec.rest_positions.size()) +
                        " rest positions for " + std::to_string(mesh.graph.num_nodes()) + " nodes");
  for (const auto& e : mesh.graph.edges()) {
    const auto& a = mesh.spec.rest_positions[e[0]];
    const auto& b = mesh.spec.rest_positions[e[1]];
    const double len = std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    if (!(len > 0.0))
      throw ContractError("degenerate rest edge (" + std::to_string(e[0]) + "," +
                          std::to_string(e[1]) + ")");
  }
  if (!mesh.graph.connected()) throw ContractError("mesh graph is not connected");
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["version"] = kGraphFileVersion;
  doc["kind"] = to_string(mesh.spec.kind);
  doc["num_nodes"] = mesh.num_nodes();
  doc["edges"] = mesh.graph.edges();
  doc["rest_positions"] = mesh.spec.rest_positions;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write graph file " + path.string());
  out << doc.dump(1) << '\n';
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open graph file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    if (doc.at("version").get<int>() != kGraphFileVersion)
      throw FormatError("graph file " + path.string() + ": unsupported version " +
                        doc.at("version").dump());
    Mesh mesh;
    mesh.spec.kind = MeshKind::Loaded;
    const auto n = doc.at("num_nodes").get<std::size_t>();
    const auto edges = doc.at("edges").get<std::vector<Edge>>();
    mesh.spec.rest_positions = doc.at("rest_positions").get<std::vector<Vec3>>();
    mesh.graph = Graph::build(n, edges);
    validate_mesh(mesh);
    return mesh;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("graph file " + path.string() + ": " + e.what());
  } catch (const std::logic_error& e) {
    // Out-of-range edges, duplicate edges, bad rest positions.
    throw FormatError("graph file " + path.string() + ": " + e.what());
  }
}

}  // namespace altsim
