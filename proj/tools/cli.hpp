// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every command reads defaults, then an optional
// JSON config file, then flags (later sources win), and echoes the merged
// configuration into its output directory.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "altsim/physics.hpp"
#include "altsim/train.hpp"

namespace altsim::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

/// Bad flags, unknown config keys, missing inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MeshSection {
  std::string kind = "grid";  // grid | ring | file
  std::size_t nx = 8;
  std::size_t ny = 8;
  double spacing = 0.02;
  std::size_t ring_nodes = 24;
  double radius = 0.05;
  std::string path;
};

struct DataSection {
  std::size_t frames = 80;
  std::size_t sequences = 16;
  std::vector<std::string> motions{"swing", "sway", "bounce", "twist"};
  std::uint64_t seed = 7;
};

struct ModelSection {
  std::string kind = "alt";
  std::vector<std::size_t> schedule{8, 16, 32, 16, 8};
  std::vector<std::vector<std::size_t>> skips{{4, 0}};
};

struct EvalSection {
  std::string mode = "rollout";  // single-step | rollout | both
  std::vector<std::size_t> horizons{10, 20, 30, 40, 50};
  std::size_t window_start = 0;
  std::string split;
};

struct RunConfig {
  MeshSection mesh;
  SimConfig sim;
  DataSection data;
  ModelSection model;
  TrainConfig train;
  EvalSection eval;

  nlohmann::json to_json() const;
  /// Overlays `doc` onto this config. Throws ConfigError naming the first
  /// unknown section or key, or a value of the wrong type.
  void merge(const nlohmann::json& doc);

  NetSpec net_spec() const;
};

/// Mesh described by the mesh section.
Mesh build_mesh(const MeshSection& section);

/// Reads a gen-data output directory (manifest, graph, trajectories).
Dataset load_dataset(const std::filesystem::path& dir);

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace altsim::cli
