// SPDX-License-Identifier: Apache-2.0
//
// Trajectory file layout:
//
//   "ALTTRAJ1\n"
//   one line of JSON metadata {version, num_nodes, num_frames, fps, graph_ref, script}
//   payload: per frame the X block then the Y block, each |V| x 3 row-major
//            little-endian float64

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "altsim/tensor.hpp"

namespace altsim {

inline constexpr char kTrajectoryMagic[] = "ALTTRAJ1";
inline constexpr int kTrajectoryVersion = 1;

struct Trajectory {
  double fps = 60.0;
  std::string graph_ref;
  std::string script;
  std::vector<Tensor> X;  // driver positions per frame, |V| x 3
  std::vector<Tensor> Y;  // tissue positions per frame, |V| x 3

  std::size_t num_frames() const { return X.size(); }
  std::size_t num_nodes() const { return X.empty() ? 0 : X.front().rows(); }
};

Tensor positions_tensor(std::span<const std::array<double, 3>> points);
std::vector<std::array<double, 3>> positions_from_tensor(const Tensor& t);

std::string encode_trajectory(const Trajectory& traj);
Trajectory decode_trajectory(const std::string& bytes);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace altsim
