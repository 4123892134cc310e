// SPDX-License-Identifier: Apache-2.0
//
// Analytic-vs-central-difference gradient comparison on a small bundled
// fixture: a 6-node graph, two 4-channel hidden layers plus the output layer,
// three frames of random driver and target motion.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "altsim/network.hpp"
#include "altsim/train.hpp"

namespace altsim {

struct GradcheckFixture {
  Graph graph;
  std::vector<Tensor> drivers;  // X_0..X_T
  std::vector<Tensor> targets;  // Y_0..Y_T
};

/// 2x3 grid with quad diagonals, random drivers and targets of T frames.
GradcheckFixture make_gradcheck_fixture(std::size_t frames = 3, std::uint64_t seed = 11);

/// Hidden widths {4, 4} with a skip from the first into the second hidden
/// layer when the model carries accumulations.
NetSpec gradcheck_net_spec(ModelKind kind);

struct ParamGradError {
  std::string name;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

struct GradcheckResult {
  std::vector<ParamGradError> params;
  double worst_rel_error = 0.0;
  std::string worst_param;
  double seconds = 0.0;
  bool passed(double tol) const { return worst_rel_error <= tol; }
};

/// Entry-wise error |a - n| / max(|a|, |n|, floor); the floor keeps entries
/// whose true gradient is zero from dividing by rounding noise.
inline constexpr double kGradcheckFloor = 1e-6;

/// Roll-out loss over frames 1..T, differentiated both ways.
GradcheckResult gradcheck(const Network& net, const GradcheckFixture& fixture, double eps);

}  // namespace altsim
