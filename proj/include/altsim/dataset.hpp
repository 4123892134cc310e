// SPDX-License-Identifier: Apache-2.0
//
// Synthetic datasets: batches of simulated sequences on one mesh, and the
// train / validation / test / held-out split used for benchmarking.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "altsim/physics.hpp"
#include "altsim/train.hpp"

namespace altsim {

struct SequencePlan {
  DriverScript script;
  std::uint64_t seed = 0;
};

/// `count` scripts cycling through `kinds`, each covering `frames` frames at
/// `fps`, with amplitudes, frequencies and per-sequence seeds drawn from `rng`.
std::vector<SequencePlan> plan_sequences(std::span<const MotionKind> kinds, std::size_t count,
                                         std::size_t frames, double fps, std::mt19937_64& rng);

/// Simulates every plan (in parallel). Sequence order follows the plans.
Dataset generate_dataset(const SimConfig& cfg, const Mesh& mesh, std::span<const SequencePlan> plans,
                         std::size_t frames);

/// Frames [start, start + length] of every sequence, so frame `start`
/// becomes the new initial frame.
Dataset window(const Dataset& data, std::size_t start, std::size_t length);

struct TaskConfig {
  std::size_t nx = 8;
  std::size_t ny = 8;
  double spacing = 0.02;
  std::size_t train_sequences = 16;
  std::size_t validation_sequences = 4;
  std::size_t test_sequences = 4;
  std::size_t heldout_sequences = 4;
  std::size_t frames = 80;
  std::uint64_t seed = 7;
  SimConfig sim;
};

/// Train, validation and test use the training motions; held-out uses the
/// disjoint motion set.
struct SyntheticTask {
  Mesh mesh;
  Dataset train;
  Dataset validation;
  Dataset test;
  Dataset heldout;
};

SyntheticTask make_synthetic_task(const TaskConfig& cfg);

}  // namespace altsim
