// SPDX-License-Identifier: Apache-2.0

#include "altsim/dataset.hpp"

#include "altsim/parallel.hpp"

namespace altsim {

std::vector<SequencePlan> plan_sequences(std::span<const MotionKind> kinds, std::size_t count,
                                         std::size_t frames, double fps, std::mt19937_64& rng) {
  if (kinds.empty() && count > 0) throw ContractError("no motion kinds to plan from");
  const double duration = static_cast<double>(frames) / fps;
  std::vector<SequencePlan> plans;
  for (std::size_t s = 0; s < count; ++s) {
    SequencePlan p;
    p.script = random_script(kinds[s % kinds.size()], rng, duration);
    p.seed = rng();
    plans.push_back(p);
  }
  return plans;
}

Dataset generate_dataset(const SimConfig& cfg, const Mesh& mesh, std::span<const SequencePlan> plans,
                         std::size_t frames) {
  Dataset data;
  data.graph = mesh.graph;
  data.sequences.resize(plans.size());
  parallel_for(plans.size(), [&](std::size_t s) {
    data.sequences[s] = generate_sequence(cfg, mesh, plans[s].script, frames, plans[s].seed);
  });
  return data;
}

Dataset window(const Dataset& data, std::size_t start, std::size_t length) {
  Dataset out;
  out.graph = data.graph;
  for (std::size_t s = 0; s < data.sequences.size(); ++s) {
    const auto& seq = data.sequences[s];
    if (start + length >= seq.num_frames())
      throw ContractError("window [" + std::to_string(start) + ", " + std::to_string(start + length) +
                          "] exceeds sequence " + std::to_string(s) + " (" +
                          std::to_string(seq.num_frames()) + " frames)");
    Trajectory w = seq;
    w.X.assign(seq.X.begin() + static_cast<std::ptrdiff_t>(start),
               seq.X.begin() + static_cast<std::ptrdiff_t>(start + length + 1));
    w.Y.assign(seq.Y.begin() + static_cast<std::ptrdiff_t>(start),
               seq.Y.begin() + static_cast<std::ptrdiff_t>(start + length + 1));
    out.sequences.push_back(std::move(w));
  }
  return out;
}

SyntheticTask make_synthetic_task(const TaskConfig& cfg) {
  SyntheticTask task;
  task.mesh = make_grid_mesh(cfg.nx, cfg.ny, cfg.spacing);
  std::mt19937_64 rng(cfg.seed);
  const auto known = training_motions();
  const auto unseen = heldout_motions();
  const double fps = cfg.sim.frame_rate;
  // Splits draw from one stream in a fixed order.
  const auto train = plan_sequences(known, cfg.train_sequences, cfg.frames, fps, rng);
  const auto validation = plan_sequences(known, cfg.validation_sequences, cfg.frames, fps, rng);
  const auto test = plan_sequences(known, cfg.test_sequences, cfg.frames, fps, rng);
  const auto heldout = plan_sequences(unseen, cfg.heldout_sequences, cfg.frames, fps, rng);
  task.train = generate_dataset(cfg.sim, task.mesh, train, cfg.frames);
  task.validation = generate_dataset(cfg.sim, task.mesh, validation, cfg.frames);
  task.test = generate_dataset(cfg.sim, task.mesh, test, cfg.frames);
  task.heldout = generate_dataset(cfg.sim, task.mesh, heldout, cfg.frames);
  return task;
}

}  // namespace altsim
