// SPDX-License-Identifier: Apache-2.0
//
// Shared by the physics tests and the acceptance binary.

#pragma once

#include <vector>

#include "altsim/physics.hpp"

namespace probe {

using altsim::Vec3;

/// One free node tied by a unit attachment (k = 1, rest 0, undamped) to a
/// driver pinned at the origin; m = 1, starting at y = 1, v = 0.
struct UnitSpring {
  altsim::SpringSystem system;
  std::vector<Vec3> y{{1.0, 0.0, 0.0}};
  std::vector<Vec3> v{{0.0, 0.0, 0.0}};
  std::vector<Vec3> anchor{{0.0, 0.0, 0.0}};

  UnitSpring() {
    system.masses = {1.0};
    system.attachments.push_back({0, 0, 0.0, 1.0, 0.0});
  }

  void step(double h) {
    const auto f = altsim::attachment_forces(system, y, v, anchor, anchor);
    auto next = altsim::euler_step(system, h, y, v, f);
    y = next.y;
    v = next.v;
  }
};

/// Heavily damped stiff sheet: attachment and spring damping large enough
/// that every mode is overdamped. All material values are pinned here so the
/// probe does not move with the library defaults.
inline altsim::SimConfig overdamped_config() {
  altsim::SimConfig cfg;
  cfg.substeps = 16;
  cfg.node_mass = 0.01;
  cfg.stiffness = 40.0;
  cfg.attachment_stiffness = 20.0;
  cfg.attachment_damping = 2.0;
  cfg.damping = 0.3;
  return cfg;
}

/// Drives the sheet with `script` and records the true kinetic energy after
/// each output frame.
inline std::vector<double> kinetic_energy_trace(const altsim::SimConfig& cfg, const altsim::Mesh& mesh,
                                                const altsim::DriverScript& script, std::size_t frames) {
  const auto system = altsim::build_spring_system(cfg, mesh);
  const auto& rest = mesh.spec.rest_positions;
  auto y = altsim::tissue_rest_positions(cfg, mesh);
  std::vector<Vec3> v(y.size(), Vec3{0.0, 0.0, 0.0});
  const double h = cfg.step();
  std::vector<double> ke;
  std::size_t step = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < cfg.substeps; ++k, ++step) {
      const double t = static_cast<double>(step) * h;
      const auto dy = script.evaluate(rest, t);
      const auto dn = script.evaluate(rest, t + h);
      std::vector<Vec3> dv(y.size());
      for (std::size_t i = 0; i < y.size(); ++i)
        for (int c = 0; c < 3; ++c) dv[i][c] = (dn[i][c] - dy[i][c]) / h;
      const auto fe = altsim::attachment_forces(system, y, v, dy, dv);
      auto next = altsim::euler_step(system, h, y, v, fe);
      y = std::move(next.y);
      v = std::move(next.v);
    }
    ke.push_back(altsim::kinetic_energy(system, v));
  }
  return ke;
}

/// Kinetic energy below this is rounding residue of the force balance.
inline constexpr double kEnergyFloor = 1e-20;

/// Index of the first frame in [from, end) whose energy rises above the
/// previous one (ignoring rises that stay under the floor), or -1.
inline long first_energy_rise(const std::vector<double>& ke, std::size_t from) {
  for (std::size_t t = from; t + 1 < ke.size(); ++t)
    if (ke[t + 1] > ke[t] && ke[t + 1] > kEnergyFloor) return static_cast<long>(t + 1);
  return -1;
}

}  // namespace probe
