// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth generator: a mass-spring tissue sheet hung on a scripted rigid
// driver surface, integrated with explicit forward Euler:
//
//   v_t = v_{t-1} + h M^-1 (f_ex + f_in(y_{t-1}, v_{t-1}))
//   y_t = y_{t-1} + h v_{t-1}
//
// Positions use the pre-update velocity. Internal forces are Hookean springs
// along mesh edges with damping on the relative velocity along each spring,
// so they sum to zero. The driver acts through per-node attachment springs,
// which count as external force.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "altsim/graph.hpp"
#include "altsim/trajectory.hpp"

namespace altsim {

struct SimConfig {
  double frame_rate = 60.0;        // output frames per second
  std::size_t substeps = 8;        // physics steps per output frame
  double node_mass = 0.01;         // kg
  double stiffness = 2.0;          // N/m, tissue springs
  double damping = 0.01;           // N s/m, along each tissue spring
  // Soft enough that the tissue rings at a few Hz, well under the 30 Hz a
  // 60 fps sequence can resolve.
  double attachment_stiffness = 0.7;
  double attachment_damping = 0.008;
  double tissue_offset = 0.02;     // m, tissue rest height above the driver
  double material_jitter = 0.0;    // relative +- perturbation of masses and stiffnesses
  double divergence_speed = 1e3;   // m/s

  double step() const { return 1.0 / (frame_rate * static_cast<double>(substeps)); }
  /// Positive step and masses; h < 2 sqrt(m / k) for the stiffest spring.
  void validate() const;
};

struct Spring {
  std::size_t a = 0;
  std::size_t b = 0;
  double rest = 0.0;
  double stiffness = 0.0;
  double damping = 0.0;
};

/// Tissue node `tissue` tied to driver node `driver`.
struct Attachment {
  std::size_t tissue = 0;
  std::size_t driver = 0;
  double rest = 0.0;
  double stiffness = 0.0;
  double damping = 0.0;
};

struct SpringSystem {
  std::vector<double> masses;
  std::vector<Spring> springs;
  std::vector<Attachment> attachments;

  std::size_t num_nodes() const { return masses.size(); }
};

/// Springs along mesh edges at the tissue rest shape (mesh rest + offset in z).
/// Each tissue node is attached to its own driver node and to that node's
/// mesh neighbours, which gives the layer shear stiffness against the driver.
/// `seed` drives the optional material jitter only.
SpringSystem build_spring_system(const SimConfig& cfg, const Mesh& mesh, std::uint64_t seed = 0);

/// Throws ContractError if the stiffest spring violates h < 2 sqrt(m / k).
void check_stability(const SpringSystem& system, double h);

std::vector<Vec3> internal_forces(const SpringSystem& system, std::span<const Vec3> y,
                                  std::span<const Vec3> v);

/// Force on each tissue node from its attachment springs to the driver.
std::vector<Vec3> attachment_forces(const SpringSystem& system, std::span<const Vec3> y,
                                    std::span<const Vec3> v, std::span<const Vec3> driver_y,
                                    std::span<const Vec3> driver_v);

struct ParticleState {
  std::vector<Vec3> y;
  std::vector<Vec3> v;
};

/// One explicit Euler step of size h. Throws DivergenceError (carrying
/// `step_index`) when a velocity is non-finite or exceeds `max_speed`.
ParticleState euler_step(const SpringSystem& system, double h, std::span<const Vec3> y,
                         std::span<const Vec3> v, std::span<const Vec3> f_ex,
                         double max_speed = 1e3, std::size_t step_index = 0);

double kinetic_energy(const SpringSystem& system, std::span<const Vec3> v);
/// Elastic energy of the tissue springs (attachments excluded).
double spring_energy(const SpringSystem& system, std::span<const Vec3> y);

// ---- driver scripts --------------------------------------------------------

enum class MotionKind { Static, Swing, Sway, Bounce, Twist, Tilt, Figure8, Shake, Orbit };

std::string to_string(MotionKind kind);
MotionKind parse_motion_kind(std::string_view name);

/// Kinds used for training data, and the disjoint set kept for unseen-motion tests.
std::vector<MotionKind> training_motions();
std::vector<MotionKind> heldout_motions();

/// A rigid motion program applied to the mesh rest shape. Translations are
/// in meters, rotations in radians. Motion runs until `motion_end` seconds
/// and then holds its pose; the script covers `duration` seconds in total.
struct DriverScript {
  MotionKind kind = MotionKind::Static;
  double amplitude = 0.0;
  double frequency = 1.0;  // Hz
  double motion_end = 1e9;
  double duration = 1.0;

  std::string name() const;
  /// Driver positions at time t for the given rest shape.
  std::vector<Vec3> evaluate(std::span<const Vec3> rest, double t) const;
};

/// Random amplitude and frequency for `kind`, drawn from `rng`.
DriverScript random_script(MotionKind kind, std::mt19937_64& rng, double duration);

/// Frames 0..frames of driver X and tissue Y. Tissue starts at rest with zero
/// velocity. Throws ContractError if the script is shorter than the request
/// and DivergenceError (with the frame index) if integration blows up.
Trajectory generate_sequence(const SimConfig& cfg, const Mesh& mesh, const DriverScript& script,
                             std::size_t frames, std::uint64_t seed);

std::vector<Vec3> tissue_rest_positions(const SimConfig& cfg, const Mesh& mesh);

}  // namespace altsim
