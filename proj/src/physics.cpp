// SPDX-License-Identifier: Apache-2.0

#include "altsim/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace altsim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

void check_system_inputs(const SpringSystem& system, std::span<const Vec3> y, std::span<const Vec3> v) {
  if (y.size() != system.num_nodes() || v.size() != system.num_nodes())
    throw DimensionError("particle state size does not match the spring system");
}

}  // namespace

void SimConfig::validate() const {
  if (!(frame_rate > 0.0) || substeps == 0) throw ContractError("frame rate and substeps must be positive");
  if (!(node_mass > 0.0)) throw ContractError("node mass must be positive");
  if (stiffness < 0.0 || attachment_stiffness < 0.0 || damping < 0.0 || attachment_damping < 0.0)
    throw ContractError("stiffness and damping must be non-negative");
  if (!(material_jitter >= 0.0 && material_jitter < 1.0))
    throw ContractError("material jitter must lie in [0, 1)");
  const double k = std::max(stiffness, attachment_stiffness) * (1.0 + material_jitter);
  const double m = node_mass * (1.0 - material_jitter);
  if (k > 0.0 && !(step() < 2.0 * std::sqrt(m / k)))
    throw ContractError("step " + std::to_string(step()) + " s violates the explicit stability bound " +
                        std::to_string(2.0 * std::sqrt(m / k)) + " s; raise substeps");
}

std::vector<Vec3> tissue_rest_positions(const SimConfig& cfg, const Mesh& mesh) {
  std::vector<Vec3> rest = mesh.spec.rest_positions;
  for (auto& p : rest) p[2] += cfg.tissue_offset;
  return rest;
}

SpringSystem build_spring_system(const SimConfig& cfg, const Mesh& mesh, std::uint64_t seed) {
  cfg.validate();
  validate_mesh(mesh);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-cfg.material_jitter, cfg.material_jitter);
  auto perturb = [&](double value) {
    return cfg.material_jitter > 0.0 ? value * (1.0 + jitter(rng)) : value;
  };

  const auto rest = tissue_rest_positions(cfg, mesh);
  SpringSystem system;
  const auto n = mesh.num_nodes();
  for (std::size_t i = 0; i < n; ++i) system.masses.push_back(perturb(cfg.node_mass));
  for (const auto& e : mesh.graph.edges())
    system.springs.push_back(
        {e[0], e[1], norm(sub(rest[e[1]], rest[e[0]])), perturb(cfg.stiffness), cfg.damping});
  const auto& driver_rest = mesh.spec.rest_positions;
  for (std::size_t i = 0; i < n; ++i) {
    auto targets = mesh.graph.neighbours(i);
    targets.insert(targets.begin(), i);
    for (auto j : targets)
      system.attachments.push_back({i, j, norm(sub(rest[i], driver_rest[j])),
                                    perturb(cfg.attachment_stiffness), cfg.attachment_damping});
  }
  check_stability(system, cfg.step());
  return system;
}

void check_stability(const SpringSystem& system, double h) {
  if (!(h > 0.0)) throw ContractError("step size must be positive");
  for (double m : system.masses)
    if (!(m > 0.0)) throw ContractError("masses must be positive");
  double k_max = 0.0;
  for (const auto& s : system.springs) k_max = std::max(k_max, s.stiffness);
  for (const auto& a : system.attachments) k_max = std::max(k_max, a.stiffness);
  const double m_min = *std::min_element(system.masses.begin(), system.masses.end());
  if (k_max > 0.0 && !(h < 2.0 * std::sqrt(m_min / k_max)))
    throw ContractError("step " + std::to_string(h) + " s violates the explicit stability bound " +
                        std::to_string(2.0 * std::sqrt(m_min / k_max)) + " s");
}

std::vector<Vec3> internal_forces(const SpringSystem& system, std::span<const Vec3> y,
                                  std::span<const Vec3> v) {
  check_system_inputs(system, y, v);
  std::vector<Vec3> f(system.num_nodes(), Vec3{0.0, 0.0, 0.0});
  for (const auto& s : system.springs) {
    const Vec3 d = sub(y[s.b], y[s.a]);
    const double len = norm(d);
    if (len == 0.0) continue;
    const Vec3 u{d[0] / len, d[1] / len, d[2] / len};
    const double closing = dot(sub(v[s.b], v[s.a]), u);
    const double magnitude = s.stiffness * (len - s.rest) + s.damping * closing;
    for (int c = 0; c < 3; ++c) {
      const double fc = magnitude * u[c];
      f[s.a][c] += fc;
      f[s.b][c] -= fc;
    }
  }
  return f;
}

std::vector<Vec3> attachment_forces(const SpringSystem& system, std::span<const Vec3> y,
                                    std::span<const Vec3> v, std::span<const Vec3> driver_y,
                                    std::span<const Vec3> driver_v) {
  check_system_inputs(system, y, v);
  if (driver_y.size() != y.size() || driver_v.size() != y.size())
    throw DimensionError("driver state size does not match the spring system");
  std::vector<Vec3> f(y.size(), Vec3{0.0, 0.0, 0.0});
  for (const auto& a : system.attachments) {
    const Vec3 d = sub(driver_y[a.driver], y[a.tissue]);
    const double len = norm(d);
    if (len == 0.0) continue;
    const Vec3 u{d[0] / len, d[1] / len, d[2] / len};
    const double closing = dot(sub(driver_v[a.driver], v[a.tissue]), u);
    const double magnitude = a.stiffness * (len - a.rest) + a.damping * closing;
    for (int c = 0; c < 3; ++c) f[a.tissue][c] += magnitude * u[c];
  }
  return f;
}

ParticleState euler_step(const SpringSystem& system, double h, std::span<const Vec3> y,
                         std::span<const Vec3> v, std::span<const Vec3> f_ex, double max_speed,
                         std::size_t step_index) {
  if (f_ex.size() != y.size()) throw DimensionError("external force size does not match the system");
  const auto f_in = internal_forces(system, y, v);
  ParticleState next{std::vector<Vec3>(y.begin(), y.end()), std::vector<Vec3>(v.begin(), v.end())};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double inv_m = 1.0 / system.masses[i];
    for (int c = 0; c < 3; ++c) {
      next.v[i][c] = v[i][c] + h * inv_m * (f_ex[i][c] + f_in[i][c]);
      next.y[i][c] = y[i][c] + h * v[i][c];
    }
    const double speed = norm(next.v[i]);
    if (!std::isfinite(speed) || speed > max_speed)
      throw DivergenceError(step_index, 0,
                            "integration diverged at step " + std::to_string(step_index) + ": node " +
                                std::to_string(i) + " speed " + std::to_string(speed) + " m/s");
  }
  return next;
}

double kinetic_energy(const SpringSystem& system, std::span<const Vec3> v) {
  double e = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) e += 0.5 * system.masses[i] * dot(v[i], v[i]);
  return e;
}

double spring_energy(const SpringSystem& system, std::span<const Vec3> y) {
  double e = 0.0;
  for (const auto& s : system.springs) {
    const double stretch = norm(sub(y[s.b], y[s.a])) - s.rest;
    e += 0.5 * s.stiffness * stretch * stretch;
  }
  return e;
}

// ---- driver scripts --------------------------------------------------------

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::Static: return "static";
    case MotionKind::Swing: return "swing";
    case MotionKind::Sway: return "sway";
    case MotionKind::Bounce: return "bounce";
    case MotionKind::Twist: return "twist";
    case MotionKind::Tilt: return "tilt";
    case MotionKind::Figure8: return "figure8";
    case MotionKind::Shake: return "shake";
    case MotionKind::Orbit: return "orbit";
  }
  return "unknown";
}

MotionKind parse_motion_kind(std::string_view name) {
  for (auto k : {MotionKind::Static, MotionKind::Swing, MotionKind::Sway, MotionKind::Bounce,
                 MotionKind::Twist, MotionKind::Tilt, MotionKind::Figure8, MotionKind::Shake,
                 MotionKind::Orbit})
    if (to_string(k) == name) return k;
  throw ContractError("unknown motion '" + std::string(name) + "'");
}

std::vector<MotionKind> training_motions() {
  return {MotionKind::Swing, MotionKind::Sway, MotionKind::Bounce, MotionKind::Twist};
}

std::vector<MotionKind> heldout_motions() {
  return {MotionKind::Tilt, MotionKind::Figure8, MotionKind::Shake, MotionKind::Orbit};
}

std::string DriverScript::name() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s(a=%.4f,f=%.3f)", to_string(kind).c_str(), amplitude, frequency);
  return buf;
}

std::vector<Vec3> DriverScript::evaluate(std::span<const Vec3> rest, double t) const {
  const double tt = std::min(t, motion_end);
  const double w = kTwoPi * frequency;
  const double s = std::sin(w * tt);
  Vec3 shift{0.0, 0.0, 0.0};
  double yaw = 0.0, pitch = 0.0;
  switch (kind) {
    case MotionKind::Static: break;
    case MotionKind::Swing: shift[0] = amplitude * s; break;
    case MotionKind::Sway: shift[1] = amplitude * s; break;
    case MotionKind::Bounce: shift[2] = amplitude * s; break;
    case MotionKind::Twist: yaw = amplitude * s; break;
    case MotionKind::Tilt: pitch = amplitude * s; break;
    case MotionKind::Figure8:
      shift[0] = amplitude * s;
      shift[1] = 0.5 * amplitude * std::sin(2.0 * w * tt);
      break;
    case MotionKind::Shake:
      shift[0] = amplitude * s;
      shift[1] = 0.6 * amplitude * std::sin(1.7 * w * tt);
      shift[2] = 0.4 * amplitude * std::sin(2.3 * w * tt);
      break;
    case MotionKind::Orbit:
      shift[0] = amplitude * s;
      shift[1] = amplitude * (1.0 - std::cos(w * tt));
      break;
  }
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  std::vector<Vec3> out(rest.size());
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const auto& p = rest[i];
    // Pitch about x, then yaw about z, then translate.
    const double y1 = cp * p[1] - sp * p[2];
    const double z1 = sp * p[1] + cp * p[2];
    const double x2 = cy * p[0] - sy * y1;
    const double y2 = sy * p[0] + cy * y1;
    out[i] = {x2 + shift[0], y2 + shift[1], z1 + shift[2]};
  }
  return out;
}

DriverScript random_script(MotionKind kind, std::mt19937_64& rng, double duration) {
  const bool rotation = kind == MotionKind::Twist || kind == MotionKind::Tilt;
  std::uniform_real_distribution<double> amp(rotation ? 0.15 : 0.02, rotation ? 0.4 : 0.05);
  std::uniform_real_distribution<double> freq(1.0, 2.5);
  DriverScript script;
  script.kind = kind;
  script.amplitude = kind == MotionKind::Static ? 0.0 : amp(rng);
  script.frequency = freq(rng);
  script.duration = duration;
  return script;
}

Trajectory generate_sequence(const SimConfig& cfg, const Mesh& mesh, const DriverScript& script,
                             std::size_t frames, std::uint64_t seed) {
  const auto system = build_spring_system(cfg, mesh, seed);
  // Small tolerance so a script of exactly frames / fps seconds qualifies.
  if (static_cast<double>(frames) / cfg.frame_rate > script.duration * (1.0 + 1e-12))
    throw ContractError("script '" + script.name() + "' covers " + std::to_string(script.duration) +
                        " s, shorter than " + std::to_string(frames) + " frames");

  const double h = cfg.step();
  const auto& rest = mesh.spec.rest_positions;
  ParticleState state{tissue_rest_positions(cfg, mesh),
                      std::vector<Vec3>(mesh.num_nodes(), Vec3{0.0, 0.0, 0.0})};

  Trajectory traj;
  traj.fps = cfg.frame_rate;
  traj.script = script.name();
  traj.X.push_back(positions_tensor(script.evaluate(rest, 0.0)));
  traj.Y.push_back(positions_tensor(state.y));

  std::size_t step = 0;
  for (std::size_t frame = 1; frame <= frames; ++frame) {
    for (std::size_t k = 0; k < cfg.substeps; ++k, ++step) {
      const double t = static_cast<double>(step) * h;
      const auto driver_y = script.evaluate(rest, t);
      const auto driver_next = script.evaluate(rest, t + h);
      std::vector<Vec3> driver_v(driver_y.size());
      for (std::size_t i = 0; i < driver_y.size(); ++i)
        for (int c = 0; c < 3; ++c) driver_v[i][c] = (driver_next[i][c] - driver_y[i][c]) / h;
      const auto f_ex = attachment_forces(system, state.y, state.v, driver_y, driver_v);
      try {
        state = euler_step(system, h, state.y, state.v, f_ex, cfg.divergence_speed, step);
      } catch (const DivergenceError& e) {
        throw DivergenceError(step, frame,
                              std::string(e.what()) + " (frame " + std::to_string(frame) +
                                  "); lower the step size");
      }
    }
    traj.X.push_back(positions_tensor(script.evaluate(rest, static_cast<double>(step) * h)));
    traj.Y.push_back(positions_tensor(state.y));
  }
  return traj;
}

}  // namespace altsim
