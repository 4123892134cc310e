// SPDX-License-Identifier: Apache-2.0

#include "altsim/trajectory.hpp"

#include <json.hpp>

#include "altsim/checkpoint.hpp"

namespace altsim {

using nlohmann::json;

Tensor positions_tensor(std::span<const std::array<double, 3>> points) {
  std::vector<double> v;
  v.reserve(points.size() * 3);
  for (const auto& p : points) v.insert(v.end(), p.begin(), p.end());
  return Tensor::from({points.size(), 3}, std::move(v));
}

std::vector<std::array<double, 3>> positions_from_tensor(const Tensor& t) {
  if (t.rank() != 2 || t.cols() != 3) throw DimensionError("expected |V|x3 positions");
  std::vector<std::array<double, 3>> out(t.rows());
  const auto d = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {d[3 * i], d[3 * i + 1], d[3 * i + 2]};
  return out;
}

std::string encode_trajectory(const Trajectory& traj) {
  if (traj.X.size() != traj.Y.size()) throw ContractError("trajectory X and Y frame counts differ");
  const auto n = traj.num_nodes();
  for (std::size_t f = 0; f < traj.X.size(); ++f)
    if (traj.X[f].shape() != Shape{n, 3} || traj.Y[f].shape() != Shape{n, 3})
      throw DimensionError("trajectory frame " + std::to_string(f) + " is not |V|x3");
  json meta;
  meta["version"] = kTrajectoryVersion;
  meta["num_nodes"] = n;
  meta["num_frames"] = traj.num_frames();
  meta["fps"] = traj.fps;
  meta["graph_ref"] = traj.graph_ref;
  meta["script"] = traj.script;
  std::string out = std::string(kTrajectoryMagic) + "\n" + meta.dump() + "\n";
  for (std::size_t f = 0; f < traj.X.size(); ++f) {
    append_le_doubles(out, traj.X[f].data());
    append_le_doubles(out, traj.Y[f].data());
  }
  return out;
}

Trajectory decode_trajectory(const std::string& bytes) {
  const std::string magic = std::string(kTrajectoryMagic) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) throw FormatError("not an ALTTRAJ1 trajectory");
  const auto eol = bytes.find('\n', magic.size());
  if (eol == std::string::npos) throw FormatError("trajectory metadata truncated");
  Trajectory traj;
  try {
    const json meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(magic.size()),
                                  bytes.begin() + static_cast<std::ptrdiff_t>(eol));
    const int version = meta.at("version").get<int>();
    if (version != kTrajectoryVersion)
      throw FormatError("trajectory version " + std::to_string(version) + " is not supported");
    const auto n = meta.at("num_nodes").get<std::size_t>();
    const auto frames = meta.at("num_frames").get<std::size_t>();
    traj.fps = meta.at("fps").get<double>();
    traj.graph_ref = meta.at("graph_ref").get<std::string>();
    traj.script = meta.value("script", std::string());
    if (n == 0) throw FormatError("trajectory has no nodes");
    const std::size_t expected = eol + 1 + frames * 2 * n * 3 * 8;
    if (bytes.size() != expected)
      throw FormatError("trajectory payload size " + std::to_string(bytes.size()) + " != expected " +
                        std::to_string(expected));
    std::size_t offset = eol + 1;
    for (std::size_t f = 0; f < frames; ++f) {
      for (auto* dst : {&traj.X, &traj.Y}) {
        std::vector<double> v(n * 3);
        read_le_doubles(bytes, offset, v);
        offset += v.size() * 8;
        dst->push_back(Tensor::from({n, 3}, std::move(v)));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt trajectory metadata: ") + e.what());
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  write_file_bytes(path, encode_trajectory(traj));
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  return decode_trajectory(read_file_bytes(path));
}

}  // namespace altsim
