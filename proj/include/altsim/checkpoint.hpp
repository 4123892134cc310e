// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout:
//
//   "ALTCKPT1\n"
//   one line of JSON metadata: format_version, model, net_spec, training,
//     tensors [{name, shape}], payload_bytes
//   payload: little-endian float64 values of each tensor, in metadata order

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "altsim/network.hpp"

namespace altsim {

inline constexpr char kCheckpointMagic[] = "ALTCKPT1";
inline constexpr int kCheckpointVersion = 1;

struct TrainingMetadata {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  int format_version = kCheckpointVersion;
  NetSpec spec;
  ModelKind kind = ModelKind::Alt;
  std::vector<std::pair<std::string, Tensor>> tensors;
  TrainingMetadata training;

  /// Rebuilds the network; throws FormatError if the tensors do not fit.
  Network to_network() const;
};

Checkpoint make_checkpoint(const Network& net, const TrainingMetadata& training);

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version mismatch, truncation or trailing bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Network& net, const TrainingMetadata& training,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Little-endian float64 helpers shared with the trajectory format.
void append_le_doubles(std::string& out, std::span<const double> values);
void read_le_doubles(const std::string& in, std::size_t offset, std::span<double> values);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace altsim
