// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>

#include "altsim/checkpoint.hpp"
#include "altsim/trajectory.hpp"

using namespace altsim;
using nlohmann::json;

namespace {

// Byte oracle: least significant byte first, built by shifting.
std::string le_bytes(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  std::string out(8, '\0');
  for (int b = 0; b < 8; ++b) out[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  return out;
}

Trajectory small_trajectory() {
  Trajectory t;
  t.fps = 30.0;
  t.graph_ref = "graph.json";
  t.script = "swing(a=0.01,f=1)";
  for (int f = 0; f < 3; ++f) {
    t.X.push_back(Tensor::from({2, 3}, {1.0 * f, 2.0, 3.0, 4.0, 5.0, 6.0 + f}));
    t.Y.push_back(Tensor::from({2, 3}, {-1.0, 0.5 * f, 0.25, 1e-300, -0.0, 1.0 / 3.0}));
  }
  return t;
}

std::pair<std::string, std::string> split_header(const std::string& bytes) {
  const auto first = bytes.find('\n');
  const auto second = bytes.find('\n', first + 1);
  return {bytes.substr(first + 1, second - first - 1), bytes.substr(second + 1)};
}

std::string with_meta(const std::string& bytes, const json& meta) {
  const auto first = bytes.find('\n');
  const auto second = bytes.find('\n', first + 1);
  return bytes.substr(0, first + 1) + meta.dump() + bytes.substr(second);
}

}  // namespace

TEST_CASE("trajectory bytes: magic, metadata line, X then Y per frame") {
  const auto t = small_trajectory();
  const auto bytes = encode_trajectory(t);
  CHECK(bytes.rfind("ALTTRAJ1\n", 0) == 0);
  const auto [meta_text, payload] = split_header(bytes);
  const auto meta = json::parse(meta_text);
  CHECK(meta.at("version") == 1);
  CHECK(meta.at("num_nodes") == 2);
  CHECK(meta.at("num_frames") == 3);
  CHECK(meta.at("fps") == 30.0);
  CHECK(meta.at("graph_ref") == "graph.json");

  std::string expected;
  for (int f = 0; f < 3; ++f) {
    for (double v : t.X[f].data()) expected += le_bytes(v);
    for (double v : t.Y[f].data()) expected += le_bytes(v);
  }
  CHECK(payload == expected);
}

TEST_CASE("trajectory round trip is bit-exact") {
  auto t = small_trajectory();
  t.Y[1].mutable_data()[0] = std::numeric_limits<double>::denorm_min();
  const auto back = decode_trajectory(encode_trajectory(t));
  CHECK(back.fps == t.fps);
  CHECK(back.graph_ref == t.graph_ref);
  CHECK(back.script == t.script);
  REQUIRE(back.num_frames() == 3);
  for (int f = 0; f < 3; ++f) {
    CHECK(le_bytes(back.X[f].data()[0]) == le_bytes(t.X[f].data()[0]));
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::bit_cast<std::uint64_t>(back.X[f].data()[i]) == std::bit_cast<std::uint64_t>(t.X[f].data()[i]));
      CHECK(std::bit_cast<std::uint64_t>(back.Y[f].data()[i]) == std::bit_cast<std::uint64_t>(t.Y[f].data()[i]));
    }
  }
  CHECK(std::signbit(back.Y[0].data()[4]));
  CHECK(encode_trajectory(back) == encode_trajectory(t));
}

TEST_CASE("trajectory files on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "altsim_formats_test";
  std::filesystem::create_directories(dir);
  const auto t = small_trajectory();
  save_trajectory(t, dir / "a.alttraj");
  CHECK(read_file_bytes(dir / "a.alttraj") == encode_trajectory(t));
  CHECK(encode_trajectory(load_trajectory(dir / "a.alttraj")) == encode_trajectory(t));
  CHECK_THROWS_AS(load_trajectory(dir / "missing.alttraj"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt trajectories are rejected") {
  const auto bytes = encode_trajectory(small_trajectory());
  CHECK_THROWS_AS(decode_trajectory(""), FormatError);
  CHECK_THROWS_AS(decode_trajectory("ALTTRAJ2\n" + bytes.substr(9)), FormatError);
  CHECK_THROWS_AS(decode_trajectory(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_trajectory(bytes + '\0'), FormatError);
  CHECK_THROWS_AS(decode_trajectory(bytes.substr(0, 12)), FormatError);

  auto meta = json::parse(split_header(bytes).first);
  auto bump = meta;
  bump["version"] = 2;
  CHECK_THROWS_AS(decode_trajectory(with_meta(bytes, bump)), FormatError);
  auto frames = meta;
  frames["num_frames"] = 4;
  CHECK_THROWS_AS(decode_trajectory(with_meta(bytes, frames)), FormatError);
  auto nodes = meta;
  nodes["num_nodes"] = 0;
  CHECK_THROWS_AS(decode_trajectory(with_meta(bytes, nodes)), FormatError);
  auto missing = meta;
  missing.erase("fps");
  CHECK_THROWS_AS(decode_trajectory(with_meta(bytes, missing)), FormatError);
  CHECK_THROWS_AS(decode_trajectory("ALTTRAJ1\n{not json\n"), FormatError);
}

TEST_CASE("trajectory encoding checks shapes") {
  auto t = small_trajectory();
  t.Y.pop_back();
  CHECK_THROWS_AS(encode_trajectory(t), ContractError);
  t = small_trajectory();
  t.Y[2] = Tensor::zeros({3, 3});
  CHECK_THROWS_AS(encode_trajectory(t), DimensionError);
}

TEST_CASE("checkpoint bytes: tensors in declared order, little-endian") {
  NetSpec spec;
  spec.channel_schedule = {3, 2};
  spec.skips.clear();
  const Network net(spec, ModelKind::ConvLstmCpDeltaY, 4);
  const auto bytes = encode_checkpoint(make_checkpoint(net, {7, 0.125, 99}));
  CHECK(bytes.rfind("ALTCKPT1\n", 0) == 0);
  const auto [meta_text, payload] = split_header(bytes);
  const auto meta = json::parse(meta_text);
  CHECK(meta.at("format_version") == 1);
  CHECK(meta.at("model") == "convlstm-cp-dy");
  CHECK(meta.at("training").at("epoch") == 7);
  CHECK(meta.at("training").at("loss") == 0.125);
  CHECK(meta.at("training").at("seed") == 99);
  CHECK(meta.at("payload_bytes") == payload.size());

  const auto named = net.named_parameters();
  REQUIRE(meta.at("tensors").size() == named.size());
  std::string expected;
  for (std::size_t k = 0; k < named.size(); ++k) {
    CHECK(meta["tensors"][k].at("name") == named[k].first);
    std::vector<std::size_t> shape(named[k].second.shape().begin(), named[k].second.shape().end());
    CHECK(meta["tensors"][k].at("shape").get<std::vector<std::size_t>>() == shape);
    for (double v : named[k].second.data()) expected += le_bytes(v);
  }
  CHECK(payload == expected);
}

TEST_CASE("checkpoint round trip for every model kind") {
  for (auto kind : {ModelKind::Alt, ModelKind::ConvLstmCpY, ModelKind::ConvLstmNpY, ModelKind::ConvLstmCpDeltaY,
                    ModelKind::ConvLstmNpDeltaY}) {
    NetSpec spec;
    spec.channel_schedule = {4, 3};
    spec.skips.clear();
    const Network net(spec, kind, 12);
    const auto bytes = encode_checkpoint(make_checkpoint(net, {1, 0.5, 2}));
    const auto ckpt = decode_checkpoint(bytes);
    CHECK(ckpt.kind == kind);
    CHECK(ckpt.training.epoch == 1);
    const auto back = ckpt.to_network();
    CHECK(back.parameter_count() == net.parameter_count());
    CHECK(encode_checkpoint(make_checkpoint(back, ckpt.training)) == bytes);
  }
}

TEST_CASE("checkpoint tensors that do not fit the spec are rejected") {
  NetSpec spec;
  spec.channel_schedule = {3};
  spec.skips.clear();
  const Network net(spec, ModelKind::Alt, 1);
  const auto bytes = encode_checkpoint(make_checkpoint(net, {}));
  auto meta = json::parse(split_header(bytes).first);
  auto wide = meta;
  wide["net_spec"]["channel_schedule"] = {4};
  CHECK_THROWS_AS(decode_checkpoint(with_meta(bytes, wide)).to_network(), FormatError);
  auto renamed = meta;
  renamed["tensors"][0]["name"] = "layer0.W_zz";
  CHECK_THROWS_AS(decode_checkpoint(with_meta(bytes, renamed)).to_network(), FormatError);
  auto kind = meta;
  kind["model"] = "transformer";
  CHECK_THROWS_AS(decode_checkpoint(with_meta(bytes, kind)), FormatError);
}
