// SPDX-License-Identifier: Apache-2.0

#include "altsim/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

namespace altsim {

using nlohmann::json;

void append_le_doubles(std::string& out, std::span<const double> values) {
  const auto start = out.size();
  out.resize(start + values.size() * 8);
  char* dst = out.data() + start;
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
}

void read_le_doubles(const std::string& in, std::size_t offset, std::span<double> values) {
  if (offset + values.size() * 8 > in.size()) throw FormatError("payload truncated");
  const auto* src = reinterpret_cast<const unsigned char*>(in.data() + offset);
  for (auto& v : values) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(src[b]) << (8 * b);
    v = std::bit_cast<double>(bits);
    src += 8;
  }
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

namespace {

json spec_to_json(const NetSpec& spec) {
  json j;
  j["channel_schedule"] = spec.channel_schedule;
  j["input_channels"] = spec.input_channels;
  j["output_channels"] = spec.output_channels;
  j["skips"] = spec.skips;
  j["allow_any_schedule"] = spec.allow_any_schedule;
  return j;
}

NetSpec spec_from_json(const json& j) {
  NetSpec spec;
  spec.channel_schedule = j.at("channel_schedule").get<std::vector<std::size_t>>();
  spec.input_channels = j.at("input_channels").get<std::size_t>();
  spec.output_channels = j.at("output_channels").get<std::size_t>();
  spec.skips = j.at("skips").get<std::vector<std::pair<std::size_t, std::size_t>>>();
  spec.allow_any_schedule = j.at("allow_any_schedule").get<bool>();
  return spec;
}

CellParams& layer_for(std::vector<CellParams>& layers, const std::string& name, std::string& field) {
  // "layer<l>.<field>"
  const auto dot = name.find('.');
  if (name.rfind("layer", 0) != 0 || dot == std::string::npos)
    throw FormatError("bad tensor name '" + name + "'");
  const auto index = std::stoul(name.substr(5, dot - 5));
  if (index >= layers.size()) throw FormatError("tensor '" + name + "' names a missing layer");
  field = name.substr(dot + 1);
  return layers[index];
}

Tensor* field_slot(CellParams& p, const std::string& field) {
  if (field == "W_xi") return &p.W_xi;
  if (field == "W_xf") return &p.W_xf;
  if (field == "W_xc") return &p.W_xc;
  if (field == "W_xo") return &p.W_xo;
  if (field == "W_hi") return &p.W_hi;
  if (field == "W_hf") return &p.W_hf;
  if (field == "W_hc") return &p.W_hc;
  if (field == "W_ho") return &p.W_ho;
  if (field == "W_ci") return &p.W_ci;
  if (field == "W_cf") return &p.W_cf;
  if (field == "W_co") return &p.W_co;
  if (field == "b_i") return &p.b_i;
  if (field == "b_f") return &p.b_f;
  if (field == "b_c") return &p.b_c;
  if (field == "b_o") return &p.b_o;
  return nullptr;
}

}  // namespace

Checkpoint make_checkpoint(const Network& net, const TrainingMetadata& training) {
  Checkpoint ckpt;
  ckpt.spec = net.spec();
  ckpt.kind = net.kind();
  for (auto& [name, t] : net.named_parameters()) ckpt.tensors.emplace_back(name, t.detach());
  ckpt.training = training;
  return ckpt;
}

Network Checkpoint::to_network() const {
  std::vector<CellParams> layers(spec.hidden_layers() + 1);
  for (const auto& [name, t] : tensors) {
    std::string field;
    auto& layer = layer_for(layers, name, field);
    Tensor* slot = field_slot(layer, field);
    if (!slot) throw FormatError("unknown tensor field '" + field + "'");
    *slot = t.clone();
    slot->set_requires_grad(true);
  }
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (!layers[l].W_xi.defined() || !layers[l].b_o.defined())
      throw FormatError("checkpoint is missing tensors for layer " + std::to_string(l));
  try {
    return Network(spec, kind, std::move(layers));
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint does not describe a valid network: ") + e.what());
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  json meta;
  meta["format_version"] = ckpt.format_version;
  meta["model"] = model_name(ckpt.kind);
  meta["net_spec"] = spec_to_json(ckpt.spec);
  meta["training"] = {{"epoch", ckpt.training.epoch},
                      {"loss", ckpt.training.loss},
                      {"seed", ckpt.training.seed}};
  std::size_t payload = 0;
  json list = json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}});
    payload += t.size() * 8;
  }
  meta["tensors"] = list;
  meta["payload_bytes"] = payload;

  std::string out = std::string(kCheckpointMagic) + "\n" + meta.dump() + "\n";
  out.reserve(out.size() + payload);
  for (const auto& [name, t] : ckpt.tensors) append_le_doubles(out, t.data());
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const std::string magic = std::string(kCheckpointMagic) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) throw FormatError("not an ALTCKPT1 checkpoint");
  const auto eol = bytes.find('\n', magic.size());
  if (eol == std::string::npos) throw FormatError("checkpoint metadata truncated");

  Checkpoint ckpt;
  std::size_t payload_bytes = 0;
  try {
    const json meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(magic.size()),
                                  bytes.begin() + static_cast<std::ptrdiff_t>(eol));
    ckpt.format_version = meta.at("format_version").get<int>();
    if (ckpt.format_version != kCheckpointVersion)
      throw FormatError("checkpoint format version " + std::to_string(ckpt.format_version) +
                        " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    ckpt.kind = parse_model_kind(meta.at("model").get<std::string>());
    ckpt.spec = spec_from_json(meta.at("net_spec"));
    const auto& tr = meta.at("training");
    ckpt.training = {tr.at("epoch").get<std::size_t>(), tr.at("loss").get<double>(),
                     tr.at("seed").get<std::uint64_t>()};
    payload_bytes = meta.at("payload_bytes").get<std::size_t>();

    std::set<std::string> names;
    std::size_t offset = eol + 1;
    if (bytes.size() != offset + payload_bytes)
      throw FormatError("checkpoint payload is " + std::to_string(bytes.size() - offset) +
                        " bytes, metadata declares " + std::to_string(payload_bytes));
    for (const auto& entry : meta.at("tensors")) {
      auto name = entry.at("name").get<std::string>();
      if (!names.insert(name).second) throw FormatError("duplicate tensor name '" + name + "'");
      auto shape = entry.at("shape").get<Shape>();
      std::vector<double> values(shape_size(shape));
      read_le_doubles(bytes, offset, values);
      offset += values.size() * 8;
      ckpt.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    if (offset != bytes.size()) throw FormatError("checkpoint tensor list does not cover the payload");
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint metadata: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("corrupt checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Network& net, const TrainingMetadata& training,
                     const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(make_checkpoint(net, training)));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace altsim
