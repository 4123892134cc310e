// SPDX-License-Identifier: Apache-2.0

#include "altsim/network.hpp"

#include <algorithm>
#include <random>

namespace altsim {

ModelTraits traits(ModelKind kind) {
  switch (kind) {
    case ModelKind::Alt: return {true, Peephole::Convolutional, OutputSemantics::DeltaY};
    case ModelKind::ConvLstmCpY: return {false, Peephole::Convolutional, OutputSemantics::Y};
    case ModelKind::ConvLstmNpY: return {false, Peephole::None, OutputSemantics::Y};
    case ModelKind::ConvLstmCpDeltaY: return {false, Peephole::Convolutional, OutputSemantics::DeltaY};
    case ModelKind::ConvLstmNpDeltaY: return {false, Peephole::None, OutputSemantics::DeltaY};
  }
  throw ContractError("unknown model kind");
}

std::string model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Alt: return "alt";
    case ModelKind::ConvLstmCpY: return "convlstm-cp-y";
    case ModelKind::ConvLstmNpY: return "convlstm-np-y";
    case ModelKind::ConvLstmCpDeltaY: return "convlstm-cp-dy";
    case ModelKind::ConvLstmNpDeltaY: return "convlstm-np-dy";
  }
  throw ContractError("unknown model kind");
}

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::Alt, ModelKind::ConvLstmCpY, ModelKind::ConvLstmNpY,
          ModelKind::ConvLstmCpDeltaY, ModelKind::ConvLstmNpDeltaY};
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto k : all_model_kinds())
    if (model_name(k) == name) return k;
  throw ContractError("unknown model '" + std::string(name) +
                      "' (expected alt, convlstm-cp-y, convlstm-np-y, convlstm-cp-dy, convlstm-np-dy)");
}

std::string to_string(PredictMode mode) {
  return mode == PredictMode::SingleStep ? "single-step" : "rollout";
}

PredictMode parse_predict_mode(std::string_view name) {
  if (name == "single-step") return PredictMode::SingleStep;
  if (name == "rollout" || name == "roll-out") return PredictMode::RollOut;
  throw ContractError("unknown mode '" + std::string(name) + "' (expected single-step or rollout)");
}

void NetSpec::validate() const {
  if (channel_schedule.empty()) throw ContractError("channel schedule is empty");
  for (auto w : channel_schedule)
    if (w == 0) throw ContractError("channel widths must be positive");
  if (input_channels != 9) throw ContractError("input_channels must be 9 (three stacked xyz blocks)");
  if (output_channels != 3) throw ContractError("output_channels must be 3 (xyz)");

  if (!allow_any_schedule) {
    // Widening then narrowing, plateaus allowed.
    std::size_t i = 1;
    while (i < channel_schedule.size() && channel_schedule[i] >= channel_schedule[i - 1]) ++i;
    while (i < channel_schedule.size() && channel_schedule[i] <= channel_schedule[i - 1]) ++i;
    if (i != channel_schedule.size())
      throw ContractError("channel schedule is not encoder-decoder shaped (set allow_any_schedule to override)");
  }

  std::vector<bool> targeted(channel_schedule.size(), false);
  for (const auto& [target, source] : skips) {
    if (target >= channel_schedule.size() || source >= target)
      throw ContractError("skip (" + std::to_string(target) + ", " + std::to_string(source) +
                          ") must satisfy source < target < " + std::to_string(channel_schedule.size()));
    if (channel_schedule[target] != channel_schedule[source])
      throw ContractError("skip (" + std::to_string(target) + ", " + std::to_string(source) +
                          ") joins layers of different widths");
    if (targeted[target])
      throw ContractError("layer " + std::to_string(target) + " has more than one incoming skip");
    targeted[target] = true;
  }
}

Tensor assemble_input(const Tensor& x_t, const Tensor& x_prev, const Tensor& x_0, const Tensor& y_0) {
  const Shape& s = x_t.shape();
  for (const Tensor* t : {&x_prev, &x_0, &y_0})
    if (t->shape() != s)
      throw DimensionError("assemble_input: " + shape_string(s) + " vs " + shape_string(t->shape()));
  if (s.size() != 2 || s[1] != 3) throw DimensionError("assemble_input expects |V|x3 positions");
  const Tensor parts[] = {x_t, sub(x_t, x_prev), sub(y_0, x_0)};
  return hcat(parts);
}

// ---- Network ---------------------------------------------------------------

Network::Network(NetSpec spec, ModelKind kind, std::uint64_t seed)
    : spec_(std::move(spec)), kind_(kind) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  const bool peep = traits(kind_).peephole == Peephole::Convolutional;
  std::size_t in = spec_.input_channels;
  for (auto width : spec_.channel_schedule) {
    layers_.push_back(init_cell_params(in, width, rng, peep));
    in = width;
  }
  layers_.push_back(init_cell_params(in, spec_.output_channels, rng, peep));
}

Network::Network(NetSpec spec, ModelKind kind, std::vector<CellParams> layers)
    : spec_(std::move(spec)), kind_(kind), layers_(std::move(layers)) {
  spec_.validate();
  if (layers_.size() != spec_.hidden_layers() + 1)
    throw ContractError("network expects " + std::to_string(spec_.hidden_layers() + 1) +
                        " layers, got " + std::to_string(layers_.size()));
  const bool peep = traits(kind_).peephole == Peephole::Convolutional;
  std::size_t in = spec_.input_channels;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto width = l < spec_.hidden_layers() ? spec_.channel_schedule[l] : spec_.output_channels;
    const auto& p = layers_[l];
    if (p.input_channels() != in || p.hidden_channels() != width || p.has_peepholes() != peep)
      throw ContractError("layer " + std::to_string(l) + " parameters do not match the network spec");
    for (const auto& [name, t] : p.named_tensors()) {
      const bool is_bias = name[0] == 'b';
      const bool is_input = name.rfind("W_x", 0) == 0;
      const Shape want = is_bias ? Shape{width} : Shape{is_input ? in : width, width};
      if (t.shape() != want)
        throw ContractError("layer " + std::to_string(l) + " tensor " + name + " has shape " +
                            shape_string(t.shape()) + ", expected " + shape_string(want));
    }
    in = width;
  }
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_)
    for (auto& t : layer.tensors()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Network::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    for (auto& [name, t] : layers_[l].named_tensors())
      out.emplace_back("layer" + std::to_string(l) + "." + name, t);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += param_count(layer);
  return n;
}

Network Network::clone() const {
  std::vector<CellParams> copies;
  for (const auto& layer : layers_) copies.push_back(layer.clone());
  return Network(spec_, kind_, std::move(copies));
}

void Network::zero_weights() {
  for (auto& t : parameters()) {
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
}

void Network::zero_output_weights() {
  for (auto& [name, t] : layers_.back().named_tensors()) {
    if (name.empty() || name[0] != 'W' || t.size() == 0) continue;
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
}

void Network::set_requires_grad(bool on) {
  for (auto& t : parameters()) t.set_requires_grad(on);
}

NetworkState Network::init_states(const Graph& g, const Tensor& y_0) const {
  const auto n = g.num_nodes();
  if (y_0.rank() != 2 || y_0.rows() != n || y_0.cols() != spec_.output_channels)
    throw DimensionError("initial positions " + shape_string(y_0.shape()) + " do not match [" +
                         std::to_string(n) + "x3]");
  const bool alt = traits(kind_).alternating;
  NetworkState state;
  for (auto width : spec_.channel_schedule) state.layers.push_back(zero_cell_state(n, width, alt));
  auto out = zero_cell_state(n, spec_.output_channels, alt);
  if (alt) out.Y = y_0;
  state.layers.push_back(std::move(out));
  state.prediction = y_0;
  state.previous_output = Tensor::zeros({n, spec_.output_channels});
  return state;
}

StepOutput Network::step(const Graph& g, const NetworkState& state, const Tensor& x_t,
                         const Tensor& x_prev, const SequenceContext* context,
                         const Tensor* teacher_prev) const {
  if (!context || !context->X0.defined() || !context->Y0.defined())
    throw ContractError("network step needs the sequence context {X_0, Y_0}");
  if (state.layers.size() != layers_.size())
    throw ContractError("network state has the wrong number of layers");
  if (teacher_prev && teacher_prev->shape() != state.prediction.shape())
    throw DimensionError("teacher frame " + shape_string(teacher_prev->shape()) + " vs prediction " +
                         shape_string(state.prediction.shape()));

  const auto tr = traits(kind_);
  const Tensor features = assemble_input(x_t, x_prev, context->X0, context->Y0);
  const Tensor driver_motion = sub(x_t, x_prev);
  const std::size_t hidden = spec_.hidden_layers();

  StepOutput result;
  result.state.layers.resize(layers_.size());
  Tensor layer_input = features;

  auto run_layer = [&](std::size_t l, const CellState& s, const Tensor* skip) {
    try {
      if (tr.alternating) return cell_step(g, layers_[l], s, layer_input, skip);
      return vanilla_cell_step(g, layers_[l], s, layer_input, tr.peephole);
    } catch (const NumericFault& e) {
      throw NumericFault("layer " + std::to_string(l) + " " + e.where(),
                         "layer " + std::to_string(l) + ": " + e.what());
    }
  };

  for (std::size_t l = 0; l < hidden; ++l) {
    const Tensor* skip = nullptr;
    if (tr.alternating)
      for (const auto& [target, source] : spec_.skips)
        if (target == l) skip = &result.state.layers[source].C;
    result.state.layers[l] = run_layer(l, state.layers[l], skip);
    layer_input = result.state.layers[l].C;
  }

  CellState out_prev = state.layers[hidden];
  if (tr.alternating) {
    if (teacher_prev) out_prev.Y = *teacher_prev;
    result.state.layers[hidden] = run_layer(hidden, out_prev, &driver_motion);
    result.prediction = result.state.layers[hidden].Y;
  } else {
    result.state.layers[hidden] = run_layer(hidden, out_prev, nullptr);
    const Tensor& c_out = result.state.layers[hidden].C;
    const Tensor& previous = teacher_prev ? *teacher_prev : state.prediction;
    if (tr.output == OutputSemantics::DeltaY) {
      result.prediction = add(add(previous, c_out), driver_motion);
    } else {
      // Y-hat_t = rigid-follow path + C_t, written recursively from Y-hat_{t-1}.
      result.prediction = add(add(sub(previous, state.previous_output), driver_motion), c_out);
    }
  }
  detail::require_finite(result.prediction, "prediction");
  result.state.prediction = result.prediction;
  result.state.previous_output = result.state.layers[hidden].C;
  return result;
}

std::vector<Tensor> Network::predict_sequence(const Graph& g, std::span<const Tensor> drivers,
                                              const Tensor& y_0, PredictMode mode,
                                              std::span<const Tensor> teacher) const {
  if (drivers.empty()) throw ContractError("predict_sequence needs at least the X_0 driver frame");
  const std::size_t steps = drivers.size() - 1;
  if (mode == PredictMode::SingleStep && teacher.size() < steps)
    throw ContractError("single-step prediction of " + std::to_string(steps) + " frames needs " +
                        std::to_string(steps) + " ground-truth frames, got " +
                        std::to_string(teacher.size()));

  const SequenceContext context{drivers[0], y_0};
  NetworkState state = init_states(g, y_0);
  std::vector<Tensor> predictions;
  predictions.reserve(steps);
  for (std::size_t t = 1; t <= steps; ++t) {
    const Tensor* teacher_prev = mode == PredictMode::SingleStep ? &teacher[t - 1] : nullptr;
    auto out = step(g, state, drivers[t], drivers[t - 1], &context, teacher_prev);
    predictions.push_back(out.prediction);
    state = std::move(out.state);
  }
  return predictions;
}

}  // namespace altsim
