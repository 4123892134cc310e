// SPDX-License-Identifier: Apache-2.0
//
// Encoder-decoder stack of recurrent graph cells. Hidden layer l consumes the
// cell state C of layer l-1 (the first hidden layer consumes the assembled
// 9-channel driver features); a final 3-channel output layer turns the last
// hidden C into per-vertex displacements. The output layer's accumulation
// also receives the driver displacement X_t - X_{t-1}, so a network whose
// cells output nothing follows the driver rigidly.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "altsim/cell.hpp"
#include "altsim/graph.hpp"
#include "altsim/vanilla_cell.hpp"

namespace altsim {

/// What the output layer's C means for baselines: a per-step displacement
/// (DeltaY) or a position offset from the rigid-follow path (Y).
enum class OutputSemantics { DeltaY, Y };

enum class ModelKind { Alt, ConvLstmCpY, ConvLstmNpY, ConvLstmCpDeltaY, ConvLstmNpDeltaY };

struct ModelTraits {
  bool alternating;
  Peephole peephole;
  OutputSemantics output;
};

ModelTraits traits(ModelKind kind);
/// "alt", "convlstm-cp-y", "convlstm-np-y", "convlstm-cp-dy", "convlstm-np-dy".
std::string model_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
std::vector<ModelKind> all_model_kinds();

struct NetSpec {
  std::vector<std::size_t> channel_schedule{8, 16, 32, 16, 8};
  std::size_t input_channels = 9;
  std::size_t output_channels = 3;
  /// (target, source) hidden-layer pairs, 0-based: target's accumulation also
  /// adds source's C. Only alternating cells carry accumulations.
  std::vector<std::pair<std::size_t, std::size_t>> skips{{4, 0}};
  /// Accept schedules that are not widening-then-narrowing.
  bool allow_any_schedule = false;

  /// Throws ContractError describing the first violated rule.
  void validate() const;
  std::size_t hidden_layers() const { return channel_schedule.size(); }

  static NetSpec desk_scale() { return {}; }
  static NetSpec full_scale() { return {{32, 64, 128, 64, 32}, 9, 3, {{4, 0}}, false}; }
};

/// [X_t, X_t - X_{t-1}, Y_0 - X_0]
Tensor assemble_input(const Tensor& x_t, const Tensor& x_prev, const Tensor& x_0, const Tensor& y_0);

struct SequenceContext {
  Tensor X0;
  Tensor Y0;
};

struct NetworkState {
  std::vector<CellState> layers;  // hidden layers, then the output layer
  Tensor prediction;              // most recent Y-hat
  Tensor previous_output;         // output layer C of the previous step
};

struct StepOutput {
  NetworkState state;
  Tensor prediction;
};

enum class PredictMode { SingleStep, RollOut };

std::string to_string(PredictMode mode);
PredictMode parse_predict_mode(std::string_view name);

class Network {
 public:
  Network(NetSpec spec, ModelKind kind, std::uint64_t seed);
  /// Adopts existing parameters; shapes are checked against `spec`.
  Network(NetSpec spec, ModelKind kind, std::vector<CellParams> layers);

  const NetSpec& spec() const noexcept { return spec_; }
  ModelKind kind() const noexcept { return kind_; }
  const std::vector<CellParams>& layers() const noexcept { return layers_; }
  std::vector<CellParams>& layers() noexcept { return layers_; }

  std::vector<Tensor> parameters() const;
  /// "layer<l>.<tensor>", the output layer being the last index.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t parameter_count() const;

  /// Deep copy sharing no buffers with this network.
  Network clone() const;
  void zero_weights();
  /// Zeroes every weight matrix of the output layer; biases keep their
  /// values. A fresh model then starts at rigid follow, and training moves
  /// it away from that point instead of from random output noise.
  void zero_output_weights();
  void set_requires_grad(bool on);

  NetworkState init_states(const Graph& g, const Tensor& y_0) const;

  /// One step. `teacher_prev`, when given, stands in for the previous
  /// prediction (ground-truth Y_{t-1}); hidden layers are never overwritten.
  StepOutput step(const Graph& g, const NetworkState& state, const Tensor& x_t,
                  const Tensor& x_prev, const SequenceContext* context,
                  const Tensor* teacher_prev = nullptr) const;

  /// Predictions for frames 1..T given drivers X_0..X_T. Single-step mode
  /// reads teacher[t-1] before step t and needs at least T teacher frames;
  /// roll-out never reads teacher frames.
  std::vector<Tensor> predict_sequence(const Graph& g, std::span<const Tensor> drivers,
                                       const Tensor& y_0, PredictMode mode,
                                       std::span<const Tensor> teacher = {}) const;

 private:
  NetSpec spec_;
  ModelKind kind_;
  std::vector<CellParams> layers_;
};

}  // namespace altsim
