// SPDX-License-Identifier: Apache-2.0
//
// Vanilla ConvLSTM ablation grid: {CP, NP} peepholes x {Y, DeltaY} outputs.
// Every variant is a `Network` whose ModelKind encodes the pair, so all of
// them go through the same training and evaluation code.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "altsim/network.hpp"

namespace altsim {

struct BaselineSpec {
  Peephole peephole = Peephole::Convolutional;
  OutputSemantics output = OutputSemantics::Y;
  std::vector<std::size_t> channel_schedule{8, 16, 32, 16, 8};

  ModelKind kind() const;
  /// NetSpec with the schedule and no hidden skips (vanilla cells have no
  /// accumulation for a skip to feed).
  NetSpec net_spec() const;
};

/// nullopt for the alternating model.
std::optional<BaselineSpec> baseline_spec(ModelKind kind);

Network make_baseline(const BaselineSpec& spec, std::uint64_t seed);

/// `net.kind()` must match `spec.kind()`.
std::vector<Tensor> baseline_predict(const BaselineSpec& spec, const Network& net, const Graph& g,
                                     std::span<const Tensor> drivers, const Tensor& y_0,
                                     PredictMode mode, std::span<const Tensor> teacher = {});

}  // namespace altsim
