// SPDX-License-Identifier: Apache-2.0
//
// Vanilla graph ConvLSTM used by the baselines. No accumulation state; with
// convolutional peepholes the input and forget gates read C_{t-1} and the
// output gate reads C_t. Without peepholes those terms are absent.

#pragma once

#include "altsim/cell.hpp"

namespace altsim {

enum class Peephole { Convolutional, None };

/// `p.has_peepholes()` must agree with `mode`; NP ignores any peephole
/// tensors that happen to be present.
CellState vanilla_cell_step(const Graph& g, const CellParams& p, const CellState& s,
                            const Tensor& x, Peephole mode, CellTrace* trace = nullptr);

/// 4 K_x K_h + 4 K_h^2 + 4 K_h, plus 3 K_h^2 with peepholes.
constexpr std::size_t vanilla_cell_param_count(std::size_t input_channels,
                                               std::size_t hidden_channels, Peephole mode) {
  const std::size_t base = 4 * input_channels * hidden_channels +
                           4 * hidden_channels * hidden_channels + 4 * hidden_channels;
  return mode == Peephole::Convolutional ? base + 3 * hidden_channels * hidden_channels : base;
}

}  // namespace altsim
