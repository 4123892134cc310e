// SPDX-License-Identifier: Apache-2.0
//
// The alternating ConvLSTM cell on graphs.
//
// The cell carries three states per node: C (velocity-like cell state),
// H (hidden state) and Y (accumulated cell state, position-like). One step:
//
//   i = sigmoid(Conv(X, W_xi) + Conv(H', W_hi) + Conv(Y', W_ci) + b_i)
//   f = sigmoid(Conv(X, W_xf) + Conv(H', W_hf) + Conv(Y', W_cf) + b_f)
//   F = tanh(Conv(X, W_xc) + Conv(H', W_hc) + b_c)
//   C = f o C' + i o F
//   Y = Y' + C
//   o = sigmoid(Conv(X, W_xo) + Conv(H', W_ho) + Conv(Y, W_co) + b_o)
//   H = o o tanh(C)
//
// where primes denote the previous step and Conv is `graph_conv`. Note that
// the output gate reads the updated Y while i and f read the previous one.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "altsim/graph.hpp"
#include "altsim/tensor.hpp"

namespace altsim {

struct CellParams {
  Tensor W_xi, W_xf, W_xc, W_xo;  // [K_x x K_h]
  Tensor W_hi, W_hf, W_hc, W_ho;  // [K_h x K_h]
  Tensor W_ci, W_cf, W_co;        // [K_h x K_h], undefined when the cell has no peepholes
  Tensor b_i, b_f, b_c, b_o;      // [K_h]

  std::size_t input_channels() const { return W_xi.rows(); }
  std::size_t hidden_channels() const { return W_xi.cols(); }
  bool has_peepholes() const { return W_ci.defined(); }

  /// Defined tensors in canonical order, paired with their short names.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::vector<Tensor> tensors() const;
  CellParams clone() const;
};

struct CellState {
  Tensor C;
  Tensor H;
  Tensor Y;  // undefined for cells without an accumulation state
};

/// Gate values of the most recent step, for inspection.
struct CellTrace {
  Tensor input_gate;
  Tensor forget_gate;
  Tensor force;
  Tensor output_gate;
};

/// Uniform Glorot weights and zero biases. Draws from `rng` in a
/// fixed order so equal seeds give identical parameters.
CellParams init_cell_params(std::size_t input_channels, std::size_t hidden_channels,
                            std::mt19937_64& rng, bool peepholes = true, bool requires_grad = true);

CellState zero_cell_state(std::size_t num_nodes, std::size_t hidden_channels, bool accumulation = true);

std::pair<CellParams, CellState> cell_init(const Graph& g, std::size_t input_channels,
                                           std::size_t hidden_channels, std::uint64_t seed);

/// One alternating update. `accumulation_skip`, when given, is added to Y
/// after C (before the output gate reads it); the network uses it for skip
/// connections between layers and for the driver-motion skip at the output.
CellState cell_step(const Graph& g, const CellParams& p, const CellState& s, const Tensor& x,
                    const Tensor* accumulation_skip = nullptr, CellTrace* trace = nullptr);

/// The tanh force term, exactly as `cell_step` computes it.
Tensor force_tensor(const Graph& g, const CellParams& p, const CellState& s, const Tensor& x);

std::size_t param_count(const CellParams& p);

/// 4 K_x K_h + 7 K_h^2 + 4 K_h
constexpr std::size_t alt_cell_param_count(std::size_t input_channels, std::size_t hidden_channels) {
  return 4 * input_channels * hidden_channels + 7 * hidden_channels * hidden_channels +
         4 * hidden_channels;
}

namespace detail {
void check_cell_shapes(const Graph& g, const CellParams& p, const CellState& s, const Tensor& x,
                       bool needs_accumulation);
Tensor gate_preactivation(const Tensor& px, const Tensor& ph, const Tensor* peep,
                          const Tensor& w_x, const Tensor& w_h, const Tensor* w_c, const Tensor& b);
/// Throws NumericFault naming `what` when `t` holds a NaN or Inf.
const Tensor& require_finite(const Tensor& t, const char* what);
}  // namespace detail

}  // namespace altsim
