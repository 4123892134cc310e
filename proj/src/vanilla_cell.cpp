// SPDX-License-Identifier: Apache-2.0

#include "altsim/vanilla_cell.hpp"

namespace altsim {

CellState vanilla_cell_step(const Graph& g, const CellParams& p, const CellState& s,
                            const Tensor& x, Peephole mode, CellTrace* trace) {
  detail::check_cell_shapes(g, p, s, x, false);
  const bool peep = mode == Peephole::Convolutional;
  if (peep && !p.has_peepholes()) throw ContractError("CP cell is missing peephole weights");
  using detail::gate_preactivation;
  using detail::require_finite;

  const Tensor px = propagate(g, x);
  const Tensor ph = propagate(g, s.H);
  Tensor pc_prev;
  if (peep) pc_prev = propagate(g, s.C);
  const Tensor* peep_prev = peep ? &pc_prev : nullptr;

  const Tensor i = sigmoid(gate_preactivation(px, ph, peep_prev, p.W_xi, p.W_hi, &p.W_ci, p.b_i));
  require_finite(i, "input_gate");
  const Tensor f = sigmoid(gate_preactivation(px, ph, peep_prev, p.W_xf, p.W_hf, &p.W_cf, p.b_f));
  require_finite(f, "forget_gate");
  const Tensor force = tanh(gate_preactivation(px, ph, nullptr, p.W_xc, p.W_hc, nullptr, p.b_c));
  require_finite(force, "force");

  CellState next;
  next.C = require_finite(add(hadamard(f, s.C), hadamard(i, force)), "cell_state");

  Tensor pc;
  if (peep) pc = propagate(g, next.C);
  const Tensor o =
      sigmoid(gate_preactivation(px, ph, peep ? &pc : nullptr, p.W_xo, p.W_ho, &p.W_co, p.b_o));
  require_finite(o, "output_gate");
  next.H = hadamard(o, tanh(next.C));

  if (trace) *trace = {i, f, force, o};
  return next;
}

}  // namespace altsim
