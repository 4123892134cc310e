// SPDX-License-Identifier: Apache-2.0

#include "altsim/cell.hpp"

#include <cmath>

namespace altsim {

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, bool requires_grad) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v), requires_grad);
}

Tensor force_from(const Tensor& px, const Tensor& ph, const CellParams& p) {
  return tanh(detail::gate_preactivation(px, ph, nullptr, p.W_xc, p.W_hc, nullptr, p.b_c));
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> CellParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"W_xi", W_xi}, {"W_xf", W_xf}, {"W_xc", W_xc}, {"W_xo", W_xo},
      {"W_hi", W_hi}, {"W_hf", W_hf}, {"W_hc", W_hc}, {"W_ho", W_ho},
  };
  if (has_peepholes()) {
    out.emplace_back("W_ci", W_ci);
    out.emplace_back("W_cf", W_cf);
    out.emplace_back("W_co", W_co);
  }
  out.emplace_back("b_i", b_i);
  out.emplace_back("b_f", b_f);
  out.emplace_back("b_c", b_c);
  out.emplace_back("b_o", b_o);
  return out;
}

std::vector<Tensor> CellParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

CellParams CellParams::clone() const {
  CellParams c;
  auto cp = [](const Tensor& t) { return t.defined() ? t.clone() : Tensor(); };
  c.W_xi = cp(W_xi), c.W_xf = cp(W_xf), c.W_xc = cp(W_xc), c.W_xo = cp(W_xo);
  c.W_hi = cp(W_hi), c.W_hf = cp(W_hf), c.W_hc = cp(W_hc), c.W_ho = cp(W_ho);
  c.W_ci = cp(W_ci), c.W_cf = cp(W_cf), c.W_co = cp(W_co);
  c.b_i = cp(b_i), c.b_f = cp(b_f), c.b_c = cp(b_c), c.b_o = cp(b_o);
  return c;
}

CellParams init_cell_params(std::size_t input_channels, std::size_t hidden_channels,
                            std::mt19937_64& rng, bool peepholes, bool requires_grad) {
  if (input_channels == 0 || hidden_channels == 0)
    throw ContractError("cell channel counts must be >= 1");
  const auto kx = input_channels, kh = hidden_channels;
  CellParams p;
  p.W_xi = glorot(kx, kh, rng, requires_grad);
  p.W_xf = glorot(kx, kh, rng, requires_grad);
  p.W_xc = glorot(kx, kh, rng, requires_grad);
  p.W_xo = glorot(kx, kh, rng, requires_grad);
  p.W_hi = glorot(kh, kh, rng, requires_grad);
  p.W_hf = glorot(kh, kh, rng, requires_grad);
  p.W_hc = glorot(kh, kh, rng, requires_grad);
  p.W_ho = glorot(kh, kh, rng, requires_grad);
  if (peepholes) {
    p.W_ci = glorot(kh, kh, rng, requires_grad);
    p.W_cf = glorot(kh, kh, rng, requires_grad);
    p.W_co = glorot(kh, kh, rng, requires_grad);
  }
  p.b_i = Tensor::zeros({kh}, requires_grad);
  p.b_f = Tensor::zeros({kh}, requires_grad);
  p.b_c = Tensor::zeros({kh}, requires_grad);
  p.b_o = Tensor::zeros({kh}, requires_grad);
  return p;
}

CellState zero_cell_state(std::size_t num_nodes, std::size_t hidden_channels, bool accumulation) {
  CellState s;
  s.C = Tensor::zeros({num_nodes, hidden_channels});
  s.H = Tensor::zeros({num_nodes, hidden_channels});
  if (accumulation) s.Y = Tensor::zeros({num_nodes, hidden_channels});
  return s;
}

std::pair<CellParams, CellState> cell_init(const Graph& g, std::size_t input_channels,
                                           std::size_t hidden_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto params = init_cell_params(input_channels, hidden_channels, rng);
  return {std::move(params), zero_cell_state(g.num_nodes(), hidden_channels)};
}

namespace detail {

void check_cell_shapes(const Graph& g, const CellParams& p, const CellState& s, const Tensor& x,
                       bool needs_accumulation) {
  const auto n = g.num_nodes();
  const Shape state_shape{n, p.hidden_channels()};
  if (x.rank() != 2 || x.rows() != n || x.cols() != p.input_channels())
    throw DimensionError("cell input " + shape_string(x.shape()) + " does not match [" +
                         std::to_string(n) + "x" + std::to_string(p.input_channels()) + "]");
  auto check = [&](const Tensor& t, const char* name) {
    if (!t.defined() || t.shape() != state_shape)
      throw DimensionError(std::string("cell state ") + name + " " +
                           (t.defined() ? shape_string(t.shape()) : "undefined") +
                           " does not match " + shape_string(state_shape));
  };
  check(s.C, "C");
  check(s.H, "H");
  if (needs_accumulation) check(s.Y, "Y");
}

Tensor gate_preactivation(const Tensor& px, const Tensor& ph, const Tensor* peep,
                          const Tensor& w_x, const Tensor& w_h, const Tensor* w_c, const Tensor& b) {
  Tensor acc = add(matmul(px, w_x), matmul(ph, w_h));
  if (peep && w_c && w_c->defined()) acc = add(acc, matmul(*peep, *w_c));
  return add_bias(acc, b);
}

const Tensor& require_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) throw NumericFault(what, std::string("non-finite value in ") + what);
  return t;
}

}  // namespace detail

CellState cell_step(const Graph& g, const CellParams& p, const CellState& s, const Tensor& x,
                    const Tensor* accumulation_skip, CellTrace* trace) {
  detail::check_cell_shapes(g, p, s, x, true);
  if (!p.has_peepholes()) throw ContractError("alternating cell requires peephole weights");
  if (accumulation_skip && accumulation_skip->shape() != s.Y.shape())
    throw DimensionError("accumulation skip " + shape_string(accumulation_skip->shape()) +
                         " does not match " + shape_string(s.Y.shape()));
  using detail::gate_preactivation;
  using detail::require_finite;

  const Tensor px = propagate(g, x);
  const Tensor ph = propagate(g, s.H);
  const Tensor py_prev = propagate(g, s.Y);

  const Tensor i = sigmoid(gate_preactivation(px, ph, &py_prev, p.W_xi, p.W_hi, &p.W_ci, p.b_i));
  require_finite(i, "input_gate");
  const Tensor f = sigmoid(gate_preactivation(px, ph, &py_prev, p.W_xf, p.W_hf, &p.W_cf, p.b_f));
  require_finite(f, "forget_gate");
  const Tensor force = force_from(px, ph, p);
  require_finite(force, "force");

  CellState next;
  next.C = require_finite(add(hadamard(f, s.C), hadamard(i, force)), "cell_state");
  next.Y = add(s.Y, next.C);
  if (accumulation_skip) next.Y = add(next.Y, *accumulation_skip);
  require_finite(next.Y, "accumulation_state");

  const Tensor py = propagate(g, next.Y);
  const Tensor o = sigmoid(gate_preactivation(px, ph, &py, p.W_xo, p.W_ho, &p.W_co, p.b_o));
  require_finite(o, "output_gate");
  next.H = hadamard(o, tanh(next.C));

  if (trace) *trace = {i, f, force, o};
  return next;
}

Tensor force_tensor(const Graph& g, const CellParams& p, const CellState& s, const Tensor& x) {
  detail::check_cell_shapes(g, p, s, x, false);
  return detail::require_finite(force_from(propagate(g, x), propagate(g, s.H), p), "force");
}

std::size_t param_count(const CellParams& p) {
  std::size_t n = 0;
  for (const auto& t : p.tensors()) n += t.size();
  return n;
}

}  // namespace altsim
