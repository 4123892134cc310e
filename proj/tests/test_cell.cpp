// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "altsim/cell.hpp"
#include "altsim/vanilla_cell.hpp"
#include "oracle.hpp"

using namespace altsim;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

bool all_zero(const Tensor& t) {
  for (double v : t.data())
    if (v != 0.0) return false;
  return true;
}

CellParams zero_params(std::size_t kx, std::size_t kh) {
  std::mt19937_64 rng(0);
  auto p = init_cell_params(kx, kh, rng, true, false);
  for (auto& t : p.tensors())
    for (auto& v : t.mutable_data()) v = 0.0;
  return p;
}

CellState random_state(std::size_t n, std::size_t kh, std::mt19937_64& rng) {
  return {oracle::random_tensor({n, kh}, rng), oracle::random_tensor({n, kh}, rng, -0.9, 0.9),
          oracle::random_tensor({n, kh}, rng)};
}

}  // namespace

TEST_CASE("cell_init gives zero states and seeded weights") {
  const auto g = make_grid_mesh(3, 3, 1.0).graph;
  const auto [p1, s1] = cell_init(g, 3, 4, 42);
  const auto [p2, s2] = cell_init(g, 3, 4, 42);
  CHECK(all_zero(s1.C));
  CHECK(all_zero(s1.H));
  CHECK(all_zero(s1.Y));
  CHECK(s1.C.shape() == Shape{9, 4});
  const auto t1 = p1.tensors(), t2 = p2.tensors();
  REQUIRE(t1.size() == 15);
  for (std::size_t k = 0; k < t1.size(); ++k) CHECK(values(t1[k]) == values(t2[k]));
  CHECK(all_zero(p1.b_f));
  CHECK(all_zero(p1.b_i));
  CHECK(all_zero(p1.b_c));
  CHECK(all_zero(p1.b_o));

  const double bound_x = std::sqrt(6.0 / (3 + 4));
  for (double v : p1.W_xi.data()) CHECK(std::abs(v) <= bound_x);
  const double bound_h = std::sqrt(6.0 / (4 + 4));
  for (double v : p1.W_co.data()) CHECK(std::abs(v) <= bound_h);

  const auto [p3, s3] = cell_init(g, 3, 4, 43);
  CHECK(values(p3.W_xi) != values(p1.W_xi));
}

TEST_CASE("parameter counts") {
  const auto g = make_grid_mesh(2, 2, 1.0).graph;
  CHECK(param_count(cell_init(g, 3, 4, 1).first) == 176);
  CHECK(param_count(cell_init(g, 9, 8, 1).first) == 768);
  CHECK(alt_cell_param_count(3, 4) == 4 * 3 * 4 + 7 * 16 + 4 * 4);
  CHECK(vanilla_cell_param_count(3, 4, Peephole::Convolutional) -
            vanilla_cell_param_count(3, 4, Peephole::None) ==
        3 * 16);
}

TEST_CASE("parameter shapes do not depend on node count") {
  const auto small = make_grid_mesh(5, 2, 1.0).graph;
  const auto large = make_grid_mesh(50, 40, 1.0).graph;
  const auto a = cell_init(small, 9, 8, 3).first.named_tensors();
  const auto b = cell_init(large, 9, 8, 3).first.named_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].first == b[k].first);
    CHECK(a[k].second.shape() == b[k].second.shape());
  }
}

TEST_CASE("all-zero cell step") {
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  const auto p = zero_params(3, 4);
  const auto s = zero_cell_state(6, 4);
  const auto out = cell_step(g, p, s, Tensor::zeros({6, 3}));
  CHECK(all_zero(out.C));
  CHECK(all_zero(out.Y));
  CHECK(all_zero(out.H));
  CHECK(all_zero(force_tensor(g, p, s, Tensor::zeros({6, 3}))));
}

TEST_CASE("with zero cell state C equals i o F exactly") {
  std::mt19937_64 rng(6);
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  auto p = init_cell_params(3, 4, rng, true, false);
  CellState s{Tensor::zeros({6, 4}), oracle::random_tensor({6, 4}, rng, -0.9, 0.9),
              oracle::random_tensor({6, 4}, rng)};
  const auto x = oracle::random_tensor({6, 3}, rng);
  CellTrace trace;
  const auto out = cell_step(g, p, s, x, nullptr, &trace);
  CHECK(values(out.C) == values(hadamard(trace.input_gate, trace.force)));
}

TEST_CASE("force term is reused and C recomposes bit-exactly") {
  std::mt19937_64 rng(7);
  const auto g = make_grid_mesh(3, 3, 1.0).graph;
  const auto p = init_cell_params(5, 4, rng, true, false);
  const auto s = random_state(9, 4, rng);
  const auto x = oracle::random_tensor({9, 5}, rng);
  CellTrace trace;
  const auto out = cell_step(g, p, s, x, nullptr, &trace);
  const auto F = force_tensor(g, p, s, x);
  CHECK(values(F) == values(trace.force));
  for (double v : F.data()) CHECK((v > -1.0 && v < 1.0));
  const auto recomposed = add(hadamard(trace.forget_gate, s.C), hadamard(trace.input_gate, F));
  CHECK(values(out.C) == values(recomposed));
}

TEST_CASE("accumulation update is a pure add") {
  std::mt19937_64 rng(8);
  const auto g = make_grid_mesh(4, 3, 1.0).graph;
  const auto p = init_cell_params(3, 5, rng, true, false);
  auto s = random_state(12, 5, rng);
  for (int t = 0; t < 10; ++t) {
    const auto next = cell_step(g, p, s, oracle::random_tensor({12, 3}, rng));
    CHECK(values(next.Y) == values(add(s.Y, next.C)));
    const auto diff = sub(next.Y, s.Y);
    for (std::size_t i = 0; i < diff.size(); ++i)
      CHECK(std::abs(diff.data()[i] - next.C.data()[i]) <=
            std::numeric_limits<double>::epsilon() * std::abs(next.Y.data()[i]));
    s = next;
  }
}

TEST_CASE("cell_step matches the dense oracle over several steps") {
  std::mt19937_64 rng(9);
  const std::size_t n = 11;
  const auto edges = oracle::random_edges(n, 0.35, rng);
  const auto g = Graph::build(n, edges);
  const auto P = oracle::propagation(n, edges);
  const auto p = init_cell_params(4, 6, rng, true, false);
  auto s = random_state(n, 6, rng);
  oracle::DenseState ds{oracle::of(s.C), oracle::of(s.H), oracle::of(s.Y)};
  for (int t = 0; t < 5; ++t) {
    const auto x = oracle::random_tensor({n, 4}, rng);
    s = cell_step(g, p, s, x);
    ds = oracle::alt_step(P, p, ds, oracle::of(x));
    CHECK(oracle::max_abs_diff(oracle::of(s.C), ds.C) <= 1e-12);
    CHECK(oracle::max_abs_diff(oracle::of(s.H), ds.H) <= 1e-12);
    CHECK(oracle::max_abs_diff(oracle::of(s.Y), ds.Y) <= 1e-12);
  }
}

TEST_CASE("hidden state stays strictly inside (-1, 1)") {
  std::mt19937_64 rng(10);
  const auto g = make_grid_mesh(3, 3, 1.0).graph;
  const auto p = init_cell_params(3, 4, rng, true, false);
  auto s = zero_cell_state(9, 4);
  for (int t = 0; t < 30; ++t) {
    s = cell_step(g, p, s, oracle::random_tensor({9, 3}, rng, -5.0, 5.0));
    for (double v : s.H.data()) CHECK((v > -1.0 && v < 1.0));
  }
}

TEST_CASE("peephole order: i and f read the previous Y, o reads the updated Y") {
  std::mt19937_64 rng(11);
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  auto p = init_cell_params(3, 4, rng, true, false);
  // Scale up the peepholes so o responds strongly to Y.
  for (auto* w : {&p.W_ci, &p.W_cf, &p.W_co})
    for (auto& v : w->mutable_data()) v *= 4.0;
  for (auto& v : p.b_f.mutable_data()) v = 4.0;
  const auto x = oracle::random_tensor({6, 3}, rng);
  const auto H = oracle::random_tensor({6, 4}, rng, -0.5, 0.5);
  const auto Y_prev = Tensor::filled({6, 4}, 0.5);

  // Run A: C' = 0. Run B: C' large and negative so Y_t = Y' + C_t crosses zero.
  CellState a{Tensor::zeros({6, 4}), H, Y_prev};
  CellState b{Tensor::filled({6, 4}, -50.0), H, Y_prev};
  CellTrace ta, tb;
  const auto out_a = cell_step(g, p, a, x, nullptr, &ta);
  const auto out_b = cell_step(g, p, b, x, nullptr, &tb);

  for (std::size_t i = 0; i < out_a.Y.size(); ++i) {
    CHECK(out_a.Y.data()[i] > 0.0);
    CHECK(out_b.Y.data()[i] < 0.0);
  }
  CHECK(values(ta.input_gate) == values(tb.input_gate));
  CHECK(values(ta.forget_gate) == values(tb.forget_gate));
  CHECK(values(ta.force) == values(tb.force));
  CHECK(values(ta.output_gate) != values(tb.output_gate));

  // Wiring o to Y' instead would leave it unchanged between the runs.
  const auto P = oracle::propagation(6, g.edges());
  auto conv = [&](const Tensor& in, const Tensor& w) { return oracle::mul(oracle::mul(P, oracle::of(in)), oracle::of(w)); };
  const auto o_wrong = oracle::sigm(oracle::add_row(
      oracle::plus(oracle::plus(conv(x, p.W_xo), conv(H, p.W_ho)), conv(Y_prev, p.W_co)), oracle::of(p.b_o)));
  const auto o_right = oracle::sigm(oracle::add_row(
      oracle::plus(oracle::plus(conv(x, p.W_xo), conv(H, p.W_ho)), conv(out_b.Y, p.W_co)), oracle::of(p.b_o)));
  CHECK(oracle::max_abs_diff(oracle::of(tb.output_gate), o_right) <= 1e-12);
  CHECK(oracle::max_abs_diff(oracle::of(tb.output_gate), o_wrong) > 1e-3);
}

TEST_CASE("vanilla CP gates react to C_{t-1} where the alternating gates do not") {
  std::mt19937_64 rng(12);
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  const auto p = init_cell_params(3, 4, rng, true, false);
  const auto x = oracle::random_tensor({6, 3}, rng);
  const auto H = oracle::random_tensor({6, 4}, rng, -0.5, 0.5);
  CellTrace ta, tb;
  vanilla_cell_step(g, p, {Tensor::zeros({6, 4}), H, {}}, x, Peephole::Convolutional, &ta);
  vanilla_cell_step(g, p, {Tensor::filled({6, 4}, -3.0), H, {}}, x, Peephole::Convolutional, &tb);
  CHECK(values(ta.input_gate) != values(tb.input_gate));
  CHECK(values(ta.forget_gate) != values(tb.forget_gate));
}

TEST_CASE("accumulation identity over 50 steps") {
  std::mt19937_64 rng(13);
  const auto g = make_grid_mesh(4, 4, 1.0).graph;
  const auto p = init_cell_params(3, 6, rng, true, false);
  auto s = zero_cell_state(16, 6);
  s.Y = oracle::random_tensor({16, 6}, rng);
  const auto Y0 = s.Y.clone();
  std::vector<double> sum_c(16 * 6, 0.0);
  for (int t = 0; t < 50; ++t) {
    s = cell_step(g, p, s, oracle::random_tensor({16, 3}, rng));
    for (std::size_t i = 0; i < sum_c.size(); ++i) sum_c[i] += s.C.data()[i];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < sum_c.size(); ++i)
    worst = std::max(worst, std::abs(s.Y.data()[i] - Y0.data()[i] - sum_c[i]));
  CHECK(worst <= 1e-9);
}

TEST_CASE("cell gradients match finite differences on a 6-node graph") {
  std::mt19937_64 rng(14);
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  auto p = init_cell_params(3, 4, rng, true, true);
  std::vector<Tensor> xs;
  for (int t = 0; t < 3; ++t) xs.push_back(oracle::random_tensor({6, 3}, rng));
  const auto target = oracle::random_tensor({6, 4}, rng);
  auto loss = [&] {
    auto s = zero_cell_state(6, 4);
    Tensor total;
    for (const auto& x : xs) {
      s = cell_step(g, p, s, x);
      const auto frame = sum(row_norms(sub(s.Y, target)));
      total = total.defined() ? add(total, frame) : frame;
    }
    return total;
  };
  auto params = p.tensors();
  Tape::current().clear();
  backward(loss());
  Tape::current().clear();
  const auto fd = finite_diff_grad([&] { return loss().item(); }, params, 1e-5);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double a = params[k].grad()[i], n = fd[k].data()[i];
      worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}));
    }
    INFO(p.named_tensors()[k].first);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("every parameter receives gradient after a 2-step unroll") {
  std::mt19937_64 rng(15);
  const auto g = make_grid_mesh(3, 3, 1.0).graph;
  auto p = init_cell_params(3, 4, rng, true, true);
  auto s = random_state(9, 4, rng);
  for (int t = 0; t < 2; ++t) s = cell_step(g, p, s, oracle::random_tensor({9, 3}, rng));
  backward(add(sum(s.H), sum(s.Y)));
  Tape::current().clear();
  for (const auto& [name, t] : p.named_tensors()) {
    INFO(name);
    REQUIRE(t.has_grad());
    bool nonzero = false;
    for (double v : t.grad()) nonzero |= v != 0.0;
    CHECK(nonzero);
  }
}

TEST_CASE("cell_step is permutation equivariant") {
  std::mt19937_64 rng(16);
  const std::size_t n = 8;
  const auto edges = oracle::random_edges(n, 0.4, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Edge> relabeled;
  for (const auto& e : edges) relabeled.push_back({perm[e[0]], perm[e[1]]});
  auto permute = [&](const Tensor& t) {
    std::vector<double> v(t.size());
    const auto k = t.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) v[perm[i] * k + c] = t.data()[i * k + c];
    return Tensor::from(t.shape(), v);
  };
  const auto p = init_cell_params(3, 4, rng, true, false);
  const auto s = random_state(n, 4, rng);
  const auto x = oracle::random_tensor({n, 3}, rng);
  const auto out = cell_step(Graph::build(n, edges), p, s, x);
  const auto pout = cell_step(Graph::build(n, relabeled), p, {permute(s.C), permute(s.H), permute(s.Y)}, permute(x));
  CHECK(oracle::max_abs_diff(oracle::of(pout.C), oracle::of(permute(out.C))) <= 1e-14);
  CHECK(oracle::max_abs_diff(oracle::of(pout.H), oracle::of(permute(out.H))) <= 1e-14);
  CHECK(oracle::max_abs_diff(oracle::of(pout.Y), oracle::of(permute(out.Y))) <= 1e-14);
}

TEST_CASE("non-finite values raise NumericFault naming the gate") {
  std::mt19937_64 rng(17);
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  const auto x = oracle::random_tensor({6, 3}, rng);
  const auto s = zero_cell_state(6, 4);
  auto fault_at = [&](Tensor CellParams::*field) {
    auto p = init_cell_params(3, 4, rng, true, false);
    (p.*field).mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      cell_step(g, p, s, x);
    } catch (const NumericFault& e) {
      return e.where();
    }
    return std::string("none");
  };
  CHECK(fault_at(&CellParams::b_i) == "input_gate");
  CHECK(fault_at(&CellParams::b_f) == "forget_gate");
  CHECK(fault_at(&CellParams::b_c) == "force");
  CHECK(fault_at(&CellParams::b_o) == "output_gate");
}

TEST_CASE("shape mismatches raise DimensionError") {
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  const auto [p, s] = cell_init(g, 3, 4, 1);
  CHECK_THROWS_AS(cell_step(g, p, s, Tensor::zeros({5, 3})), DimensionError);
  CHECK_THROWS_AS(cell_step(g, p, s, Tensor::zeros({6, 2})), DimensionError);
  CHECK_THROWS_AS(cell_step(g, p, zero_cell_state(6, 5), Tensor::zeros({6, 3})), DimensionError);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(init_cell_params(0, 4, rng), ContractError);
}

TEST_CASE("vanilla cell examples") {
  std::mt19937_64 rng(18);
  const auto g = make_grid_mesh(3, 2, 1.0).graph;
  const auto zp = zero_params(3, 4);
  const auto z = vanilla_cell_step(g, zp, {Tensor::zeros({6, 4}), Tensor::zeros({6, 4}), {}}, Tensor::zeros({6, 3}),
                                   Peephole::Convolutional);
  CHECK(all_zero(z.C));
  CHECK(all_zero(z.H));

  auto p = init_cell_params(3, 4, rng, true, false);
  const CellState s{oracle::random_tensor({6, 4}, rng), oracle::random_tensor({6, 4}, rng, -0.9, 0.9), {}};
  const auto x = oracle::random_tensor({6, 3}, rng);
  const auto np1 = vanilla_cell_step(g, p, s, x, Peephole::None);
  for (auto* w : {&p.W_ci, &p.W_cf, &p.W_co})
    for (auto& v : w->mutable_data()) v += 10.0;
  const auto np2 = vanilla_cell_step(g, p, s, x, Peephole::None);
  CHECK(values(np1.C) == values(np2.C));
  CHECK(values(np1.H) == values(np2.H));

  for (auto* w : {&p.W_ci, &p.W_cf, &p.W_co})
    for (auto& v : w->mutable_data()) v = 0.0;
  const auto cp0 = vanilla_cell_step(g, p, s, x, Peephole::Convolutional);
  CHECK(oracle::max_abs_diff(oracle::of(cp0.C), oracle::of(np1.C)) == 0.0);
  CHECK(oracle::max_abs_diff(oracle::of(cp0.H), oracle::of(np1.H)) == 0.0);
}

TEST_CASE("vanilla cell matches the dense oracle") {
  std::mt19937_64 rng(19);
  const std::size_t n = 10;
  const auto edges = oracle::random_edges(n, 0.4, rng);
  const auto g = Graph::build(n, edges);
  const auto P = oracle::propagation(n, edges);
  for (bool peep : {true, false}) {
    const auto p = init_cell_params(4, 5, rng, peep, false);
    CellState s{oracle::random_tensor({n, 5}, rng), oracle::random_tensor({n, 5}, rng, -0.9, 0.9), {}};
    oracle::DenseState ds{oracle::of(s.C), oracle::of(s.H), {}};
    for (int t = 0; t < 4; ++t) {
      const auto x = oracle::random_tensor({n, 4}, rng);
      s = vanilla_cell_step(g, p, s, x, peep ? Peephole::Convolutional : Peephole::None);
      ds = oracle::vanilla_step(P, p, ds, oracle::of(x), peep);
      CHECK(oracle::max_abs_diff(oracle::of(s.C), ds.C) <= 1e-12);
      CHECK(oracle::max_abs_diff(oracle::of(s.H), ds.H) <= 1e-12);
    }
  }
}
