// SPDX-License-Identifier: Apache-2.0
//
// Dense, tape-free reference implementations used as test oracles. Nothing
// here calls into the library's tensor ops.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include "altsim/cell.hpp"
#include "altsim/graph.hpp"
#include "altsim/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t r = 0, c = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0) : r(rows), c(cols), v(rows * cols, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * c + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * c + j]; }
};

inline Mat of(const altsim::Tensor& t) {
  Mat m = t.rank() == 1 ? Mat(1, t.size()) : Mat(t.rows(), t.cols());
  const auto d = t.data();
  m.v.assign(d.begin(), d.end());
  return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
  Mat out(a.r, b.c);
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < b.c; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.c; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

template <class F>
Mat map(const Mat& a, F f) {
  Mat out = a;
  for (auto& x : out.v) x = f(x);
  return out;
}

template <class F>
Mat zip(const Mat& a, const Mat& b, F f) {
  Mat out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = f(a.v[i], b.v[i]);
  return out;
}

inline Mat plus(const Mat& a, const Mat& b) { return zip(a, b, [](double x, double y) { return x + y; }); }
inline Mat times(const Mat& a, const Mat& b) { return zip(a, b, [](double x, double y) { return x * y; }); }
inline Mat sigm(const Mat& a) { return map(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }); }
inline Mat th(const Mat& a) { return map(a, [](double x) { return std::tanh(x); }); }

inline Mat add_row(const Mat& a, const Mat& bias) {
  Mat out = a;
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) += bias.v[j];
  return out;
}

/// D^-1/2 (A + I) D^-1/2 built densely from the edge list.
inline Mat propagation(std::size_t n, const std::vector<altsim::Edge>& edges) {
  Mat a(n, n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  for (const auto& e : edges) a(e[0], e[1]) = a(e[1], e[0]) = 1.0;
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += a(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  return a;
}

inline std::vector<altsim::Edge> random_edges(std::size_t n, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(density);
  std::vector<altsim::Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (keep(rng)) edges.push_back({i, j});
  std::shuffle(edges.begin(), edges.end(), rng);
  return edges;
}

inline altsim::Tensor random_tensor(altsim::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(altsim::shape_size(shape));
  for (auto& x : v) x = u(rng);
  return altsim::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

struct DenseState {
  Mat C, H, Y;
};

/// Alternating cell with Conv(X, W) = P X W.
inline DenseState alt_step(const Mat& P, const altsim::CellParams& p, const DenseState& s, const Mat& x) {
  auto conv = [&](const Mat& in, const altsim::Tensor& w) { return mul(mul(P, in), of(w)); };
  const Mat i = sigm(add_row(plus(plus(conv(x, p.W_xi), conv(s.H, p.W_hi)), conv(s.Y, p.W_ci)), of(p.b_i)));
  const Mat f = sigm(add_row(plus(plus(conv(x, p.W_xf), conv(s.H, p.W_hf)), conv(s.Y, p.W_cf)), of(p.b_f)));
  const Mat F = th(add_row(plus(conv(x, p.W_xc), conv(s.H, p.W_hc)), of(p.b_c)));
  const Mat C = plus(times(f, s.C), times(i, F));
  const Mat Y = plus(s.Y, C);
  const Mat o = sigm(add_row(plus(plus(conv(x, p.W_xo), conv(s.H, p.W_ho)), conv(Y, p.W_co)), of(p.b_o)));
  return {C, times(o, th(C)), Y};
}

/// Vanilla ConvLSTM; peepholes read C_{t-1} for i and f and C_t for o.
inline DenseState vanilla_step(const Mat& P, const altsim::CellParams& p, const DenseState& s, const Mat& x,
                               bool peepholes) {
  auto conv = [&](const Mat& in, const altsim::Tensor& w) { return mul(mul(P, in), of(w)); };
  auto gate = [&](const altsim::Tensor& wx, const altsim::Tensor& wh, const altsim::Tensor* wc,
                  const Mat& peep, const altsim::Tensor& b) {
    Mat pre = plus(conv(x, wx), conv(s.H, wh));
    if (peepholes) pre = plus(pre, conv(peep, *wc));
    return sigm(add_row(pre, of(b)));
  };
  const Mat i = gate(p.W_xi, p.W_hi, &p.W_ci, s.C, p.b_i);
  const Mat f = gate(p.W_xf, p.W_hf, &p.W_cf, s.C, p.b_f);
  const Mat F = th(add_row(plus(conv(x, p.W_xc), conv(s.H, p.W_hc)), of(p.b_c)));
  const Mat C = plus(times(f, s.C), times(i, F));
  const Mat o = gate(p.W_xo, p.W_ho, &p.W_co, C, p.b_o);
  return {C, times(o, th(C)), {}};
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

inline double max_rel_diff(const Mat& a, const Mat& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double scale = std::max(std::abs(a.v[i]), std::abs(b.v[i]));
    if (scale > 0.0) m = std::max(m, std::abs(a.v[i] - b.v[i]) / scale);
  }
  return m;
}

}  // namespace oracle
