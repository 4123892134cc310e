// SPDX-License-Identifier: Apache-2.0

#include "altsim/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace altsim {

GradcheckFixture make_gradcheck_fixture(std::size_t frames, std::uint64_t seed) {
  if (frames == 0) throw ContractError("gradcheck fixture needs at least one frame");
  GradcheckFixture fx;
  fx.graph = make_grid_mesh(3, 2, 1.0).graph;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto random_frame = [&] {
    std::vector<double> v(fx.graph.num_nodes() * 3);
    for (auto& x : v) x = u(rng);
    return Tensor::from({fx.graph.num_nodes(), 3}, std::move(v));
  };
  for (std::size_t t = 0; t <= frames; ++t) fx.drivers.push_back(random_frame());
  for (std::size_t t = 0; t <= frames; ++t) fx.targets.push_back(random_frame());
  return fx;
}

NetSpec gradcheck_net_spec(ModelKind kind) {
  NetSpec spec;
  spec.channel_schedule = {4, 4};
  spec.skips.clear();
  if (traits(kind).alternating) spec.skips = {{1, 0}};
  return spec;
}

GradcheckResult gradcheck(const Network& source, const GradcheckFixture& fx, double eps) {
  const auto start = std::chrono::steady_clock::now();
  Network net = source.clone();
  net.set_requires_grad(true);
  const std::size_t frames = fx.drivers.size() - 1;
  std::span<const Tensor> targets(fx.targets.data() + 1, frames);

  auto loss_of = [&] {
    const auto pred = net.predict_sequence(fx.graph, fx.drivers, fx.targets.front(), PredictMode::RollOut);
    return sequence_loss(targets, pred);
  };

  auto params = net.parameters();
  auto& tape = Tape::current();
  tape.clear();
  for (auto& p : params) p.zero_grad();
  backward(loss_of());
  tape.clear();

  const auto numeric = finite_diff_grad([&] { return loss_of().item(); }, params, eps);

  GradcheckResult result;
  const auto named = net.named_parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamGradError err{named[k].first};
    const auto analytic = params[k].grad();
    const auto fd = numeric[k].data();
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double diff = std::abs(a - fd[i]);
      const double denom = std::max({std::abs(a), std::abs(fd[i]), kGradcheckFloor});
      err.max_abs_error = std::max(err.max_abs_error, diff);
      err.max_rel_error = std::max(err.max_rel_error, diff / denom);
      err.max_abs_grad = std::max(err.max_abs_grad, std::abs(a));
    }
    if (err.max_rel_error >= result.worst_rel_error) {
      result.worst_rel_error = err.max_rel_error;
      result.worst_param = err.name;
    }
    result.params.push_back(std::move(err));
  }
  for (auto& p : params) p.zero_grad();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace altsim
