// SPDX-License-Identifier: Apache-2.0

#include "altsim/baselines.hpp"

namespace altsim {

ModelKind BaselineSpec::kind() const {
  const bool cp = peephole == Peephole::Convolutional;
  if (output == OutputSemantics::Y) return cp ? ModelKind::ConvLstmCpY : ModelKind::ConvLstmNpY;
  return cp ? ModelKind::ConvLstmCpDeltaY : ModelKind::ConvLstmNpDeltaY;
}

NetSpec BaselineSpec::net_spec() const {
  NetSpec spec;
  spec.channel_schedule = channel_schedule;
  spec.skips.clear();
  return spec;
}

std::optional<BaselineSpec> baseline_spec(ModelKind kind) {
  const auto tr = traits(kind);
  if (tr.alternating) return std::nullopt;
  BaselineSpec spec;
  spec.peephole = tr.peephole;
  spec.output = tr.output;
  return spec;
}

Network make_baseline(const BaselineSpec& spec, std::uint64_t seed) {
  return Network(spec.net_spec(), spec.kind(), seed);
}

std::vector<Tensor> baseline_predict(const BaselineSpec& spec, const Network& net, const Graph& g,
                                     std::span<const Tensor> drivers, const Tensor& y_0,
                                     PredictMode mode, std::span<const Tensor> teacher) {
  if (net.kind() != spec.kind())
    throw ContractError("baseline spec " + model_name(spec.kind()) + " does not match network " +
                        model_name(net.kind()));
  return net.predict_sequence(g, drivers, y_0, mode, teacher);
}

}  // namespace altsim
