// SPDX-License-Identifier: Apache-2.0

#include "altsim/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "altsim/parallel.hpp"

namespace altsim {

Tensor sequence_loss(std::span<const Tensor> targets, std::span<const Tensor> predictions) {
  if (targets.empty()) throw ContractError("loss needs at least one frame");
  if (targets.size() != predictions.size())
    throw DimensionError("loss: " + std::to_string(targets.size()) + " target frames vs " +
                         std::to_string(predictions.size()) + " predicted");
  const auto nodes = targets.front().rows();
  Tensor total;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t].shape() != predictions[t].shape() || targets[t].rows() != nodes)
      throw DimensionError("loss: frame " + std::to_string(t) + " shapes " +
                           shape_string(targets[t].shape()) + " vs " +
                           shape_string(predictions[t].shape()));
    Tensor frame = sum(row_norms(sub(predictions[t], targets[t])));
    total = total.defined() ? add(total, frame) : frame;
  }
  return scale(total, 1.0 / static_cast<double>(targets.size() * nodes));
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ContractError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ContractError("lr decay must lie in (0, 1]");
  if (horizon == 0) throw ContractError("training horizon must be >= 1");
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
  if (validate_every == 0) throw ContractError("validate_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
    throw ContractError("invalid Adam coefficients");
  if (l2 < 0.0) throw ContractError("l2 must be non-negative");
}

void adam_step(std::span<Tensor> params, AdamMoments& moments, double lr, const TrainConfig& cfg) {
  if (moments.first.empty()) {
    for (const auto& p : params) {
      moments.first.emplace_back(p.size(), 0.0);
      moments.second.emplace_back(p.size(), 0.0);
    }
  }
  if (moments.first.size() != params.size()) throw ContractError("Adam moments do not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (moments.first[k].size() != params[k].size())
      throw ContractError("Adam moment buffer " + std::to_string(k) + " is mis-shaped");
    if (params[k].has_grad())
      for (double g : params[k].grad())
        if (!std::isfinite(g)) throw NumericFault("gradient", "non-finite gradient in parameter " + std::to_string(k));
  }

  const std::size_t t = ++moments.step;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].mutable_data();
    const auto grad = params[k].grad();
    auto& m = moments.first[k];
    auto& v = moments.second[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      double g = grad.empty() ? 0.0 : grad[i];
      if (cfg.l2 > 0.0) g += cfg.l2 * value[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

namespace {

void check_dataset(const Dataset& data, std::size_t frames_needed, const char* what) {
  if (data.sequences.empty()) throw ContractError(std::string(what) + " dataset is empty");
  for (std::size_t s = 0; s < data.sequences.size(); ++s) {
    const auto& seq = data.sequences[s];
    if (seq.num_frames() < frames_needed)
      throw ContractError(std::string(what) + " sequence " + std::to_string(s) + " has " +
                          std::to_string(seq.num_frames()) + " frames, needs " +
                          std::to_string(frames_needed));
    if (seq.num_nodes() != data.graph.num_nodes())
      throw ContractError(std::string(what) + " sequence " + std::to_string(s) +
                          " does not match the graph size");
  }
}

Tensor teacher_forced_loss(const Network& model, const Graph& g, const Trajectory& seq,
                           std::size_t horizon) {
  std::span<const Tensor> drivers(seq.X.data(), horizon + 1);
  std::span<const Tensor> teacher(seq.Y.data(), horizon);
  const auto predictions =
      model.predict_sequence(g, drivers, seq.Y.front(), PredictMode::SingleStep, teacher);
  return sequence_loss(std::span<const Tensor>(seq.Y.data() + 1, horizon), predictions);
}

}  // namespace

double dataset_loss(const Network& model, const Dataset& data, std::size_t horizon) {
  check_dataset(data, horizon + 1, "evaluation");
  std::vector<double> losses(data.sequences.size());
  parallel_for(data.sequences.size(), [&](std::size_t s) {
    NoGradGuard no_grad;
    losses[s] = teacher_forced_loss(model, data.graph, data.sequences[s], horizon).item();
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

TrainResult train(Network model, const Dataset& data, const Dataset* validation,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  check_dataset(data, cfg.horizon + 1, "training");
  const std::size_t validation_horizon = cfg.validation_horizon ? cfg.validation_horizon : cfg.horizon;
  if (validation) check_dataset(*validation, validation_horizon + 1, "validation");

  model.set_requires_grad(true);
  auto params = model.parameters();
  AdamMoments moments;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.sequences.size());
  std::iota(order.begin(), order.end(), 0);

  std::optional<Network> best;
  TrainingMetadata best_meta{0, std::numeric_limits<double>::infinity(), cfg.seed};
  std::vector<EpochRecord> curve;
  auto& tape = Tape::current();
  tape.clear();
  auto diverged = [&](std::size_t epoch) {
    return TrainingDiverged(epoch, best ? std::optional(make_checkpoint(*best, best_meta)) : std::nullopt);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(stop - start);
      for (auto& p : params) p.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        Tensor loss;
        try {
          loss = teacher_forced_loss(model, data.graph, data.sequences[order[k]], cfg.horizon);
        } catch (const NumericFault&) {
          tape.clear();
          throw diverged(epoch);
        }
        const double value = loss.item();
        if (!std::isfinite(value)) {
          tape.clear();
          throw diverged(epoch);
        }
        loss_sum += value;
        backward(scale(loss, weight));
        tape.clear();
      }
      try {
        adam_step(params, moments, record.learning_rate, cfg);
      } catch (const NumericFault&) {
        throw diverged(epoch);
      }
    }
    for (auto& p : params) p.zero_grad();
    record.train_loss = loss_sum / static_cast<double>(order.size());

    double selection = record.train_loss;
    const bool validate_now = (epoch + 1) % cfg.validate_every == 0 || epoch + 1 == cfg.epochs;
    if (validation) {
      if (validate_now) {
        try {
          record.validation_loss = dataset_loss(model, *validation, validation_horizon);
        } catch (const NumericFault&) {
          record.validation_loss = std::numeric_limits<double>::infinity();
        }
        selection = std::isfinite(record.validation_loss) ? record.validation_loss
                                                           : std::numeric_limits<double>::infinity();
      } else {
        selection = std::numeric_limits<double>::infinity();
      }
    }
    if (!std::isfinite(record.train_loss)) throw diverged(epoch);
    if (selection < best_meta.loss) {
      best = model.clone();
      best_meta = {epoch, selection, cfg.seed};
    }
    curve.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  if (!best) {
    best = model.clone();
    best_meta = {cfg.epochs - 1, curve.back().train_loss, cfg.seed};
  }
  return {std::move(*best), best_meta, std::move(curve)};
}

// ---- evaluation ------------------------------------------------------------

std::vector<std::size_t> default_horizons() { return {10, 20, 30, 40, 50}; }

const HorizonStats& EvalReport::at(std::size_t horizon) const {
  for (const auto& r : rows)
    if (r.horizon == horizon) return r;
  throw ContractError("report has no row for horizon " + std::to_string(horizon));
}

EvalReport evaluate(const Network& model, const Dataset& data, std::span<const std::size_t> horizons,
                    PredictMode mode, std::string split) {
  if (horizons.empty()) throw ContractError("no evaluation horizons given");
  const std::size_t max_h = *std::max_element(horizons.begin(), horizons.end());
  if (*std::min_element(horizons.begin(), horizons.end()) == 0)
    throw ContractError("evaluation horizons must be >= 1");
  if (data.sequences.empty()) throw ContractError("evaluation dataset is empty");
  for (std::size_t s = 0; s < data.sequences.size(); ++s)
    if (data.sequences[s].num_frames() < max_h + 1)
      throw ContractError("horizon " + std::to_string(max_h) + " exceeds sequence " + std::to_string(s) +
                          " (" + std::to_string(data.sequences[s].num_frames()) + " frames)");

  const std::size_t n = data.graph.num_nodes();
  // errors[s][t * n + i]: distance of vertex i at frame t + 1, meters.
  std::vector<std::vector<double>> errors(data.sequences.size());
  parallel_for(data.sequences.size(), [&](std::size_t s) {
    NoGradGuard no_grad;
    const auto& seq = data.sequences[s];
    std::span<const Tensor> drivers(seq.X.data(), max_h + 1);
    std::span<const Tensor> teacher(seq.Y.data(), max_h);
    const auto predictions = model.predict_sequence(data.graph, drivers, seq.Y.front(), mode,
                                                    mode == PredictMode::SingleStep ? teacher
                                                                                    : std::span<const Tensor>{});
    auto& out = errors[s];
    out.reserve(max_h * n);
    for (std::size_t t = 0; t < max_h; ++t) {
      const Tensor d = row_norms(sub(predictions[t], seq.Y[t + 1]));
      out.insert(out.end(), d.data().begin(), d.data().end());
    }
  });

  EvalReport report;
  report.model = model_name(model.kind());
  report.mode = mode;
  report.split = std::move(split);
  for (auto h : horizons) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& e : errors)
      for (std::size_t k = 0; k < h * n; ++k) total += e[k], ++count;
    const double mean = total / static_cast<double>(count);
    double var = 0.0;
    for (const auto& e : errors)
      for (std::size_t k = 0; k < h * n; ++k) var += (e[k] - mean) * (e[k] - mean);
    var /= static_cast<double>(count);
    report.rows.push_back({h, 1000.0 * mean, 1000.0 * std::sqrt(var)});
  }
  return report;
}

std::string report_csv(std::span<const EvalReport> reports) {
  std::string out = "model,mode,horizon,mean_mm,sd_mm\n";
  char line[256];
  for (const auto& r : reports)
    for (const auto& row : r.rows) {
      std::snprintf(line, sizeof line, "%s,%s,%zu,%.6f,%.6f\n", r.model.c_str(),
                    to_string(r.mode).c_str(), row.horizon, row.mean_mm, row.sd_mm);
      out += line;
    }
  return out;
}

}  // namespace altsim
