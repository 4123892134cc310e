// SPDX-License-Identifier: Apache-2.0
//
// Loss, Adam, the teacher-forced training loop and the single-step /
// roll-out evaluation protocol.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altsim/checkpoint.hpp"
#include "altsim/network.hpp"
#include "altsim/trajectory.hpp"

namespace altsim {

struct Dataset {
  Graph graph;
  std::vector<Trajectory> sequences;
};

/// Mean per-vertex Euclidean distance over all frames:
/// (1 / (T |V|)) sum_t sum_i ||Y_t(i) - Yhat_t(i)||. Differentiable in `predictions`.
Tensor sequence_loss(std::span<const Tensor> targets, std::span<const Tensor> predictions);

struct TrainConfig {
  std::size_t epochs = 1000;
  double learning_rate = 0.1;
  /// Multiplies the learning rate once per epoch: lr_e = lr * decay^e.
  double lr_decay = 0.995;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Frames 1..horizon of each sequence are trained on; frame 0 seeds the state.
  std::size_t horizon = 20;
  /// Frames scored by the validation loss; 0 means `horizon`. A longer window
  /// makes checkpoint selection see states the training window never reaches.
  /// A validation pass that overflows scores +inf instead of aborting.
  std::size_t validation_horizon = 0;
  std::uint64_t seed = 0;
  /// Sequences per optimizer step.
  std::size_t batch_size = 1;
  bool shuffle = true;
  /// Optional L2 penalty coefficient added to gradients; 0 disables it.
  double l2 = 0.0;
  std::size_t validate_every = 1;

  void validate() const;
};

struct AdamMoments {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of `params` from their grads at learning
/// rate `lr`. Throws NumericFault before touching anything if a grad is not
/// finite. Parameters without a grad are treated as having zero grad.
void adam_step(std::span<Tensor> params, AdamMoments& moments, double lr, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Network best;
  TrainingMetadata best_metadata;
  std::vector<EpochRecord> curve;
};

/// Raised when the loss turns NaN. Carries the epoch and the best model seen
/// before it, if any.
class TrainingDiverged : public NumericFault {
 public:
  TrainingDiverged(std::size_t epoch, std::optional<Checkpoint> last_good)
      : NumericFault("epoch " + std::to_string(epoch),
                     "training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
        epoch_(epoch),
        last_good_(std::move(last_good)) {}
  std::size_t epoch() const noexcept { return epoch_; }
  const std::optional<Checkpoint>& last_good() const noexcept { return last_good_; }

 private:
  std::size_t epoch_;
  std::optional<Checkpoint> last_good_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Teacher-forced training. Keeps the parameters with the lowest validation
/// loss (training loss when no validation set is given).
TrainResult train(Network model, const Dataset& data, const Dataset* validation,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Single-step loss over frames 1..horizon of every sequence, without recording.
double dataset_loss(const Network& model, const Dataset& data, std::size_t horizon);

// ---- evaluation ------------------------------------------------------------

struct HorizonStats {
  std::size_t horizon = 0;
  double mean_mm = 0.0;
  double sd_mm = 0.0;
};

struct EvalReport {
  std::string model;
  PredictMode mode = PredictMode::RollOut;
  std::string split;
  std::vector<HorizonStats> rows;

  const HorizonStats& at(std::size_t horizon) const;
};

std::vector<std::size_t> default_horizons();

/// Per-vertex errors over frames 1..h of every sequence, reduced to mean and
/// population sd in millimeters for each horizon h.
EvalReport evaluate(const Network& model, const Dataset& data, std::span<const std::size_t> horizons,
                    PredictMode mode, std::string split = "");

std::string report_csv(std::span<const EvalReport> reports);
std::string report_json(std::span<const EvalReport> reports);

}  // namespace altsim
