#ifndef RNNHA_OPTIM_HPP_
#define RNNHA_OPTIM_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rnnha/dataset.hpp"
#include "rnnha/gru.hpp"
#include "rnnha/model.hpp"
#include "rnnha/params.hpp"

namespace rnnha {

struct TrainSchedule {
  double initial_lr = 0.001;
  std::size_t drop_epoch = 5;
  double dropped_lr = 0.0001;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;

  void validate() const;
};

/// Step function: initial_lr before drop_epoch, dropped_lr from it on.
double lr_schedule(std::size_t epoch, const TrainSchedule& schedule = {});

/// Non-centered RMSprop without momentum.
struct RmspropState {
  double alpha = 0.99;
  double delta = 1e-8;
  /// Running mean of squared gradients, one tensor per parameter.
  std::vector<Tensor> mean_square;
};

/**
 * v <- αv + (1-α)g², θ <- θ - lr·g / (sqrt(v) + δ), using each parameter's
 * grad buffer. Throws NumericError before touching anything if a gradient
 * is not finite.
 */
void rmsprop_step(const std::vector<NamedParam>& params, RmspropState& state, double lr);

struct EpochLoss {
  std::size_t epoch = 0;
  LossReport loss;
};

/// Everything needed to resume training bit-exactly.
struct TrainState {
  RmspropState optimizer;
  std::size_t epoch = 0;
  std::vector<EpochLoss> trace;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/**
 * Runs epochs state.epoch .. schedule.epochs-1. The sample order of epoch e
 * is a permutation seeded by (seed, e), so an interrupted run resumed from
 * its TrainState reproduces the uninterrupted one.
 */
void train(Model& model, const TrainingSet& data, const TrainSchedule& schedule,
           std::uint64_t seed, TrainState& state, const EpochCallback& on_epoch = {});

/// One averaged minibatch step; returns the batch-mean loss before the update.
LossReport train_batch(Model& model, const TrainingSet& data,
                       const std::vector<std::size_t>& batch, RmspropState& optimizer,
                       double lr);

/// "epoch,mean_total,mean_model,mean_vehicle" with one row per epoch.
std::string loss_trace_csv(const std::vector<EpochLoss>& trace);

}  // namespace rnnha

#endif  // RNNHA_OPTIM_HPP_
