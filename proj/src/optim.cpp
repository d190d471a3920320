#include "rnnha/optim.hpp"

#include <cmath>
#include <cstdio>

#include "rnnha/dataset.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/rng.hpp"

namespace rnnha {

void TrainSchedule::validate() const {
  if (!(initial_lr > 0.0) || !(dropped_lr > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
}

double lr_schedule(std::size_t epoch, const TrainSchedule& schedule) {
  return epoch < schedule.drop_epoch ? schedule.initial_lr : schedule.dropped_lr;
}

void rmsprop_step(const std::vector<NamedParam>& params, RmspropState& state, double lr) {
  if (state.mean_square.empty()) {
    for (const NamedParam& p : params) state.mean_square.emplace_back(p.tensor->shape(), 0.0);
  }
  if (state.mean_square.size() != params.size()) {
    throw ShapeError("optimizer state tracks " + std::to_string(state.mean_square.size()) +
                     " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].tensor;
    if (state.mean_square[k].shape() != p.shape()) {
      throw ShapeError("optimizer state for " + params[k].name + " has shape " +
                       shape_str(state.mean_square[k].shape()) + ", parameter is " +
                       shape_str(p.shape()));
    }
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + params[k].name);
    }
  }
  const double a = state.alpha;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].tensor;
    std::span<double> g = p.grad();
    std::span<double> v = state.mean_square[k].data();
    std::span<double> theta = p.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = a * v[i] + (1.0 - a) * g[i] * g[i];
      theta[i] -= lr * g[i] / (std::sqrt(v[i]) + state.delta);
    }
  }
}

namespace {

std::vector<LossReport> step_on_batch(Model& model, const TrainingSet& data,
                                      const std::vector<std::size_t>& batch,
                                      RmspropState& optimizer, double lr) {
  std::vector<NamedParam> params = model.parameters();
  zero_grads(params);
  std::vector<LossReport> reports;
  reports.reserve(batch.size());
  const double seed = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    ad::Graph graph;
    ForwardResult fwd = model.forward(graph, data.inputs[idx]);
    HierarchicalLoss loss = model.loss(fwd, data.model_labels[idx], data.vehicle_labels[idx]);
    graph.backward(loss.total, seed);
    reports.push_back(loss.report());
  }
  rmsprop_step(params, optimizer, lr);
  return reports;
}

}  // namespace

LossReport train_batch(Model& model, const TrainingSet& data,
                       const std::vector<std::size_t>& batch, RmspropState& optimizer,
                       double lr) {
  return mean_loss(step_on_batch(model, data, batch, optimizer, lr));
}

void train(Model& model, const TrainingSet& data, const TrainSchedule& schedule,
           std::uint64_t seed, TrainState& state, const EpochCallback& on_epoch) {
  schedule.validate();
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (data.model_labels.size() != data.size() || data.vehicle_labels.size() != data.size()) {
    throw ConfigError("training labels do not cover every input");
  }
  const ModelConfig& cfg = model.config();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.model_labels[i] >= cfg.model_classes ||
        data.vehicle_labels[i] >= cfg.vehicle_classes) {
      throw ConfigError("sample " + std::to_string(i) +
                        " has a label outside the model's class counts (" +
                        std::to_string(cfg.model_classes) + ", " +
                        std::to_string(cfg.vehicle_classes) + ")");
    }
  }
  for (; state.epoch < schedule.epochs; ++state.epoch) {
    const double lr = lr_schedule(state.epoch, schedule);
    std::vector<LossReport> sample_reports;
    for (const auto& batch : batch_iter(data.size(), schedule.batch_size,
                                        derive_seed(seed, state.epoch))) {
      auto reports = step_on_batch(model, data, batch, state.optimizer, lr);
      sample_reports.insert(sample_reports.end(), reports.begin(), reports.end());
    }
    EpochLoss entry{state.epoch, mean_loss(sample_reports)};
    state.trace.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
}

std::string loss_trace_csv(const std::vector<EpochLoss>& trace) {
  std::string out = "epoch,mean_total,mean_model,mean_vehicle\n";
  char line[160];
  for (const EpochLoss& e : trace) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.loss.total,
                  e.loss.model, e.loss.vehicle);
    out += line;
  }
  return out;
}

}  // namespace rnnha
