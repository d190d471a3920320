#include "rnnha/checkpoint.hpp"

#include <map>

#include "rnnha/binary_io.hpp"
#include "rnnha/errors.hpp"

namespace rnnha {

namespace {

constexpr std::string_view kMagic = "RNHACKPT";

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  binio::put_string(out, name);
  binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) binio::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) binio::put_f64(out, v);
}

std::pair<std::string, Tensor> get_tensor(binio::Reader& in) {
  std::string name = in.string();
  const std::uint32_t rank = in.u32();
  if (rank == 0 || rank > 8) throw FormatError("tensor '" + name + "' has invalid rank");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(in.u32());
  for (std::size_t d : shape) {
    if (d == 0) throw FormatError("tensor '" + name + "' has a zero dimension");
  }
  const std::size_t n = shape_numel(shape);
  if (in.remaining() / 8 < n) throw FormatError("tensor '" + name + "' is truncated");
  std::vector<double> data(n);
  for (double& v : data) v = in.f64();
  return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

}  // namespace

std::string encode_checkpoint(Model& model, const TrainState& state,
                              const TrainSchedule& schedule, std::uint64_t seed) {
  std::string out(kMagic);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_string(out, model.config().to_text());
  binio::put_f64(out, schedule.initial_lr);
  binio::put_u64(out, schedule.drop_epoch);
  binio::put_f64(out, schedule.dropped_lr);
  binio::put_u64(out, schedule.batch_size);
  binio::put_u64(out, schedule.epochs);
  binio::put_u64(out, seed);
  binio::put_u64(out, state.epoch);

  const std::vector<NamedParam> params = model.parameters();
  binio::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const NamedParam& p : params) put_tensor(out, p.name, *p.tensor);

  binio::put_f64(out, state.optimizer.alpha);
  binio::put_f64(out, state.optimizer.delta);
  const auto& ms = state.optimizer.mean_square;
  if (!ms.empty() && ms.size() != params.size()) {
    throw ShapeError("optimizer state does not match the model's parameters");
  }
  binio::put_u32(out, static_cast<std::uint32_t>(ms.size()));
  for (std::size_t i = 0; i < ms.size(); ++i) put_tensor(out, params[i].name, ms[i]);

  binio::put_u32(out, static_cast<std::uint32_t>(state.trace.size()));
  for (const EpochLoss& e : state.trace) {
    binio::put_u64(out, e.epoch);
    binio::put_f64(out, e.loss.total);
    binio::put_f64(out, e.loss.model);
    binio::put_f64(out, e.loss.vehicle);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source) {
  if (bytes.size() < kMagic.size() || std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
    throw FormatError(source + ": not a checkpoint (bad magic)");
  }
  binio::Reader in(std::string_view(bytes).substr(kMagic.size()), source);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig config = ModelConfig::from_text(in.string());
  TrainSchedule schedule;
  schedule.initial_lr = in.f64();
  schedule.drop_epoch = in.u64();
  schedule.dropped_lr = in.f64();
  schedule.batch_size = in.u64();
  schedule.epochs = in.u64();
  const std::uint64_t seed = in.u64();
  TrainState state;
  state.epoch = in.u64();

  Model model(config);
  std::vector<NamedParam> params = model.parameters();
  const std::uint32_t count = in.u32();
  if (count != params.size()) {
    throw FormatError(source + ": holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (NamedParam& p : params) {
    auto [name, tensor] = get_tensor(in);
    if (name != p.name || tensor.shape() != p.tensor->shape()) {
      throw FormatError(source + ": tensor '" + name + "' " + shape_str(tensor.shape()) +
                        " does not match expected '" + p.name + "' " +
                        shape_str(p.tensor->shape()));
    }
    std::copy(tensor.data().begin(), tensor.data().end(), p.tensor->data().begin());
  }

  state.optimizer.alpha = in.f64();
  state.optimizer.delta = in.f64();
  const std::uint32_t opt_count = in.u32();
  if (opt_count != 0 && opt_count != params.size()) {
    throw FormatError(source + ": optimizer state size mismatch");
  }
  for (std::uint32_t i = 0; i < opt_count; ++i) {
    auto [name, tensor] = get_tensor(in);
    if (name != params[i].name || tensor.shape() != params[i].tensor->shape()) {
      throw FormatError(source + ": optimizer tensor '" + name + "' does not match '" +
                        params[i].name + "'");
    }
    state.optimizer.mean_square.push_back(std::move(tensor));
  }
  const std::uint32_t trace_len = in.u32();
  for (std::uint32_t i = 0; i < trace_len; ++i) {
    EpochLoss e;
    e.epoch = in.u64();
    e.loss.total = in.f64();
    e.loss.model = in.f64();
    e.loss.vehicle = in.f64();
    state.trace.push_back(e);
  }
  if (in.remaining() != 0) {
    throw FormatError(source + ": " + std::to_string(in.remaining()) + " trailing bytes");
  }
  return Checkpoint{std::move(model), std::move(state), schedule, seed};
}

void save_checkpoint(const std::string& path, Model& model, const TrainState& state,
                     const TrainSchedule& schedule, std::uint64_t seed) {
  binio::write_file(path, encode_checkpoint(model, state, schedule, seed));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path), path);
}

}  // namespace rnnha
