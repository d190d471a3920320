#ifndef RNNHA_CHECKPOINT_HPP_
#define RNNHA_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "rnnha/model.hpp"
#include "rnnha/optim.hpp"

namespace rnnha {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model, optimizer and schedule state sufficient for a bit-exact resume.
struct Checkpoint {
  Model model;
  TrainState state;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
};

/**
 * Layout (little-endian): "RNHACKPT", u32 version, model config text,
 * schedule, seed, epoch, named f64 tensors, RMSprop state, loss trace.
 * Strings are u32-length-prefixed.
 */
std::string encode_checkpoint(Model& model, const TrainState& state,
                              const TrainSchedule& schedule, std::uint64_t seed);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source = "checkpoint");

void save_checkpoint(const std::string& path, Model& model, const TrainState& state,
                     const TrainSchedule& schedule, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rnnha

#endif  // RNNHA_CHECKPOINT_HPP_
