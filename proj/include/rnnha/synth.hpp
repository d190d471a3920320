#ifndef RNNHA_SYNTH_HPP_
#define RNNHA_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rnnha/backbone.hpp"
#include "rnnha/dataset.hpp"

namespace rnnha {

/**
 * Two-level synthetic descriptors. Every cell of an image carries its
 * model's global pattern (Gaussian per element, scaled by coarse_amplitude).
 * One fixed cell per vehicle also carries the vehicle's signature, a sparse
 * code with signature_active_dims entries equal to signature_amplitude.
 * Every value gets isotropic Gaussian noise.
 */
struct SynthConfig {
  std::size_t models = 8;
  std::size_t train_vehicles_per_model = 8;
  std::size_t test_vehicles_per_model = 8;
  std::size_t images_per_vehicle = 20;
  std::size_t grid_height = 6;
  std::size_t grid_width = 6;
  std::size_t dim = 16;
  std::size_t cameras = 4;
  double coarse_amplitude = 1.0;
  double signature_amplitude = 3.0;
  /// Nonzero dimensions of each signature code.
  std::size_t signature_active_dims = 3;
  double noise_sigma = 0.1;

  void validate() const;
};

struct SignatureCell {
  std::string vehicle_id;
  std::size_t row = 0;
  std::size_t col = 0;
};

struct SynthDataset {
  DatasetSplit split;
  std::vector<ActivationMap> train_maps;
  std::vector<ActivationMap> test_maps;
  std::vector<SignatureCell> signatures;

  /// Signature cell of a vehicle; throws IndexError for unknown ids.
  const SignatureCell& signature_of(const std::string& vehicle_id) const;
};

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

/// Writes manifest.csv, train.desc, test.desc and signatures.csv into `dir`.
void write_synth(const std::string& dir, const SynthDataset& data);

/// vehicle_id,signature_row,signature_col
std::vector<SignatureCell> load_signatures(const std::string& path);

}  // namespace rnnha

#endif  // RNNHA_SYNTH_HPP_
