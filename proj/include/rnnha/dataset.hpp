#ifndef RNNHA_DATASET_HPP_
#define RNNHA_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rnnha/tensor.hpp"

namespace rnnha {

/**
 * One manifest row. `source` is either "<file.desc>:<index>" (a map inside a
 * DESC1 file) or the path of a binary PGM/PPM image, relative to the
 * manifest's directory.
 */
struct LabeledSample {
  std::string source;
  std::string vehicle_id;
  std::string model_id;
  std::optional<std::string> camera_id;
  std::optional<std::string> track_id;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  /// Dense [0, C) indices, built from the training split only (sorted ids).
  std::map<std::string, std::size_t> model_labels;
  std::map<std::string, std::size_t> vehicle_labels;
  /// Directory that relative sources resolve against.
  std::string base_dir;

  std::size_t model_classes() const { return model_labels.size(); }
  std::size_t vehicle_classes() const { return vehicle_labels.size(); }
};

/// Header `split,source,vehicle_id,model_id[,camera_id[,track_id]]` is required.
DatasetSplit parse_manifest(const std::string& text, const std::string& base_dir = ".");
DatasetSplit load_manifest(const std::string& path);

/// Checks hierarchy consistency and train/test vehicle disjointness, then
/// rebuilds the dense label maps. Throws ValidationError.
void finalize_split(DatasetSplit& split);

std::string manifest_csv(const DatasetSplit& split);

/// Partition of a seeded permutation of [0, n) into consecutive batches;
/// the final batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed);

struct TrainingSet {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> model_labels;
  std::vector<std::size_t> vehicle_labels;

  std::size_t size() const { return inputs.size(); }
};

/// Resolves every sample's source into an input tensor (descriptor map or image).
std::vector<Tensor> load_inputs(const std::vector<LabeledSample>& samples,
                                const std::string& base_dir);

TrainingSet make_training_set(const DatasetSplit& split);

}  // namespace rnnha

#endif  // RNNHA_DATASET_HPP_
