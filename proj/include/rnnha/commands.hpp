#ifndef RNNHA_COMMANDS_HPP_
#define RNNHA_COMMANDS_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rnnha/autodiff.hpp"
#include "rnnha/checkpoint.hpp"
#include "rnnha/dataset.hpp"
#include "rnnha/model.hpp"
#include "rnnha/optim.hpp"
#include "rnnha/retrieval.hpp"
#include "rnnha/synth.hpp"

namespace rnnha {

// Library side of the command-line tool. Each command validates its options
// before doing any work and reports problems through the exception types in
// errors.hpp.

// ---------------------------------------------------------------- synth

SynthDataset cmd_synth(const std::string& out_dir, const SynthConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string manifest;
  std::string checkpoint_out;
  std::string loss_csv;  // empty: not written
  std::optional<std::string> resume;
  Variant variant = Variant::rnn_ha;
  std::size_t hidden_dim = 1024;
  std::size_t transformer_dim = 0;
  double epsilon = kAttentionEpsilon;
  /// Output depth of the conv stack when the manifest lists images.
  std::size_t conv_depth = 32;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
};

/// Builds the model config a manifest implies: class counts from the train
/// split, backbone and descriptor width from the first input.
ModelConfig model_config_for(const DatasetSplit& split, const std::vector<Tensor>& inputs,
                             const TrainOptions& options);

/// Trains (or resumes), writes the checkpoint and the loss CSV.
TrainState cmd_train(const TrainOptions& options, std::ostream* log = nullptr);

// ---------------------------------------------------------------- extract

/// ℓ2-normalized o₂ for every sample, in order. A sample whose o₂ is zero
/// stays zero.
std::vector<std::vector<double>> extract_features(Model& model, const std::vector<Tensor>& inputs);

/// split is "train" or "test". Throws ConfigError when the inputs do not
/// match the checkpoint's backbone.
std::size_t cmd_extract(const std::string& checkpoint, const std::string& manifest,
                        const std::string& split, const std::string& out);

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string features;
  std::string manifest;
  std::string protocol = "vehicleid";
  std::size_t gallery_size = 800;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  std::string aggregation = "max";
};

std::vector<ItemMeta> item_meta(const std::vector<LabeledSample>& samples);

EvaluationReport evaluate(const std::vector<std::vector<double>>& features,
                          const std::vector<LabeledSample>& samples, const EvalOptions& options);

/// Reads a FEAT1 file written for the manifest's test split.
EvaluationReport cmd_eval(const EvalOptions& options);

// ---------------------------------------------------------------- gradcheck

struct GradcheckOptions {
  std::size_t grid = 2;
  std::size_t descriptor_dim = 4;
  std::size_t hidden_dim = 8;
  std::size_t model_classes = 3;
  std::size_t vehicle_classes = 6;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  std::vector<Variant> variants = {Variant::rnn_ha, Variant::fc_ha, Variant::rnn_h_no_attention};
  /// Test hook: corrupt the backward pass of one op.
  std::optional<ad::Op> inject_fault;
};

struct GradcheckGroup {
  Variant variant = Variant::rnn_ha;
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double tolerance = 0.0;

  bool passed() const;
  std::string to_text() const;
};

GradcheckReport cmd_gradcheck(const GradcheckOptions& options);

// ---------------------------------------------------------------- attmap

/// Plain PGM: min weight -> 0, max -> 255; a constant map is all 255.
std::string attention_pgm(const AttentionMap& map);
/// row,col,score,weight
std::string attention_csv(const AttentionMap& map);

/// Writes att_<id>.pgm and att_<id>.csv per requested sample of the split;
/// returns the written paths. Throws IndexError for an id out of range.
std::vector<std::string> cmd_attmap(const std::string& checkpoint, const std::string& manifest,
                                    const std::string& split, const std::vector<std::size_t>& ids,
                                    const std::string& out_dir);

/// Fraction of samples whose attention argmax is their vehicle's signature cell.
double attention_localization(Model& model, const std::vector<Tensor>& inputs,
                              const std::vector<LabeledSample>& samples,
                              const std::vector<SignatureCell>& signatures);

// ---------------------------------------------------------------- ablate

struct ExperimentResult {
  Variant variant = Variant::rnn_ha;
  std::uint64_t seed = 0;
  std::vector<EpochLoss> trace;
  EvaluationReport report;
  std::optional<double> localization;
  std::size_t parameters = 0;
};

/// Train on split.train, extract on split.test, evaluate with the
/// VehicleID protocol over every test vehicle.
ExperimentResult run_experiment(const DatasetSplit& split, const TrainingSet& train,
                                const std::vector<Tensor>& test_inputs, const TrainOptions& options,
                                std::size_t repeats,
                                const std::vector<SignatureCell>* signatures = nullptr,
                                std::ostream* log = nullptr);

struct AblateOptions {
  TrainOptions train;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t repeats = 10;
  /// Optional ground truth for attention localization.
  std::string signatures;
  std::string out_dir;  // empty: nothing written
};

struct AblationSummary {
  std::vector<ExperimentResult> runs;

  /// Mean over seeds of a variant's metric.
  double mean_cmc1(Variant variant) const;
  double mean_map(Variant variant) const;
  std::optional<double> mean_localization(Variant variant) const;
  std::string table() const;
};

AblationSummary cmd_ablate(const AblateOptions& options, std::ostream* log = nullptr);

}  // namespace rnnha

#endif  // RNNHA_COMMANDS_HPP_
