#ifndef RNNHA_MODEL_HPP_
#define RNNHA_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rnnha/attention.hpp"
#include "rnnha/autodiff.hpp"
#include "rnnha/backbone.hpp"
#include "rnnha/gru.hpp"
#include "rnnha/params.hpp"

namespace rnnha {

enum class Variant { rnn_ha, fc_ha, rnn_h_no_attention };
enum class BackboneKind { conv, ingested };

std::string to_string(Variant variant);
Variant parse_variant(const std::string& text);
std::string to_string(BackboneKind kind);
BackboneKind parse_backbone(const std::string& text);

struct ModelConfig {
  Variant variant = Variant::rnn_ha;
  std::size_t descriptor_dim = 16;
  std::size_t hidden_dim = 1024;
  /// Width of the transformer network's hidden layer; 0 selects hidden_dim / 2.
  std::size_t transformer_dim = 0;
  std::size_t model_classes = 1;
  std::size_t vehicle_classes = 1;
  BackboneKind backbone = BackboneKind::ingested;
  ConvStackConfig conv;
  double epsilon = kAttentionEpsilon;
  std::uint64_t seed = 0;

  std::size_t effective_transformer_dim() const;
  void validate() const;
  /// Flat key=value lines; from_text(to_text()) reproduces the config.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

/// One hidden layer of width H: o = tanh(W2 relu(W1 x + b1) + b2).
struct FcTransform {
  Tensor hidden_weight, hidden_bias, out_weight, out_bias;

  static FcTransform init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                          const std::string& prefix);
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

ad::Var fc_transform(ad::Graph& graph, ad::Var x, FcTransform& params);

struct ForwardResult {
  ad::Var logits_model;
  ad::Var logits_vehicle;
  ad::Var x1;
  ad::Var x2;
  ad::Var o1;
  ad::Var o2;
  /// Present only for variants with an attention module.
  std::optional<ad::Var> scores;
  std::optional<ad::Var> weights;
};

struct FeatureVector {
  std::vector<double> values;
  bool normalized = false;
};

/// Divides by the l2 norm; a zero vector stays zero with normalized = false.
FeatureVector l2_normalize(std::vector<double> values);

/**
 * @brief Backbone -> GAP -> two-step hierarchy -> per-level classifiers.
 *
 * The same object covers the full attention model and both ablations; the
 * variant decides which parameter groups exist.
 */
class Model {
 public:
  explicit Model(ModelConfig config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }

  ForwardResult forward(ad::Graph& graph, const Tensor& input);
  ForwardResult forward_rnn_ha(ad::Graph& graph, const Tensor& input);
  ForwardResult forward_fc_ha(ad::Graph& graph, const Tensor& input);
  ForwardResult forward_rnn_h(ad::Graph& graph, const Tensor& input);

  HierarchicalLoss loss(const ForwardResult& result, std::size_t model_label,
                        std::size_t vehicle_label) const;

  FeatureVector extract_feature(const Tensor& input);
  std::optional<AttentionMap> attention_map(const Tensor& input);

  std::vector<NamedParam> parameters();
  std::size_t parameter_count();
  /// Closed-form count for a config, independent of the allocated tensors.
  static std::size_t expected_parameter_count(const ModelConfig& config);

  bool has_attention() const { return transformer_.has_value(); }

 private:
  ad::Var activation(ad::Graph& graph, const Tensor& input);
  ad::Var attention_branch(ad::Graph& graph, ad::Var o1, ad::Var map, ForwardResult& result);
  void classify_levels(ad::Graph& graph, ForwardResult& result);

  ModelConfig config_;
  std::optional<ConvStackParams> backbone_;
  std::optional<GruParams> gru_;
  std::optional<FcTransform> fc_coarse_;
  std::optional<FcTransform> fc_fine_;
  std::optional<TransformerNetParams> transformer_;
  ClassifierHead model_head_;
  ClassifierHead vehicle_head_;
};

}  // namespace rnnha

#endif  // RNNHA_MODEL_HPP_
