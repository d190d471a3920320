#include "rnnha/model.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "rnnha/errors.hpp"

namespace rnnha {

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::rnn_ha: return "rnn_ha";
    case Variant::fc_ha: return "fc_ha";
    case Variant::rnn_h_no_attention: return "rnn_h_no_attention";
  }
  return "unknown";
}

Variant parse_variant(const std::string& text) {
  if (text == "rnn_ha") return Variant::rnn_ha;
  if (text == "fc_ha") return Variant::fc_ha;
  if (text == "rnn_h_no_attention" || text == "rnn_h") return Variant::rnn_h_no_attention;
  throw ConfigError("unknown variant '" + text + "' (expected rnn_ha, fc_ha, rnn_h_no_attention)");
}

std::string to_string(BackboneKind kind) { return kind == BackboneKind::conv ? "conv" : "ingested"; }

BackboneKind parse_backbone(const std::string& text) {
  if (text == "conv") return BackboneKind::conv;
  if (text == "ingested") return BackboneKind::ingested;
  throw ConfigError("unknown backbone '" + text + "' (expected conv or ingested)");
}

std::size_t ModelConfig::effective_transformer_dim() const {
  if (transformer_dim != 0) return transformer_dim;
  return std::max<std::size_t>(1, hidden_dim / 2);
}

void ModelConfig::validate() const {
  if (descriptor_dim == 0 || hidden_dim == 0) {
    throw ConfigError("descriptor and hidden dimensions must be positive");
  }
  if (model_classes == 0 || vehicle_classes == 0) {
    throw ConfigError("class counts must be positive");
  }
  if (!(epsilon > 0.0)) throw ConfigError("attention epsilon must be positive");
  if (backbone == BackboneKind::conv) {
    const Shape out = conv.output_shape();
    if (out[2] != descriptor_dim) {
      throw ConfigError("convolution stack produces " + std::to_string(out[2]) +
                        " channels but descriptor_dim is " + std::to_string(descriptor_dim));
    }
  }
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad number for " + key + ": '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad unsigned integer for " + key + ": '" + s + "'");
  }
  return v;
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "variant=" << to_string(variant) << '\n'
     << "descriptor_dim=" << descriptor_dim << '\n'
     << "hidden_dim=" << hidden_dim << '\n'
     << "transformer_dim=" << transformer_dim << '\n'
     << "model_classes=" << model_classes << '\n'
     << "vehicle_classes=" << vehicle_classes << '\n'
     << "backbone=" << to_string(backbone) << '\n'
     << "epsilon=" << format_double(epsilon) << '\n'
     << "seed=" << seed << '\n';
  if (backbone == BackboneKind::conv) {
    os << "conv.in_height=" << conv.in_height << '\n'
       << "conv.in_width=" << conv.in_width << '\n'
       << "conv.in_channels=" << conv.in_channels << '\n'
       << "conv.layers=";
    for (std::size_t i = 0; i < conv.layers.size(); ++i) {
      const ConvLayerSpec& l = conv.layers[i];
      if (i) os << ',';
      os << l.kernel << ':' << l.out_channels << ':' << l.stride << ':' << l.padding << ':'
         << (l.pool ? 1 : 0);
    }
    os << '\n';
  }
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("model config is missing '" + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.variant = parse_variant(get("variant"));
  c.descriptor_dim = parse_uint("descriptor_dim", get("descriptor_dim"));
  c.hidden_dim = parse_uint("hidden_dim", get("hidden_dim"));
  c.transformer_dim = parse_uint("transformer_dim", get("transformer_dim"));
  c.model_classes = parse_uint("model_classes", get("model_classes"));
  c.vehicle_classes = parse_uint("vehicle_classes", get("vehicle_classes"));
  c.backbone = parse_backbone(get("backbone"));
  c.epsilon = parse_double("epsilon", get("epsilon"));
  c.seed = parse_uint("seed", get("seed"));
  if (c.backbone == BackboneKind::conv) {
    c.conv.in_height = parse_uint("conv.in_height", get("conv.in_height"));
    c.conv.in_width = parse_uint("conv.in_width", get("conv.in_width"));
    c.conv.in_channels = parse_uint("conv.in_channels", get("conv.in_channels"));
    c.conv.layers.clear();
    std::istringstream ls(get("conv.layers"));
    std::string item;
    while (std::getline(ls, item, ',')) {
      ConvLayerSpec spec;
      char sep = 0;
      int pool = 0;
      std::istringstream one(item);
      if (!(one >> spec.kernel >> sep >> spec.out_channels >> sep >> spec.stride >> sep >> spec.padding >>
            sep >> pool)) {
        throw ConfigError("malformed conv layer '" + item + "'");
      }
      spec.pool = pool != 0;
      c.conv.layers.push_back(spec);
    }
  }
  c.validate();
  return c;
}

FcTransform FcTransform::init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                              const std::string& prefix) {
  return FcTransform{
      init_uniform({hidden_dim, input_dim}, input_dim, seed, prefix + ".hidden_weight"),
      init_uniform({hidden_dim}, input_dim, seed, prefix + ".hidden_bias"),
      init_uniform({hidden_dim, hidden_dim}, hidden_dim, seed, prefix + ".out_weight"),
      init_uniform({hidden_dim}, hidden_dim, seed, prefix + ".out_bias")};
}

void FcTransform::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  out.push_back({prefix + ".hidden_weight", &hidden_weight});
  out.push_back({prefix + ".hidden_bias", &hidden_bias});
  out.push_back({prefix + ".out_weight", &out_weight});
  out.push_back({prefix + ".out_bias", &out_bias});
}

ad::Var fc_transform(ad::Graph& graph, ad::Var x, FcTransform& params) {
  if (x.shape() != Shape{params.hidden_weight.dim(1)}) {
    throw ShapeError("fully connected transform expects " +
                     std::to_string(params.hidden_weight.dim(1)) + " inputs, got " +
                     shape_str(x.shape()));
  }
  ad::Var hidden = ad::relu(ad::matmul(graph.parameter(params.hidden_weight), x) +
                            graph.parameter(params.hidden_bias));
  return ad::tanh(ad::matmul(graph.parameter(params.out_weight), hidden) +
                  graph.parameter(params.out_bias));
}

FeatureVector l2_normalize(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (sq == 0.0) return FeatureVector{std::move(values), false};
  const double norm = std::sqrt(sq);
  for (double& v : values) v /= norm;
  return FeatureVector{std::move(values), true};
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::uint64_t seed = config_.seed;
  const std::size_t d = config_.descriptor_dim, h = config_.hidden_dim;
  if (config_.backbone == BackboneKind::conv) {
    backbone_ = ConvStackParams::init(config_.conv, seed);
  }
  if (config_.variant == Variant::fc_ha) {
    fc_coarse_ = FcTransform::init(d, h, seed, "fc_coarse");
    fc_fine_ = FcTransform::init(d, h, seed, "fc_fine");
  } else {
    gru_ = GruParams::init(d, h, seed);
  }
  if (config_.variant != Variant::rnn_h_no_attention) {
    transformer_ = TransformerNetParams::init(h, config_.effective_transformer_dim(), d, seed);
  }
  model_head_ = ClassifierHead::init(config_.model_classes, h, seed, "head_model");
  vehicle_head_ = ClassifierHead::init(config_.vehicle_classes, h, seed, "head_vehicle");
}

ad::Var Model::activation(ad::Graph& graph, const Tensor& input) {
  if (backbone_) return conv_forward(graph, graph.constant(input), *backbone_);
  if (input.rank() != 3 || input.dim(2) != config_.descriptor_dim) {
    throw ConfigError("activation map " + shape_str(input.shape()) +
                      " does not match descriptor_dim " + std::to_string(config_.descriptor_dim));
  }
  return graph.constant(input);
}

ad::Var Model::attention_branch(ad::Graph& graph, ad::Var o1, ad::Var map,
                                ForwardResult& result) {
  ad::Var w = guidance_signal(graph, o1, *transformer_);
  ad::Var s = attention_scores(w, map);
  ad::Var a = normalize_scores(s, config_.epsilon);
  result.scores = s;
  result.weights = a;
  return attention_embedding(attend(a, map));
}

void Model::classify_levels(ad::Graph& graph, ForwardResult& result) {
  result.logits_model = classify(graph, result.o1, model_head_);
  result.logits_vehicle = classify(graph, result.o2, vehicle_head_);
}

ForwardResult Model::forward(ad::Graph& graph, const Tensor& input) {
  switch (config_.variant) {
    case Variant::rnn_ha: return forward_rnn_ha(graph, input);
    case Variant::fc_ha: return forward_fc_ha(graph, input);
    case Variant::rnn_h_no_attention: return forward_rnn_h(graph, input);
  }
  throw ConfigError("unknown variant");
}

ForwardResult Model::forward_rnn_ha(ad::Graph& graph, const Tensor& input) {
  if (!gru_ || !transformer_) throw ConfigError("model has no GRU/attention parameters");
  ForwardResult result;
  ad::Var map = activation(graph, input);
  result.x1 = ad::global_average_pool(map);
  Unrolled steps = unroll(
      graph, result.x1,
      [&](ad::Var o1) {
        result.x2 = attention_branch(graph, o1, map, result);
        return result.x2;
      },
      *gru_);
  result.o1 = steps.o1();
  result.o2 = steps.o2();
  classify_levels(graph, result);
  return result;
}

ForwardResult Model::forward_fc_ha(ad::Graph& graph, const Tensor& input) {
  if (!fc_coarse_ || !fc_fine_ || !transformer_) {
    throw ConfigError("model has no fully connected/attention parameters");
  }
  ForwardResult result;
  ad::Var map = activation(graph, input);
  result.x1 = ad::global_average_pool(map);
  result.o1 = fc_transform(graph, result.x1, *fc_coarse_);
  result.x2 = attention_branch(graph, result.o1, map, result);
  result.o2 = fc_transform(graph, result.x2, *fc_fine_);
  classify_levels(graph, result);
  return result;
}

ForwardResult Model::forward_rnn_h(ad::Graph& graph, const Tensor& input) {
  if (!gru_) throw ConfigError("model has no GRU parameters");
  ForwardResult result;
  ad::Var map = activation(graph, input);
  result.x1 = ad::global_average_pool(map);
  result.x2 = result.x1;
  Unrolled steps = unroll(
      graph, result.x1, [&](ad::Var) { return result.x1; }, *gru_);
  result.o1 = steps.o1();
  result.o2 = steps.o2();
  classify_levels(graph, result);
  return result;
}

HierarchicalLoss Model::loss(const ForwardResult& result, std::size_t model_label,
                             std::size_t vehicle_label) const {
  if (model_label >= config_.model_classes || vehicle_label >= config_.vehicle_classes) {
    throw IndexError("label (" + std::to_string(model_label) + ", " +
                     std::to_string(vehicle_label) + ") outside configured class counts (" +
                     std::to_string(config_.model_classes) + ", " +
                     std::to_string(config_.vehicle_classes) + ")");
  }
  return hierarchical_loss(result.logits_model, model_label, result.logits_vehicle,
                           vehicle_label);
}

FeatureVector Model::extract_feature(const Tensor& input) {
  ad::Graph graph;
  ForwardResult r = forward(graph, input);
  return l2_normalize(r.o2.value().values());
}

std::optional<AttentionMap> Model::attention_map(const Tensor& input) {
  if (!has_attention()) return std::nullopt;
  ad::Graph graph;
  ForwardResult r = forward(graph, input);
  AttentionMap map;
  map.height = r.weights->shape()[0];
  map.width = r.weights->shape()[1];
  map.scores = r.scores->value().values();
  map.weights = r.weights->value().values();
  map.epsilon = config_.epsilon;
  return map;
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  if (backbone_) {
    for (std::size_t l = 0; l < backbone_->kernels.size(); ++l) {
      const std::string prefix = "backbone.conv" + std::to_string(l);
      out.push_back({prefix + ".kernel", &backbone_->kernels[l]});
      out.push_back({prefix + ".bias", &backbone_->biases[l]});
    }
  }
  if (gru_) gru_->collect(out);
  if (fc_coarse_) fc_coarse_->collect(out, "fc_coarse");
  if (fc_fine_) fc_fine_->collect(out, "fc_fine");
  if (transformer_) transformer_->collect(out);
  model_head_.collect(out, "head_model");
  vehicle_head_.collect(out, "head_vehicle");
  return out;
}

std::size_t Model::parameter_count() { return count_elements(parameters()); }

std::size_t Model::expected_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.descriptor_dim, h = c.hidden_dim, t = c.effective_transformer_dim();
  std::size_t n = 0;
  if (c.backbone == BackboneKind::conv) {
    std::size_t cin = c.conv.in_channels;
    for (const ConvLayerSpec& l : c.conv.layers) {
      n += l.kernel * l.kernel * cin * l.out_channels + l.out_channels;
      cin = l.out_channels;
    }
  }
  // GRU: three gates of (H·d + H·H + H); FC-HA: two transforms of (H·d + H + H·H + H).
  if (c.variant == Variant::fc_ha) {
    n += 2 * (h * d + h + h * h + h);
  } else {
    n += 3 * (h * d + h * h + h);
  }
  if (c.variant != Variant::rnn_h_no_attention) n += t * h + t + d * t + d;
  n += c.model_classes * (h + 1) + c.vehicle_classes * (h + 1);
  return n;
}

}  // namespace rnnha
