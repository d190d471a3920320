#include "rnnha/backbone.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

#include "rnnha/errors.hpp"
#include "rnnha/params.hpp"

namespace rnnha {

ActivationMap make_activation_map(Tensor tensor, Provenance provenance) {
  if (tensor.rank() != 3) {
    throw ShapeError("activation map must be [h x w x d], got " + shape_str(tensor.shape()));
  }
  return ActivationMap{std::move(tensor), provenance};
}

std::vector<std::vector<double>> to_descriptors(const ActivationMap& map) {
  const std::size_t d = map.depth();
  std::vector<std::vector<double>> out;
  out.reserve(map.cells());
  auto values = map.tensor.data();
  for (std::size_t c = 0; c < map.cells(); ++c) {
    out.emplace_back(values.begin() + c * d, values.begin() + (c + 1) * d);
  }
  return out;
}

ActivationMap from_descriptors(const std::vector<std::vector<double>>& descriptors,
                               std::size_t height, std::size_t width, Provenance provenance) {
  if (descriptors.size() != height * width || descriptors.empty()) {
    throw ShapeError("expected " + std::to_string(height * width) + " descriptors, got " +
                     std::to_string(descriptors.size()));
  }
  const std::size_t d = descriptors.front().size();
  std::vector<double> data;
  data.reserve(height * width * d);
  for (const auto& f : descriptors) {
    if (f.size() != d) throw ShapeError("descriptors have unequal dimensions");
    data.insert(data.end(), f.begin(), f.end());
  }
  return make_activation_map(Tensor({height, width, d}, std::move(data)), provenance);
}

ConvStackConfig ConvStackConfig::standard(std::size_t height, std::size_t width,
                                          std::size_t channels, std::size_t depth) {
  ConvStackConfig cfg;
  cfg.in_height = height;
  cfg.in_width = width;
  cfg.in_channels = channels;
  cfg.layers = {{3, 8, 1, 1, true}, {3, 16, 1, 1, true}, {3, depth, 1, 1, true}};
  return cfg;
}

Shape ConvStackConfig::output_shape() const {
  if (layers.empty()) throw ShapeError("convolution stack has no layers");
  std::size_t h = in_height, w = in_width, c = in_channels;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const ConvLayerSpec& spec = layers[l];
    if (spec.kernel == 0 || spec.stride == 0 || spec.out_channels == 0) {
      throw ShapeError("layer " + std::to_string(l) + " has a zero kernel, stride or width");
    }
    const std::size_t hp = h + 2 * spec.padding, wp = w + 2 * spec.padding;
    if (spec.kernel > hp || spec.kernel > wp) {
      throw ShapeError("layer " + std::to_string(l) + " kernel " + std::to_string(spec.kernel) +
                       " exceeds its padded " + std::to_string(hp) + "x" + std::to_string(wp) + " input");
    }
    h = (hp - spec.kernel) / spec.stride + 1;
    w = (wp - spec.kernel) / spec.stride + 1;
    c = spec.out_channels;
    if (spec.pool) {
      if (h < 2 || w < 2) {
        throw ShapeError("layer " + std::to_string(l) + " pools a " + std::to_string(h) + "x" +
                         std::to_string(w) + " map");
      }
      h /= 2;
      w /= 2;
    }
  }
  return {h, w, c};
}

ConvStackParams ConvStackParams::init(const ConvStackConfig& config, std::uint64_t seed) {
  config.output_shape();
  ConvStackParams params;
  params.config = config;
  std::size_t cin = config.in_channels;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    const ConvLayerSpec& spec = config.layers[l];
    const std::size_t fan_in = spec.kernel * spec.kernel * cin;
    const std::string prefix = "backbone.conv" + std::to_string(l);
    params.kernels.push_back(init_uniform({spec.kernel, spec.kernel, cin, spec.out_channels},
                                          fan_in, seed, prefix + ".kernel"));
    params.biases.push_back(init_uniform({spec.out_channels}, fan_in, seed, prefix + ".bias"));
    cin = spec.out_channels;
  }
  return params;
}

ad::Var conv_forward(ad::Graph& graph, ad::Var image, ConvStackParams& params) {
  const ConvStackConfig& cfg = params.config;
  const Shape expected{cfg.in_height, cfg.in_width, cfg.in_channels};
  if (image.shape() != expected) {
    throw ShapeError("image shape " + shape_str(image.shape()) + " does not match configured " +
                     shape_str(expected));
  }
  ad::Var x = image;
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
    x = ad::conv2d(x, graph.parameter(params.kernels[l]), graph.parameter(params.biases[l]),
                   cfg.layers[l].stride, cfg.layers[l].padding);
    x = ad::relu(x);
    if (cfg.layers[l].pool) x = ad::max_pool2(x);
  }
  return x;
}

ActivationMap conv_forward(const Tensor& image, ConvStackParams& params) {
  ad::Graph graph;
  ad::Var out = conv_forward(graph, graph.constant(image), params);
  return make_activation_map(out.value(), Provenance::conv);
}

namespace {

std::size_t read_pnm_int(std::istream& in) {
  int ch = in.get();
  while (in && (std::isspace(ch) || ch == '#')) {
    if (ch == '#') {
      while (in && ch != '\n') ch = in.get();
    }
    ch = in.get();
  }
  std::size_t value = 0;
  bool any = false;
  while (in && std::isdigit(ch)) {
    value = value * 10 + static_cast<std::size_t>(ch - '0');
    any = true;
    ch = in.get();
  }
  if (!any) throw FormatError("malformed PNM header");
  return value;
}

}  // namespace

Tensor load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw FormatError(path + ": only binary PGM (P5) and PPM (P6) are supported");
  }
  const std::size_t channels = magic[1] == '5' ? 1 : 3;
  const std::size_t width = read_pnm_int(in);
  const std::size_t height = read_pnm_int(in);
  const std::size_t maxval = read_pnm_int(in);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255) {
    throw FormatError(path + ": unsupported PNM geometry or depth");
  }
  std::vector<unsigned char> raw(width * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(path + ": truncated pixel data, expected " + std::to_string(raw.size()) +
                      " bytes, got " + std::to_string(in.gcount()));
  }
  Tensor image({height, width, channels});
  for (std::size_t i = 0; i < raw.size(); ++i) {
    image[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
  }
  return image;
}

}  // namespace rnnha
