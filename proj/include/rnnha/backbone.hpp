#ifndef RNNHA_BACKBONE_HPP_
#define RNNHA_BACKBONE_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rnnha/autodiff.hpp"
#include "rnnha/tensor.hpp"

namespace rnnha {

enum class Provenance { conv, ingested };

/// Order-3 activation tensor [h x w x d]; location (i,j) holds one d-dim descriptor.
struct ActivationMap {
  Tensor tensor;
  Provenance provenance = Provenance::ingested;

  std::size_t height() const { return tensor.dim(0); }
  std::size_t width() const { return tensor.dim(1); }
  std::size_t depth() const { return tensor.dim(2); }
  std::size_t cells() const { return height() * width(); }
};

ActivationMap make_activation_map(Tensor tensor, Provenance provenance);

/// Row-major (i outer, j inner) list of the h·w descriptors.
std::vector<std::vector<double>> to_descriptors(const ActivationMap& map);
ActivationMap from_descriptors(const std::vector<std::vector<double>>& descriptors,
                               std::size_t height, std::size_t width,
                               Provenance provenance = Provenance::ingested);

struct ConvLayerSpec {
  std::size_t kernel = 3;
  std::size_t out_channels = 8;
  std::size_t stride = 1;
  std::size_t padding = 0;  // zero cells added on every border
  bool pool = true;
};

/// conv -> ReLU -> (optional) 2x2 max pool, repeated per layer.
struct ConvStackConfig {
  std::size_t in_height = 16;
  std::size_t in_width = 16;
  std::size_t in_channels = 1;
  std::vector<ConvLayerSpec> layers;

  /// Three pooled 3x3 same-size layers with widths 8,16,`depth`; 16x16 in gives 2x2 out.
  static ConvStackConfig standard(std::size_t height, std::size_t width, std::size_t channels,
                                  std::size_t depth = 32);
  /// [h x w x d] of the produced activation map; throws ShapeError if empty.
  Shape output_shape() const;
};

struct ConvStackParams {
  ConvStackConfig config;
  std::vector<Tensor> kernels;  // [k x k x c_in x c_out]
  std::vector<Tensor> biases;   // [c_out]

  static ConvStackParams init(const ConvStackConfig& config, std::uint64_t seed);
};

ad::Var conv_forward(ad::Graph& graph, ad::Var image, ConvStackParams& params);
/// Value-only forward; the result is tagged Provenance::conv.
ActivationMap conv_forward(const Tensor& image, ConvStackParams& params);

/// Reads a binary 8-bit PGM (P5) or PPM (P6) into [H x W x C] scaled to [0,1].
Tensor load_pnm(const std::string& path);

}  // namespace rnnha

#endif  // RNNHA_BACKBONE_HPP_
