#include "rnnha/attention.hpp"

#include <algorithm>

#include "rnnha/errors.hpp"

namespace rnnha {

TransformerNetParams TransformerNetParams::init(std::size_t hidden_dim,
                                                std::size_t transformer_dim,
                                                std::size_t descriptor_dim, std::uint64_t seed,
                                                const std::string& prefix) {
  TransformerNetParams p;
  p.hidden_weight =
      init_uniform({transformer_dim, hidden_dim}, hidden_dim, seed, prefix + ".hidden_weight");
  p.hidden_bias = init_uniform({transformer_dim}, hidden_dim, seed, prefix + ".hidden_bias");
  p.out_weight =
      init_uniform({descriptor_dim, transformer_dim}, transformer_dim, seed, prefix + ".out_weight");
  p.out_bias = init_uniform({descriptor_dim}, transformer_dim, seed, prefix + ".out_bias");
  return p;
}

void TransformerNetParams::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  out.push_back({prefix + ".hidden_weight", &hidden_weight});
  out.push_back({prefix + ".hidden_bias", &hidden_bias});
  out.push_back({prefix + ".out_weight", &out_weight});
  out.push_back({prefix + ".out_bias", &out_bias});
}

ad::Var guidance_signal(ad::Graph& graph, ad::Var o1, TransformerNetParams& params) {
  if (o1.shape() != Shape{params.hidden_weight.dim(1)}) {
    throw ShapeError("transformer network expects a " +
                     std::to_string(params.hidden_weight.dim(1)) + "-dim input, got " +
                     shape_str(o1.shape()));
  }
  ad::Var hidden = ad::relu(ad::matmul(graph.parameter(params.hidden_weight), o1) +
                            graph.parameter(params.hidden_bias));
  return ad::matmul(graph.parameter(params.out_weight), hidden) +
         graph.parameter(params.out_bias);
}

ad::Var attention_scores(ad::Var w, ad::Var map) {
  const Shape& ms = map.shape();
  if (ms.size() != 3 || w.shape() != Shape{ms[2]}) {
    throw ShapeError("guidance signal " + shape_str(w.shape()) +
                     " does not match descriptors of " + shape_str(ms));
  }
  ad::Var flat = ad::reshape(map, {ms[0] * ms[1], ms[2]});
  return ad::reshape(ad::softplus(ad::matmul(flat, w)), {ms[0], ms[1]});
}

ad::Var normalize_scores(ad::Var scores, double epsilon) {
  if (!(epsilon > 0.0)) throw NumericError("attention epsilon must be positive");
  ad::Var shifted = ad::shift(scores, epsilon);
  return shifted / ad::sum(shifted);
}

ad::Var attend(ad::Var weights, ad::Var map) { return ad::scale_locations(weights, map); }

ad::Var attention_embedding(ad::Var attended) { return ad::global_average_pool(attended); }

std::size_t AttentionMap::argmax() const {
  return static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) -
                                  weights.begin());
}

}  // namespace rnnha
