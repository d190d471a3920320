#ifndef RNNHA_ATTENTION_HPP_
#define RNNHA_ATTENTION_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rnnha/autodiff.hpp"
#include "rnnha/params.hpp"

namespace rnnha {

inline constexpr double kAttentionEpsilon = 0.1;

/// Two fully connected layers with a ReLU between them, mapping o1 to w.
struct TransformerNetParams {
  Tensor hidden_weight;  // [Ht x H]
  Tensor hidden_bias;    // [Ht]
  Tensor out_weight;     // [d x Ht]
  Tensor out_bias;       // [d]

  static TransformerNetParams init(std::size_t hidden_dim, std::size_t transformer_dim,
                                   std::size_t descriptor_dim, std::uint64_t seed,
                                   const std::string& prefix = "transformer");
  void collect(std::vector<NamedParam>& out, const std::string& prefix = "transformer");
};

/// w = W2 relu(W1 o1 + b1) + b2
ad::Var guidance_signal(ad::Graph& graph, ad::Var o1, TransformerNetParams& params);

/// s(i,j) = softplus(wᵀ f(i,j)) over the grid of `map` [h x w x d]; returns [h x w].
ad::Var attention_scores(ad::Var w, ad::Var map);

/// a(i,j) = (s(i,j) + ε) / Σ (s + ε)
ad::Var normalize_scores(ad::Var scores, double epsilon = kAttentionEpsilon);

/// f̂(i,j) = a(i,j) · f(i,j)
ad::Var attend(ad::Var weights, ad::Var map);

/// x2 = (1 / hw) Σ f̂(i,j)
ad::Var attention_embedding(ad::Var attended);

/// Plain-value view of one image's attention.
struct AttentionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> scores;   // s, row-major
  std::vector<double> weights;  // a, row-major
  double epsilon = kAttentionEpsilon;

  std::size_t argmax() const;
};

}  // namespace rnnha

#endif  // RNNHA_ATTENTION_HPP_
