#ifndef RNNHA_GRU_HPP_
#define RNNHA_GRU_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rnnha/autodiff.hpp"
#include "rnnha/params.hpp"

namespace rnnha {

/// Gate weights of a GRU cell: update (z), reset (r) and candidate (n).
struct GruParams {
  Tensor input_update, hidden_update, bias_update;           // [H x D], [H x H], [H]
  Tensor input_reset, hidden_reset, bias_reset;
  Tensor input_candidate, hidden_candidate, bias_candidate;

  static GruParams init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                        const std::string& prefix = "gru");
  std::size_t input_dim() const { return input_update.dim(1); }
  std::size_t hidden_dim() const { return input_update.dim(0); }
  void collect(std::vector<NamedParam>& out, const std::string& prefix = "gru");
};

struct GruState {
  ad::Var h;
  ad::Var z;
  ad::Var r;
  ad::Var n;
};

/**
 * z = σ(Wxz x + Whz h + bz), r = σ(Wxr x + Whr h + br),
 * n = tanh(Wxg x + r ⊙ (Whg h) + bg), h' = (1 - z) ⊙ n + z ⊙ h.
 */
GruState gru_step(ad::Graph& graph, ad::Var x, ad::Var h_prev, GruParams& params);

struct ClassifierHead {
  Tensor weight;  // [C x H]
  Tensor bias;    // [C]

  static ClassifierHead init(std::size_t classes, std::size_t hidden_dim, std::uint64_t seed,
                             const std::string& prefix);
  std::size_t classes() const { return weight.dim(0); }
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

ad::Var classify(ad::Graph& graph, ad::Var output, ClassifierHead& head);

/// Values in nats; total is always model + vehicle.
struct LossReport {
  double total = 0.0;
  double model = 0.0;
  double vehicle = 0.0;
};

struct HierarchicalLoss {
  ad::Var total;
  ad::Var model;
  ad::Var vehicle;
  LossReport report() const;
};

HierarchicalLoss hierarchical_loss(ad::Var logits_model, std::size_t model_label,
                                   ad::Var logits_vehicle, std::size_t vehicle_label);

/// Batch mean of the branch losses; total is formed from the two means.
LossReport mean_loss(const std::vector<LossReport>& reports);

/// Produces x2 from o1 (attention, or a pass-through for the ablation).
using SecondInputProvider = std::function<ad::Var(ad::Var first_output)>;

struct Unrolled {
  GruState first;
  GruState second;
  ad::Var o1() const { return first.h; }
  ad::Var o2() const { return second.h; }
};

/// Two-step unroll (coarse level, then fine) from a zero initial state with shared weights.
Unrolled unroll(ad::Graph& graph, ad::Var x1, const SecondInputProvider& provider,
                GruParams& params);

}  // namespace rnnha

#endif  // RNNHA_GRU_HPP_
