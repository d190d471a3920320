#include "rnnha/gru.hpp"

#include "rnnha/errors.hpp"

namespace rnnha {

GruParams GruParams::init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                          const std::string& prefix) {
  // Matrices use their column count as fan-in; biases use the hidden size.
  auto mat = [&](std::size_t cols, const char* name) {
    return init_uniform({hidden_dim, cols}, cols, seed, prefix + "." + name);
  };
  auto vec = [&](const char* name) {
    return init_uniform({hidden_dim}, hidden_dim, seed, prefix + "." + name);
  };
  GruParams p;
  p.input_update = mat(input_dim, "input_update");
  p.hidden_update = mat(hidden_dim, "hidden_update");
  p.bias_update = vec("bias_update");
  p.input_reset = mat(input_dim, "input_reset");
  p.hidden_reset = mat(hidden_dim, "hidden_reset");
  p.bias_reset = vec("bias_reset");
  p.input_candidate = mat(input_dim, "input_candidate");
  p.hidden_candidate = mat(hidden_dim, "hidden_candidate");
  p.bias_candidate = vec("bias_candidate");
  return p;
}

void GruParams::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  out.push_back({prefix + ".input_update", &input_update});
  out.push_back({prefix + ".hidden_update", &hidden_update});
  out.push_back({prefix + ".bias_update", &bias_update});
  out.push_back({prefix + ".input_reset", &input_reset});
  out.push_back({prefix + ".hidden_reset", &hidden_reset});
  out.push_back({prefix + ".bias_reset", &bias_reset});
  out.push_back({prefix + ".input_candidate", &input_candidate});
  out.push_back({prefix + ".hidden_candidate", &hidden_candidate});
  out.push_back({prefix + ".bias_candidate", &bias_candidate});
}

GruState gru_step(ad::Graph& graph, ad::Var x, ad::Var h_prev, GruParams& params) {
  if (x.shape() != Shape{params.input_dim()}) {
    throw ShapeError("GRU input " + shape_str(x.shape()) + " does not match input size " +
                     std::to_string(params.input_dim()));
  }
  if (h_prev.shape() != Shape{params.hidden_dim()}) {
    throw ShapeError("GRU state " + shape_str(h_prev.shape()) + " does not match hidden size " +
                     std::to_string(params.hidden_dim()));
  }
  auto p = [&](Tensor& t) { return graph.parameter(t); };
  ad::Var z = ad::sigmoid(ad::matmul(p(params.input_update), x) +
                          ad::matmul(p(params.hidden_update), h_prev) + p(params.bias_update));
  ad::Var r = ad::sigmoid(ad::matmul(p(params.input_reset), x) +
                          ad::matmul(p(params.hidden_reset), h_prev) + p(params.bias_reset));
  ad::Var n = ad::tanh(ad::matmul(p(params.input_candidate), x) +
                       r * ad::matmul(p(params.hidden_candidate), h_prev) +
                       p(params.bias_candidate));
  ad::Var one = graph.constant(Tensor::scalar(1.0));
  ad::Var h = (one - z) * n + z * h_prev;
  return GruState{h, z, r, n};
}

ClassifierHead ClassifierHead::init(std::size_t classes, std::size_t hidden_dim,
                                    std::uint64_t seed, const std::string& prefix) {
  return ClassifierHead{init_uniform({classes, hidden_dim}, hidden_dim, seed, prefix + ".weight"),
                        init_uniform({classes}, hidden_dim, seed, prefix + ".bias")};
}

void ClassifierHead::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

ad::Var classify(ad::Graph& graph, ad::Var output, ClassifierHead& head) {
  if (output.shape() != Shape{head.weight.dim(1)}) {
    throw ShapeError("classifier expects a " + std::to_string(head.weight.dim(1)) +
                     "-dim output, got " + shape_str(output.shape()));
  }
  return ad::matmul(graph.parameter(head.weight), output) + graph.parameter(head.bias);
}

LossReport HierarchicalLoss::report() const {
  return LossReport{total.item(), model.item(), vehicle.item()};
}

HierarchicalLoss hierarchical_loss(ad::Var logits_model, std::size_t model_label,
                                   ad::Var logits_vehicle, std::size_t vehicle_label) {
  ad::Var model = ad::softmax_cross_entropy(logits_model, model_label);
  ad::Var vehicle = ad::softmax_cross_entropy(logits_vehicle, vehicle_label);
  return HierarchicalLoss{model + vehicle, model, vehicle};
}

LossReport mean_loss(const std::vector<LossReport>& reports) {
  LossReport mean;
  if (reports.empty()) return mean;
  for (const LossReport& r : reports) {
    mean.model += r.model;
    mean.vehicle += r.vehicle;
  }
  const double n = static_cast<double>(reports.size());
  mean.model /= n;
  mean.vehicle /= n;
  mean.total = mean.model + mean.vehicle;
  return mean;
}

Unrolled unroll(ad::Graph& graph, ad::Var x1, const SecondInputProvider& provider,
                GruParams& params) {
  ad::Var h0 = graph.constant(Tensor({params.hidden_dim()}, 0.0));
  GruState first = gru_step(graph, x1, h0, params);
  ad::Var x2 = provider(first.h);
  if (x2.shape() != Shape{params.input_dim()}) {
    throw ShapeError("second-step input " + shape_str(x2.shape()) + " does not match GRU input " +
                     std::to_string(params.input_dim()));
  }
  GruState second = gru_step(graph, x2, first.h, params);
  return Unrolled{first, second};
}

}  // namespace rnnha
