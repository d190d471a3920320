#include "rnnha/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rnnha/errors.hpp"

namespace rnnha::ad {

namespace {

thread_local std::optional<Op> g_fault_op;
thread_local double g_fault_factor = 1.0;

Graph& same_graph(Var a, Var b) {
  if (!a.valid() || a.graph() != b.graph()) {
    throw ShapeError("operands belong to different graphs");
  }
  return *a.graph();
}

Graph& graph_of(Var a) {
  if (!a.valid()) throw ShapeError("operation on an empty Var");
  return *a.graph();
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::softplus: return "softplus";
    case Op::relu: return "relu";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::global_average_pool: return "global_average_pool";
    case Op::cross_entropy: return "cross_entropy";
    case Op::sum: return "sum";
    case Op::reshape: return "reshape";
    case Op::scale_locations: return "scale_locations";
    case Op::conv2d: return "conv2d";
    case Op::max_pool: return "max_pool";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!graph_) throw ShapeError("empty Var has no value");
  return graph_->value(id_);
}

double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar of shape " + shape_str(v.shape()));
  return v[0];
}

std::span<const double> Var::grad() const {
  if (!graph_) throw ShapeError("empty Var has no gradient");
  return graph_->grad(id_);
}

Var Graph::constant(Tensor value) {
  return record(Op::constant, {}, std::move(value), nullptr);
}

Var Graph::parameter(Tensor& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Var v = record(Op::parameter, {}, param, nullptr);
  nodes_.back().param = &param;
  param_nodes_.emplace(&param, v.id());
  return v;
}

Var Graph::record(Op op, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(value), {}, std::move(backward), nullptr});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var root, double seed) {
  if (root.graph() != this) throw ShapeError("backward root belongs to another graph");
  if (value(root.id()).size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_str(value(root.id()).shape()));
  }
  for (Node& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[root.id()].grad[0] = seed;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (g_fault_op && n.op == *g_fault_op) {
      for (double& g : n.grad) g *= g_fault_factor;
    }
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.param && n.param->requires_grad()) {
      std::span<double> dst = n.param->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.dim(1) != B.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(A.shape()) + " vs " +
                     shape_str(B.shape()));
  }
  const std::size_t m = A.dim(0), k = A.dim(1);
  const std::size_t n = B.rank() == 2 ? B.dim(1) : 1;
  Tensor out(B.rank() == 2 ? Shape{m, n} : Shape{m});
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return g.record(Op::matmul, {a.id(), b.id()}, std::move(out),
                  [m, k, n](Graph& gr, std::size_t self) {
                    const std::size_t ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
                    const double* G = gr.grad(self).data();
                    const double* pa = gr.value(ia).data().data();
                    const double* pb = gr.value(ib).data().data();
                    double* ga = gr.grad_buffer(ia).data();
                    // dA = G·Bᵀ
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * pb[p * n + j];
                        ga[i * k + p] += acc;
                      }
                    }
                    double* gb = gr.grad_buffer(ib).data();
                    // dB = Aᵀ·G
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        const double av = pa[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
                      }
                    }
                  });
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Floored at the smallest subnormal so the range stays strictly positive even
// where exp underflows.
double softplus_value(double x) {
  const double v = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  return std::max(v, std::numeric_limits<double>::denorm_min());
}

Var unary(UnaryKind kind, Var x) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  if (!X.all_finite()) throw NumericError("non-finite input to elementwise op");
  Tensor out(X.shape());
  Op op = Op::sigmoid;
  switch (kind) {
    case UnaryKind::sigmoid:
      op = Op::sigmoid;
      for (std::size_t i = 0; i < X.size(); ++i) out[i] = sigmoid_value(X[i]);
      break;
    case UnaryKind::tanh:
      op = Op::tanh;
      for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::tanh(X[i]);
      break;
    case UnaryKind::softplus:
      op = Op::softplus;
      for (std::size_t i = 0; i < X.size(); ++i) out[i] = softplus_value(X[i]);
      break;
    case UnaryKind::relu:
      op = Op::relu;
      for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
      break;
  }
  return g.record(op, {x.id()}, std::move(out), [kind](Graph& gr, std::size_t self) {
    const std::size_t in = gr.inputs(self)[0];
    std::span<const double> G = gr.grad(self);
    const Tensor& X = gr.value(in);
    const Tensor& Y = gr.value(self);
    std::span<double> gx = gr.grad_buffer(in);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case UnaryKind::sigmoid: d = Y[i] * (1.0 - Y[i]); break;
        case UnaryKind::tanh: d = 1.0 - Y[i] * Y[i]; break;
        case UnaryKind::softplus: d = sigmoid_value(X[i]); break;
        case UnaryKind::relu: d = X[i] > 0.0 ? 1.0 : 0.0; break;
      }
      gx[i] += G[i] * d;
    }
  });
}

Var sigmoid(Var x) { return unary(UnaryKind::sigmoid, x); }
Var tanh(Var x) { return unary(UnaryKind::tanh, x); }
Var softplus(Var x) { return unary(UnaryKind::softplus, x); }
Var relu(Var x) { return unary(UnaryKind::relu, x); }

Var binary(BinaryKind kind, Var x, Var y) {
  Graph& g = same_graph(x, y);
  const Tensor& X = x.value();
  const Tensor& Y = y.value();
  // With two single-element operands the higher-rank shape survives.
  const bool x_scalar = is_scalar(X) && X.shape() != Y.shape() &&
                        (!is_scalar(Y) || X.rank() < Y.rank());
  const bool y_scalar = is_scalar(Y) && X.shape() != Y.shape() && !x_scalar;
  if (X.shape() != Y.shape() && !x_scalar && !y_scalar) {
    throw ShapeError("elementwise shape mismatch: " + shape_str(X.shape()) + " vs " +
                     shape_str(Y.shape()));
  }
  const Shape& out_shape = x_scalar ? Y.shape() : X.shape();
  Tensor out(out_shape);
  auto xv = [&](std::size_t i) { return x_scalar ? X[0] : X[i]; };
  auto yv = [&](std::size_t i) { return y_scalar ? Y[0] : Y[i]; };
  Op op = Op::add;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case BinaryKind::add: out[i] = xv(i) + yv(i); op = Op::add; break;
      case BinaryKind::sub: out[i] = xv(i) - yv(i); op = Op::sub; break;
      case BinaryKind::mul: out[i] = xv(i) * yv(i); op = Op::mul; break;
      case BinaryKind::div: out[i] = xv(i) / yv(i); op = Op::div; break;
    }
  }
  return g.record(op, {x.id(), y.id()}, std::move(out),
                  [kind, x_scalar, y_scalar](Graph& gr, std::size_t self) {
                    const std::size_t ix = gr.inputs(self)[0], iy = gr.inputs(self)[1];
                    std::span<const double> G = gr.grad(self);
                    const Tensor& X = gr.value(ix);
                    const Tensor& Y = gr.value(iy);
                    auto xv = [&](std::size_t i) { return x_scalar ? X[0] : X[i]; };
                    auto yv = [&](std::size_t i) { return y_scalar ? Y[0] : Y[i]; };
                    {
                      std::span<double> gx = gr.grad_buffer(ix);
                      for (std::size_t i = 0; i < G.size(); ++i) {
                        double d = 0.0;
                        switch (kind) {
                          case BinaryKind::add: d = G[i]; break;
                          case BinaryKind::sub: d = G[i]; break;
                          case BinaryKind::mul: d = G[i] * yv(i); break;
                          case BinaryKind::div: d = G[i] / yv(i); break;
                        }
                        gx[x_scalar ? 0 : i] += d;
                      }
                    }
                    std::span<double> gy = gr.grad_buffer(iy);
                    for (std::size_t i = 0; i < G.size(); ++i) {
                      double d = 0.0;
                      switch (kind) {
                        case BinaryKind::add: d = G[i]; break;
                        case BinaryKind::sub: d = -G[i]; break;
                        case BinaryKind::mul: d = G[i] * xv(i); break;
                        case BinaryKind::div: d = -G[i] * xv(i) / (yv(i) * yv(i)); break;
                      }
                      gy[y_scalar ? 0 : i] += d;
                    }
                  });
}

Var operator+(Var x, Var y) { return binary(BinaryKind::add, x, y); }
Var operator-(Var x, Var y) { return binary(BinaryKind::sub, x, y); }
Var operator*(Var x, Var y) { return binary(BinaryKind::mul, x, y); }
Var operator/(Var x, Var y) { return binary(BinaryKind::div, x, y); }

Var scale(Var x, double factor) {
  return binary(BinaryKind::mul, x, graph_of(x).constant(Tensor::scalar(factor)));
}

Var shift(Var x, double offset) {
  return binary(BinaryKind::add, x, graph_of(x).constant(Tensor::scalar(offset)));
}

Var global_average_pool(Var x) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  if (X.rank() != 3) {
    throw ShapeError("global_average_pool expects [h x w x d], got " + shape_str(X.shape()));
  }
  const std::size_t cells = X.dim(0) * X.dim(1), d = X.dim(2);
  Tensor out({d});
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < d; ++k) out[k] += X[c * d + k];
  }
  const double inv = 1.0 / static_cast<double>(cells);
  for (std::size_t k = 0; k < d; ++k) out[k] *= inv;
  return g.record(Op::global_average_pool, {x.id()}, std::move(out),
                  [cells, d, inv](Graph& gr, std::size_t self) {
                    const std::size_t in = gr.inputs(self)[0];
                    std::span<const double> G = gr.grad(self);
                    std::span<double> gx = gr.grad_buffer(in);
                    for (std::size_t c = 0; c < cells; ++c) {
                      for (std::size_t k = 0; k < d; ++k) gx[c * d + k] += G[k] * inv;
                    }
                  });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  Graph& g = graph_of(logits);
  const Tensor& Z = logits.value();
  if (Z.rank() != 1) {
    throw ShapeError("cross entropy expects rank-1 logits, got " + shape_str(Z.shape()));
  }
  const std::size_t classes = Z.size();
  if (label >= classes) {
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(classes) + " classes");
  }
  if (!Z.all_finite()) throw NumericError("non-finite logits");
  const double zmax = *std::max_element(Z.data().begin(), Z.data().end());
  std::vector<double> prob(classes);
  double total = 0.0;
  for (std::size_t j = 0; j < classes; ++j) {
    prob[j] = std::exp(Z[j] - zmax);
    total += prob[j];
  }
  for (double& p : prob) p /= total;
  const double loss = std::log(total) - (Z[label] - zmax);
  return g.record(Op::cross_entropy, {logits.id()}, Tensor::scalar(loss),
                  [prob = std::move(prob), label](Graph& gr, std::size_t self) {
                    const std::size_t in = gr.inputs(self)[0];
                    const double G = gr.grad(self)[0];
                    std::span<double> gz = gr.grad_buffer(in);
                    for (std::size_t j = 0; j < prob.size(); ++j) {
                      gz[j] += G * (prob[j] - (j == label ? 1.0 : 0.0));
                    }
                  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return g.record(Op::sum, {x.id()}, Tensor::scalar(total), [](Graph& gr, std::size_t self) {
    const std::size_t in = gr.inputs(self)[0];
    const double G = gr.grad(self)[0];
    for (double& v : gr.grad_buffer(in)) v += G;
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  return g.record(Op::reshape, {x.id()}, std::move(out), [](Graph& gr, std::size_t self) {
    const std::size_t in = gr.inputs(self)[0];
    std::span<const double> G = gr.grad(self);
    std::span<double> gx = gr.grad_buffer(in);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += G[i];
  });
}

Var scale_locations(Var weights, Var x) {
  Graph& g = same_graph(weights, x);
  const Tensor& A = weights.value();
  const Tensor& X = x.value();
  if (X.rank() != 3 || A.rank() != 2 || A.dim(0) != X.dim(0) || A.dim(1) != X.dim(1)) {
    throw ShapeError("attention grid " + shape_str(A.shape()) +
                     " does not match activation map " + shape_str(X.shape()));
  }
  const std::size_t cells = A.size(), d = X.dim(2);
  Tensor out(X.shape());
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < d; ++k) out[c * d + k] = A[c] * X[c * d + k];
  }
  return g.record(Op::scale_locations, {weights.id(), x.id()}, std::move(out),
                  [cells, d](Graph& gr, std::size_t self) {
                    const std::size_t ia = gr.inputs(self)[0], ix = gr.inputs(self)[1];
                    std::span<const double> G = gr.grad(self);
                    const Tensor& A = gr.value(ia);
                    const Tensor& X = gr.value(ix);
                    {
                      std::span<double> ga = gr.grad_buffer(ia);
                      for (std::size_t c = 0; c < cells; ++c) {
                        double acc = 0.0;
                        for (std::size_t k = 0; k < d; ++k) acc += G[c * d + k] * X[c * d + k];
                        ga[c] += acc;
                      }
                    }
                    std::span<double> gx = gr.grad_buffer(ix);
                    for (std::size_t c = 0; c < cells; ++c) {
                      for (std::size_t k = 0; k < d; ++k) gx[c * d + k] += G[c * d + k] * A[c];
                    }
                  });
}

Var conv2d(Var x, Var kernel, Var bias, std::size_t stride, std::size_t padding) {
  Graph& g = same_graph(x, kernel);
  same_graph(x, bias);
  const Tensor& X = x.value();
  const Tensor& K = kernel.value();
  const Tensor& B = bias.value();
  if (stride == 0) throw ShapeError("convolution stride must be positive");
  if (X.rank() != 3 || K.rank() != 4 || K.dim(2) != X.dim(2) || B.rank() != 1 ||
      B.dim(0) != K.dim(3)) {
    throw ShapeError("conv2d shape mismatch: input " + shape_str(X.shape()) + ", kernel " +
                     shape_str(K.shape()) + ", bias " + shape_str(B.shape()));
  }
  const std::size_t H = X.dim(0), W = X.dim(1), cin = X.dim(2);
  const std::size_t kh = K.dim(0), kw = K.dim(1), cout = K.dim(3);
  const std::size_t Hp = H + 2 * padding, Wp = W + 2 * padding;
  if (kh > Hp || kw > Wp) {
    throw ShapeError("kernel " + shape_str(K.shape()) + " larger than padded input " +
                     shape_str(X.shape()));
  }
  const std::size_t ho = (Hp - kh) / stride + 1, wo = (Wp - kw) / stride + 1;
  // Padded coordinate p maps to input row p - padding; out-of-range cells read zero.
  auto inside = [=](std::size_t pi, std::size_t pj) {
    return pi >= padding && pj >= padding && pi - padding < H && pj - padding < W;
  };
  Tensor out({ho, wo, cout});
  for (std::size_t oi = 0; oi < ho; ++oi) {
    for (std::size_t oj = 0; oj < wo; ++oj) {
      double* o = &out.at(oi, oj, 0);
      for (std::size_t co = 0; co < cout; ++co) o[co] = B[co];
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const std::size_t pi = oi * stride + u, pj = oj * stride + v;
          if (!inside(pi, pj)) continue;
          const double* xin = X.data().data() + ((pi - padding) * W + (pj - padding)) * cin;
          const double* kk = &K.data()[((u * kw + v) * cin) * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t co = 0; co < cout; ++co) o[co] += xin[ci] * kk[ci * cout + co];
          }
        }
      }
    }
  }
  return g.record(
      Op::conv2d, {x.id(), kernel.id(), bias.id()}, std::move(out),
      [=](Graph& gr, std::size_t self) {
        const auto& in = gr.inputs(self);
        const std::size_t ix = in[0], ik = in[1], ib = in[2];
        const double* G = gr.grad(self).data();
        const Tensor& X = gr.value(ix);
        const Tensor& K = gr.value(ik);
        double* gx = gr.grad_buffer(ix).data();
        double* gk = gr.grad_buffer(ik).data();
        double* gb = gr.grad_buffer(ib).data();
        for (std::size_t oi = 0; oi < ho; ++oi) {
          for (std::size_t oj = 0; oj < wo; ++oj) {
            const double* go = G + (oi * wo + oj) * cout;
            for (std::size_t co = 0; co < cout; ++co) gb[co] += go[co];
            for (std::size_t u = 0; u < kh; ++u) {
              for (std::size_t v = 0; v < kw; ++v) {
                const std::size_t pi = oi * stride + u, pj = oj * stride + v;
                if (!inside(pi, pj)) continue;
                const std::size_t xoff = ((pi - padding) * W + (pj - padding)) * cin;
                const std::size_t koff = ((u * kw + v) * cin) * cout;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  double acc = 0.0;
                  const double xv = X[xoff + ci];
                  for (std::size_t co = 0; co < cout; ++co) {
                    acc += go[co] * K[koff + ci * cout + co];
                    gk[koff + ci * cout + co] += go[co] * xv;
                  }
                  gx[xoff + ci] += acc;
                }
              }
            }
          }
        }
      });
}

Var max_pool2(Var x) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  if (X.rank() != 3 || X.dim(0) < 2 || X.dim(1) < 2) {
    throw ShapeError("2x2 max pooling needs at least 2x2 spatial input, got " +
                     shape_str(X.shape()));
  }
  const std::size_t W = X.dim(1), C = X.dim(2);
  const std::size_t ho = X.dim(0) / 2, wo = W / 2;
  Tensor out({ho, wo, C});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t i = 0; i < ho; ++i) {
    for (std::size_t j = 0; j < wo; ++j) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((2 * i) * W + 2 * j) * C + c;
        for (std::size_t u = 0; u < 2; ++u) {
          for (std::size_t v = 0; v < 2; ++v) {
            const std::size_t idx = ((2 * i + u) * W + 2 * j + v) * C + c;
            if (X[idx] > X[best]) best = idx;
          }
        }
        const std::size_t o = (i * wo + j) * C + c;
        out[o] = X[best];
        argmax[o] = best;
      }
    }
  }
  return g.record(Op::max_pool, {x.id()}, std::move(out),
                  [argmax = std::move(argmax)](Graph& gr, std::size_t self) {
                    const std::size_t in = gr.inputs(self)[0];
                    std::span<const double> G = gr.grad(self);
                    std::span<double> gx = gr.grad_buffer(in);
                    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += G[o];
                  });
}

namespace testing {

void inject_backward_fault(std::optional<Op> op, double factor) {
  g_fault_op = op;
  g_fault_factor = factor;
}

}  // namespace testing

}  // namespace rnnha::ad
