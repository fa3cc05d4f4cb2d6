#include "trustalign/numerics/graph.hpp"

#include <algorithm>
#include <cmath>

#include "trustalign/errors.hpp"

namespace trustalign::numerics {

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, {}});
  return Var(nodes_.size() - 1);
}

Var Graph::parameter(std::string name, Tensor value) {
  for (const auto& n : nodes_) {
    require(n.param_name != name, "parameter '" + name + "' bound twice");
  }
  nodes_.push_back(Node{std::move(value), {}, {}, true, std::move(name)});
  return Var(nodes_.size() - 1);
}

std::map<std::string, Var> Graph::bind(const ParameterSet& params) {
  std::map<std::string, Var> vars;
  for (const auto& e : params.entries()) {
    vars[e.name] = e.trainable ? parameter(e.name, e.value) : constant(e.value);
  }
  return vars;
}

Var Graph::record(std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  for (Var in : inputs) {
    require(in.valid() && in.id() < nodes_.size(), "graph input is not a recorded value");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

const Graph::Node& Graph::node(Var v) const {
  require(v.valid() && v.id() < nodes_.size(), "invalid graph handle");
  return nodes_[v.id()];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

GradientMap Graph::backward(Var loss) const {
  const Node& root = node(loss);
  require(root.value.size() == 1,
          "backward needs a scalar loss, got shape " + shape_string(root.value.shape()));

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has_grad(nodes_.size(), false);
  grads[loss.id()] = Tensor(root.value.shape(), 1.0);
  has_grad[loss.id()] = true;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!has_grad[id] || !n.requires_grad || !n.backward) continue;
    std::vector<Tensor*> input_grads(n.inputs.size(), nullptr);
    std::vector<const Tensor*> input_values(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t in = n.inputs[k];
      input_values[k] = &nodes_[in].value;
      if (!nodes_[in].requires_grad) continue;
      if (!has_grad[in]) {
        grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
        has_grad[in] = true;
      }
      input_grads[k] = &grads[in];
    }
    n.backward(BackwardContext{grads[id], n.value, input_values, input_grads});
  }

  GradientMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.param_name.empty()) continue;
    out.emplace(n.param_name, has_grad[id] ? grads[id] : Tensor(n.value.shape(), 0.0));
  }
  return out;
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softplus") return Activation::softplus;
  if (name == "silu") return Activation::silu;
  throw ValidationError("unknown activation '" + name + "'");
}

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softplus: return "softplus";
    case Activation::silu: return "silu";
  }
  return "identity";
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activation_derivative(Activation activation, double x) {
  switch (activation) {
    case Activation::identity: return 1.0;
    case Activation::tanh: {
      const double y = std::tanh(x);
      return 1.0 - y * y;
    }
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::softplus: return sigmoid(x);
    case Activation::silu: {
      const double s = sigmoid(x);
      return s + x * s * (1.0 - s);
    }
  }
  return 1.0;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

}  // namespace

double activate(Activation activation, double x) {
  switch (activation) {
    case Activation::identity: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softplus: return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    case Activation::silu: return x * sigmoid(x);
  }
  return x;
}

Var matmul(Graph& g, Var a, Var b) {
  Tensor out = matmul(g.value(a), g.value(b));
  return g.record({a, b}, std::move(out), [](const BackwardContext& c) {
    const Tensor& av = *c.inputs[0];
    const Tensor& bv = *c.inputs[1];
    const Tensor& dc = c.out_grad;
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    if (c.grads[0]) {
      // dA = dC · Bᵀ
      Tensor& da = *c.grads[0];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += dc[i * m + j] * bv[p * m + j];
          da[i * k + p] += acc;
        }
      }
    }
    if (c.grads[1]) {
      // dB = Aᵀ · dC
      Tensor& db = *c.grads[1];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < m; ++j) db[p * m + j] += aip * dc[i * m + j];
        }
      }
    }
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.record({a, b}, std::move(out), [](const BackwardContext& c) {
    for (Tensor* gr : c.grads) {
      if (!gr) continue;
      for (std::size_t i = 0; i < c.out_grad.size(); ++i) (*gr)[i] += c.out_grad[i];
    }
  });
}

Var sub(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return g.record({a, b}, std::move(out), [](const BackwardContext& c) {
    const Tensor& d = c.out_grad;
    if (c.grads[0]) {
      for (std::size_t i = 0; i < d.size(); ++i) (*c.grads[0])[i] += d[i];
    }
    if (c.grads[1]) {
      for (std::size_t i = 0; i < d.size(); ++i) (*c.grads[1])[i] -= d[i];
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record({a, b}, std::move(out), [](const BackwardContext& c) {
    const Tensor& d = c.out_grad;
    if (c.grads[0]) {
      for (std::size_t i = 0; i < d.size(); ++i) (*c.grads[0])[i] += d[i] * (*c.inputs[1])[i];
    }
    if (c.grads[1]) {
      for (std::size_t i = 0; i < d.size(); ++i) (*c.grads[1])[i] += d[i] * (*c.inputs[0])[i];
    }
  });
}

Var scale(Graph& g, Var a, double factor) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v *= factor;
  return g.record({a}, std::move(out), [factor](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.out_grad.size(); ++i) (*c.grads[0])[i] += c.out_grad[i] * factor;
  });
}

Var add_row(Graph& g, Var a, Var bias) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(bias);
  const std::size_t n = av.rows(), m = av.cols();
  require(bv.size() == m, "add_row: bias length " + std::to_string(bv.size()) +
                              " does not match width " + std::to_string(m));
  Tensor out = av;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bv[j];
  }
  return g.record({a, bias}, std::move(out), [n, m](const BackwardContext& c) {
    const Tensor& d = c.out_grad;
    if (c.grads[0]) {
      for (std::size_t i = 0; i < d.size(); ++i) (*c.grads[0])[i] += d[i];
    }
    if (c.grads[1]) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) (*c.grads[1])[j] += d[i * m + j];
      }
    }
  });
}

Var apply(Graph& g, Var a, Activation activation) {
  if (activation == Activation::identity) return a;
  Tensor out = g.value(a);
  for (double& v : out.data()) v = activate(activation, v);
  return g.record({a}, std::move(out), [activation](const BackwardContext& c) {
    const Tensor& x = *c.inputs[0];
    const Tensor& y = c.out_value;
    Tensor& gx = *c.grads[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      double slope;
      switch (activation) {
        case Activation::tanh: slope = 1.0 - y[i] * y[i]; break;
        case Activation::sigmoid: slope = y[i] * (1.0 - y[i]); break;
        default: slope = activation_derivative(activation, x[i]);
      }
      gx[i] += c.out_grad[i] * slope;
    }
  });
}

Var square(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v *= v;
  return g.record({a}, std::move(out), [](const BackwardContext& c) {
    const Tensor& x = *c.inputs[0];
    for (std::size_t i = 0; i < x.size(); ++i) (*c.grads[0])[i] += 2.0 * x[i] * c.out_grad[i];
  });
}

Var sum(Graph& g, Var a) {
  double total = 0.0;
  for (double v : g.value(a).data()) total += v;
  return g.record({a}, Tensor::scalar(total), [](const BackwardContext& c) {
    const double s = c.out_grad.item();
    for (double& v : c.grads[0]->data()) v += s;
  });
}

Var mean(Graph& g, Var a) { return scale(g, sum(g, a), 1.0 / static_cast<double>(g.value(a).size())); }

Var weighted_sum(Graph& g, Var a, const Tensor& weights) {
  const Tensor& av = g.value(a);
  require(av.size() == weights.size(), "weighted_sum: weight count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * weights[i];
  return g.record({a}, Tensor::scalar(total), [weights](const BackwardContext& c) {
    const double s = c.out_grad.item();
    for (std::size_t i = 0; i < weights.size(); ++i) (*c.grads[0])[i] += s * weights[i];
  });
}

Var row_sums(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += av[i * m + j];
    out[i] = acc;
  }
  return g.record({a}, std::move(out), [n, m](const BackwardContext& c) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) (*c.grads[0])[i * m + j] += c.out_grad[i];
    }
  });
}

Var segment_sum(Graph& g, Var a, const std::vector<std::size_t>& lengths) {
  const Tensor& av = g.value(a);
  std::size_t total = 0;
  for (auto len : lengths) total += len;
  require(!lengths.empty(), "segment_sum: no segments");
  require(total == av.size(), "segment_sum: lengths cover " + std::to_string(total) +
                                  " entries but input has " + std::to_string(av.size()));
  Tensor out({lengths.size(), 1});
  std::size_t row = 0;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    double acc = 0.0;
    for (std::size_t k = 0; k < lengths[s]; ++k) acc += av[row++];
    out[s] = acc;
  }
  return g.record({a}, std::move(out), [lengths](const BackwardContext& c) {
    std::size_t r = 0;
    for (std::size_t s = 0; s < lengths.size(); ++s) {
      for (std::size_t k = 0; k < lengths[s]; ++k) (*c.grads[0])[r++] += c.out_grad[s];
    }
  });
}

Var clamped_exp(Graph& g, Var a, double lo, double hi) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v = std::exp(std::clamp(v, lo, hi));
  return g.record({a}, std::move(out), [lo, hi](const BackwardContext& c) {
    const Tensor& x = *c.inputs[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > lo && x[i] < hi) (*c.grads[0])[i] += c.out_grad[i] * c.out_value[i];
    }
  });
}

}  // namespace trustalign::numerics
