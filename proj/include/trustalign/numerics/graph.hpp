#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "trustalign/numerics/params.hpp"
#include "trustalign/numerics/tensor.hpp"

namespace trustalign::numerics {

/// Handle to a value recorded in a Graph.
class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }
  bool valid() const { return id_ != kInvalid; }

 private:
  friend class Graph;
  explicit Var(std::size_t id) : id_(id) {}
  static constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);
  std::size_t id_ = kInvalid;
};

/// What a node's local derivative sees during the backward sweep. Entries of
/// `grads` are null for inputs that need no gradient; the rest accumulate.
struct BackwardContext {
  const Tensor& out_grad;
  const Tensor& out_value;
  const std::vector<const Tensor*>& inputs;
  const std::vector<Tensor*>& grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
/// tape backwards is a reverse topological order.
class Graph {
 public:
  Var constant(Tensor value);
  Var parameter(std::string name, Tensor value);

  /// Trainable entries become parameters, frozen entries constants.
  std::map<std::string, Var> bind(const ParameterSet& params);

  /// Appends a node computed elsewhere together with its local derivative.
  Var record(std::vector<Var> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradients of a scalar loss for every parameter in the graph; parameters
  /// the loss does not depend on get zero tensors.
  GradientMap backward(Var loss) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };
  const Node& node(Var v) const;
  std::vector<Node> nodes_;
};

enum class Activation { identity, tanh, sigmoid, softplus, silu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation activation);
double activate(Activation activation, double x);

// Differentiable operations.
Var matmul(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);
/// Adds a length-m bias to every row of an n x m matrix.
Var add_row(Graph& g, Var a, Var bias);
Var apply(Graph& g, Var a, Activation activation);
Var square(Graph& g, Var a);
Var sum(Graph& g, Var a);
Var mean(Graph& g, Var a);
/// Sum of a ⊙ w for a constant weight tensor; returns a scalar.
Var weighted_sum(Graph& g, Var a, const Tensor& weights);
/// Sums each row of an n x m matrix into an n x 1 column.
Var row_sums(Graph& g, Var a);
/// Sums consecutive runs of a column: lengths {2,3} on 5 rows -> 2 rows.
Var segment_sum(Graph& g, Var a, const std::vector<std::size_t>& lengths);
/// exp(clamp(a, lo, hi)) elementwise; zero derivative where clamped.
Var clamped_exp(Graph& g, Var a, double lo, double hi);

}  // namespace trustalign::numerics
