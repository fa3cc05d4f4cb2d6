#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trustalign/numerics/graph.hpp"
#include "trustalign/numerics/params.hpp"
#include "trustalign/numerics/tensor.hpp"

namespace trustalign::numerics {

/// Fully connected network: widths = {input, hidden..., output}. Layer l maps
/// widths[l] -> widths[l+1] as y = x·W_l + b_l, with W_l stored (in, out).
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation hidden = Activation::tanh;
  Activation output = Activation::identity;

  std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  void validate() const;
};

std::string weight_name(const std::string& prefix, std::size_t layer);
std::string bias_name(const std::string& prefix, std::size_t layer);

/// Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)) weights, zero biases.
ParameterSet init_mlp(const MlpSpec& spec, const std::string& prefix, std::uint64_t seed, double gain = 1.0);

/// Identity weights (square layers only) and zero biases.
ParameterSet identity_mlp(const MlpSpec& spec, const std::string& prefix);

/// Marks the first `frozen_layers` layers of an MLP as non-trainable.
void freeze_layers(ParameterSet& params, const std::string& prefix, std::size_t frozen_layers);

Var forward_mlp(Graph& g, const std::map<std::string, Var>& vars, Var input,
                const MlpSpec& spec, const std::string& prefix);

/// Value-only forward. Row results equal the graph forward bit for bit.
Tensor forward_mlp(const ParameterSet& params, const Tensor& input, const MlpSpec& spec,
                   const std::string& prefix);

}  // namespace trustalign::numerics
