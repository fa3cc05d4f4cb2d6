#include "trustalign/numerics/mlp.hpp"

#include <cmath>
#include <random>

#include "trustalign/errors.hpp"

namespace trustalign::numerics {

void MlpSpec::validate() const {
  require(widths.size() >= 2, "MLP spec needs at least one layer");
  for (auto w : widths) require(w > 0, "MLP layer widths must be positive");
}

std::string weight_name(const std::string& prefix, std::size_t layer) {
  return prefix + ".w" + std::to_string(layer);
}

std::string bias_name(const std::string& prefix, std::size_t layer) {
  return prefix + ".b" + std::to_string(layer);
}

ParameterSet init_mlp(const MlpSpec& spec, const std::string& prefix, std::uint64_t seed, double gain) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParameterSet params;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    const double limit = gain / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor w({in, out});
    for (double& v : w.data()) v = dist(rng);
    params.add(weight_name(prefix, l), std::move(w));
    params.add(bias_name(prefix, l), Tensor({out}, 0.0));
  }
  return params;
}

ParameterSet identity_mlp(const MlpSpec& spec, const std::string& prefix) {
  spec.validate();
  ParameterSet params;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    require(in == out, "identity_mlp needs square layers");
    Tensor w({in, out});
    for (std::size_t i = 0; i < in; ++i) w.at(i, i) = 1.0;
    params.add(weight_name(prefix, l), std::move(w));
    params.add(bias_name(prefix, l), Tensor({out}, 0.0));
  }
  return params;
}

void freeze_layers(ParameterSet& params, const std::string& prefix, std::size_t frozen_layers) {
  for (std::size_t l = 0; l < frozen_layers; ++l) {
    params.set_trainable(weight_name(prefix, l), false);
    params.set_trainable(bias_name(prefix, l), false);
  }
}

namespace {
void check_input(const Tensor& input, const MlpSpec& spec) {
  spec.validate();
  require(input.rank() == 2, "MLP input must be a (batch, width) matrix, got " +
                                 shape_string(input.shape()));
  require(input.cols() == spec.input_width(),
          "MLP input width " + std::to_string(input.cols()) + " does not match first layer width " +
              std::to_string(spec.input_width()));
}
}  // namespace

Var forward_mlp(Graph& g, const std::map<std::string, Var>& vars, Var input, const MlpSpec& spec,
                const std::string& prefix) {
  check_input(g.value(input), spec);
  auto lookup = [&](const std::string& name) {
    auto it = vars.find(name);
    require(it != vars.end(), "MLP parameter '" + name + "' not bound");
    return it->second;
  };
  Var h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    h = add_row(g, matmul(g, h, lookup(weight_name(prefix, l))), lookup(bias_name(prefix, l)));
    h = apply(g, h, l + 1 == spec.layers() ? spec.output : spec.hidden);
  }
  return h;
}

Tensor forward_mlp(const ParameterSet& params, const Tensor& input, const MlpSpec& spec,
                   const std::string& prefix) {
  check_input(input, spec);
  Tensor h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const Tensor& w = params.get(weight_name(prefix, l));
    const Tensor& b = params.get(bias_name(prefix, l));
    require(w.rows() == h.cols(), "MLP layer " + std::to_string(l) + " expects width " +
                                      std::to_string(w.rows()) + ", got " +
                                      std::to_string(h.cols()));
    Tensor next = matmul(h, w);
    const Activation act = l + 1 == spec.layers() ? spec.output : spec.hidden;
    const std::size_t m = next.cols();
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = activate(act, next[i] + b[i % m]);
    }
    h = std::move(next);
  }
  return h;
}

}  // namespace trustalign::numerics
