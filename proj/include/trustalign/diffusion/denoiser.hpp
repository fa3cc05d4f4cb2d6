#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustalign/numerics/checkpoint.hpp"
#include "trustalign/numerics/graph.hpp"
#include "trustalign/numerics/mlp.hpp"
#include "trustalign/diffusion/schedule.hpp"

namespace trustalign::diffusion {

using numerics::Graph;
using numerics::ParameterSet;
using numerics::Tensor;
using numerics::Var;

struct DenoiserConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::vector<std::size_t> hidden = {128, 128};
  numerics::Activation activation = numerics::Activation::silu;
  /// sin/cos pairs of the normalised step t/T appended to the pixels.
  std::size_t time_features = 8;

  std::size_t pixels() const { return height * width; }
  numerics::MlpSpec mlp_spec() const;
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
};

/// Network inputs for a batch of (state, step) pairs, with the per-row
/// schedule terms of the output transform.
struct DenoiserBatch {
  Tensor rows;    // [pixels..., time features...]
  Tensor states;  // x_t, one row each
  std::vector<double> sqrt_alpha;
  std::vector<double> sqrt_one_minus_alpha;
};

/// Noise-prediction network eps_theta(x_t, t). An MLP over the flattened state
/// and a step embedding estimates the clean image x0; the returned noise is
/// (x_t - sqrt(a_t)·x0) / sqrt(1 - a_t).
class Denoiser {
 public:
  static constexpr const char* kPrefix = "eps";

  Denoiser(DenoiserConfig config, std::uint64_t seed);
  Denoiser(DenoiserConfig config, ParameterSet params);

  const DenoiserConfig& config() const { return config_; }
  const numerics::MlpSpec& spec() const { return spec_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }

  DenoiserBatch batch(const std::vector<const Tensor*>& states, const std::vector<std::size_t>& steps,
                      const NoiseSchedule& schedule) const;

  Tensor predict(const DenoiserBatch& batch) const;
  Var predict(Graph& g, const std::map<std::string, Var>& vars, const DenoiserBatch& batch) const;

  numerics::Checkpoint to_checkpoint() const;
  static Denoiser from_checkpoint(const numerics::Checkpoint& checkpoint);

 private:
  DenoiserConfig config_;
  numerics::MlpSpec spec_;
  ParameterSet params_;
};

}  // namespace trustalign::diffusion
