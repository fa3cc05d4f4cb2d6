#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "trustalign/diffusion/denoiser.hpp"
#include "trustalign/diffusion/schedule.hpp"

namespace trustalign::diffusion {

struct TrainBaseConfig {
  std::size_t iterations = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double heldout_fraction = 0.2;
  /// (image, step, noise) triples drawn once per held-out image.
  std::size_t heldout_draws = 4;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrainBaseConfig from_json(const nlohmann::json& j);
};

struct TrainBaseReport {
  double initial_heldout_mse = 0.0;
  double final_heldout_mse = 0.0;
  std::vector<double> losses;
};

/// Noise-prediction regression with Adam. Throws NumericError when the loss
/// stays above 10x its first value for 100 consecutive steps or goes non-finite.
TrainBaseReport train_base(Denoiser& model, const std::vector<Tensor>& images,
                           const NoiseSchedule& schedule, const TrainBaseConfig& config);

}  // namespace trustalign::diffusion
