#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "trustalign/diffusion/denoiser.hpp"
#include "trustalign/diffusion/image.hpp"
#include "trustalign/diffusion/schedule.hpp"

namespace trustalign::diffusion {

using Rng = std::mt19937_64;

/// sqrt(a_t)·x0 + sqrt(1 - a_t)·noise
Tensor forward_diffuse(const Tensor& x0, std::size_t t, const NoiseSchedule& schedule,
                       const Tensor& noise);

/// Scalars of one reverse step:
///   mean = sqrt(a_{t-1})·(x - sqrt(1-a_t)·eps)/sqrt(a_t) + sqrt(1 - a_{t-1} - s_t²)·eps
struct DdimCoefficients {
  double sqrt_alpha;
  double sqrt_one_minus_alpha;
  double sqrt_alpha_prev;
  double direction;
  double sigma;

  static DdimCoefficients at(std::size_t t, const NoiseSchedule& schedule);
  double mean(double x, double eps) const {
    return sqrt_alpha_prev * ((x - sqrt_one_minus_alpha * eps) / sqrt_alpha) + direction * eps;
  }
  double mean_slope_eps() const {
    return direction - sqrt_alpha_prev * sqrt_one_minus_alpha / sqrt_alpha;
  }
};

Tensor ddim_mean(const Tensor& x_t, const Tensor& eps, std::size_t t, const NoiseSchedule& schedule);

/// Log of the isotropic Gaussian density N(mean, sigma² I) at x, summed over
/// all pixels, or over the unknown pixels of `region` when given.
double step_log_density(const Tensor& x, const Tensor& mean, double sigma);
double step_log_density(const Tensor& x, const Tensor& mean, double sigma, const Mask& region);

struct StepResult {
  Tensor next;   // x_{t-1}
  Tensor mean;   // deterministic component
  Tensor noise;  // eps_t (zeros when sigma_t = 0)
  double sigma = 0.0;
  /// Empty for a deterministic step (sigma_t = 0): no density exists.
  std::optional<double> log_density;
};

StepResult ddim_step(const Denoiser& model, const Tensor& x_t, std::size_t t,
                     const NoiseSchedule& schedule, Rng& rng, const Mask* density_region = nullptr);

/// Replaces known pixels by the forward-diffused prompt at step t.
Tensor inpaint_constrain(const Tensor& x_t, const MaskedPrompt& prompt, std::size_t t,
                         const NoiseSchedule& schedule, Rng& rng);

struct TrajectoryStep {
  std::size_t t = 0;
  double sigma = 0.0;
  Tensor input;   // constrained x_t fed to the model
  Tensor mean;    // x̄_{t-1}
  Tensor noise;   // eps_t
  Tensor output;  // x_{t-1} = mean + sigma·noise
  std::optional<double> log_density;
};

/// Full reverse-sampling record; steps run t = T..1.
struct Trajectory {
  Tensor initial;  // x_T
  std::vector<TrajectoryStep> steps;
  Tensor final_image;  // x_0 with the known region restored
  Mask region;         // prompt mask; densities cover its unknown pixels
  std::uint64_t seed = 0;
  std::int64_t prompt_id = -1;

  /// Sum of step log-densities over stochastic steps (0 if there are none).
  double total_log_prob() const;
  bool stochastic() const;
  std::size_t stochastic_steps() const;
};

Trajectory sample_trajectory(const Denoiser& model, const MaskedPrompt& prompt,
                             const NoiseSchedule& schedule, Rng& rng);
Trajectory sample_trajectory(const Denoiser& model, const MaskedPrompt& prompt,
                             const NoiseSchedule& schedule, std::uint64_t seed);

/// Recomputes step means with `model` at the stored inputs of every step, in
/// one batched forward pass. Row k corresponds to steps[k].
Tensor replay_means(const Denoiser& model, const Trajectory& trajectory, const NoiseSchedule& schedule);

/// Recomputes each step's log-density with `model`; empty for deterministic steps.
std::vector<std::optional<double>> replay_log_densities(const Denoiser& model,
                                                        const Trajectory& trajectory,
                                                        const NoiseSchedule& schedule);

void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory load_trajectory(const std::filesystem::path& path);

// Differentiable counterparts, evaluated row-wise with the same arithmetic as
// the value functions above.

/// Rows of means from rows of noise predictions; `coefficients[r]` per row.
Var ddim_means(Graph& g, Var eps_rows, const Tensor& state_rows,
               const std::vector<DdimCoefficients>& coefficients);

/// n x 1 column of per-row log-densities of `targets` under N(means, sigma_r²),
/// restricted to pixels where `region_weights` is nonzero. Weights are either
/// one row shared by all rows or a full n x d tensor.
Var step_log_densities(Graph& g, Var means, const Tensor& targets, const std::vector<double>& sigmas,
                       const Tensor& region_weights);

/// n x 1 column of per-row KL(N(ref, s²I) || N(means, s²I)) = |ref - means|²/(2s²).
Var gaussian_kl_rows(Graph& g, Var means, const Tensor& reference_means,
                     const std::vector<double>& sigmas, const Tensor& region_weights);

}  // namespace trustalign::diffusion
