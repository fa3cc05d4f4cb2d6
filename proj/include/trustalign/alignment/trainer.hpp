#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustalign/alignment/objective.hpp"
#include "trustalign/alignment/trust.hpp"
#include "trustalign/dataset/annotations.hpp"
#include "trustalign/numerics/optim.hpp"
#include "trustalign/reward/reward_net.hpp"

namespace trustalign::alignment {

enum class RefUpdate { ema, copy_each_step };
enum class OptimizerKind { gradient_descent, momentum, adam };

struct AlignmentConfig {
  double kappa = 0.1;
  TrustConfig trust;
  RefUpdate ref_update = RefUpdate::ema;
  double tau = 0.99;
  std::size_t batch_size = 16;
  /// Samples drawn per chosen prompt; batch_size must be a multiple.
  std::size_t group_size = 1;
  /// Subtract each prompt's mean reward within the batch before weighting.
  bool center_rewards = false;
  /// Importance ratios are clamped to [1/ratio_clip, ratio_clip].
  double ratio_clip = kRatioMax;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::gradient_descent;
  double momentum = 0.9;
  std::size_t max_iterations = 1500;
  double reward_threshold = 0.0;
  std::size_t window = 20;
  std::uint64_t seed = 0;
  /// Off by default so that logs are reproducible byte for byte.
  bool log_wall_time = false;

  void validate() const;
  nlohmann::json to_json() const;
  static AlignmentConfig from_json(const nlohmann::json& j);
  /// Keys absent from `j` keep their value in `base`.
  static AlignmentConfig from_json(const nlohmann::json& j, const AlignmentConfig& base);
};

struct RewardEval {
  double reward = 0.0;
  double confidence = 0.0;
};

/// Scores a final image for its prompt.
using RewardFn = std::function<RewardEval(const Tensor& image, const dataset::Prompt& prompt)>;

/// Ridge-head reward and confidence norm of a reward net.
RewardFn reward_net_scorer(const reward::RewardNet& net);

/// Trajectories drawn from the reference model with their rewards and weights.
struct SampledBatch {
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> confidences;
  std::vector<double> gammas;
  std::size_t dropped = 0;  // non-finite rewards
};

SampledBatch sample_batch(const Denoiser& reference, const RewardFn& scorer,
                          const std::vector<const dataset::Prompt*>& prompts, const std::vector<std::uint64_t>& seeds,
                          const NoiseSchedule& schedule, const TrustConfig& trust);

struct GradientResult {
  numerics::GradientMap grads;
  double loss = 0.0;
  double mean_divergence = 0.0;
  std::vector<double> ratios;
  std::size_t clamp_events = 0;
};

/// Gradient of (1/B)·Σ γ_i·(−ratio_i·R_i + κ·D_i) with respect to the model.
GradientResult alignment_gradient(const Denoiser& model, const Denoiser& reference, const SampledBatch& batch,
                                  const NoiseSchedule& schedule, double kappa, double ratio_clip = kRatioMax);

struct StepReport {
  double mean_reward = 0.0;
  double mean_gamma = 0.0;
  double mean_divergence = 0.0;
  std::size_t clamp_count = 0;
  std::size_t dropped = 0;
  double loss = 0.0;
  bool applied = false;
};

/// Replaces each reward by its difference from the mean reward of samples
/// sharing its prompt id.
void center_by_prompt(SampledBatch& batch);

/// Samples a batch of prompts, then takes one optimizer step on `model`.
StepReport alignment_step(Denoiser& model, const Denoiser& reference, const RewardFn& scorer,
                          const std::vector<dataset::Prompt>& prompts, const NoiseSchedule& schedule,
                          const AlignmentConfig& cfg, numerics::Optimizer& optimizer, std::mt19937_64& rng);

/// ema: θ′ ← τ·θ′ + (1−τ)·θ; copy_each_step: θ′ ← θ.
void update_reference(Denoiser& reference, const Denoiser& model, RefUpdate mode, double tau);

struct IterationLog {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double mean_gamma = 0.0;
  double mean_divergence = 0.0;
  std::size_t clamp_count = 0;
  double wall_ms = 0.0;
};

struct AlignResult {
  Denoiser model;
  std::vector<IterationLog> log;
  /// First 1-based iteration whose trailing-window mean reward reaches the threshold.
  std::optional<std::size_t> t_convergence;
  double final_reward = 0.0;
  bool aborted = false;
  std::string abort_reason;

  /// t_convergence, or max_iterations when the threshold was never reached.
  std::size_t censored_convergence(std::size_t max_iterations) const;
};

AlignResult align(const Denoiser& base, const RewardFn& scorer, const std::vector<dataset::Prompt>& prompts,
                  const NoiseSchedule& schedule, const AlignmentConfig& cfg);

void write_training_log(const std::filesystem::path& path, const std::vector<IterationLog>& log);
nlohmann::json convergence_summary(const AlignResult& result, const AlignmentConfig& cfg);

}  // namespace trustalign::alignment
