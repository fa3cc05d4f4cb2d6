#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustalign/alignment/trainer.hpp"
#include "trustalign/dataset/annotations.hpp"
#include "trustalign/diffusion/trainer.hpp"
#include "trustalign/reward/reward_net.hpp"

namespace trustalign::harness {

/// Reward optimised by the align stage.
enum class AlignReward { reward_net, oracle };
AlignReward align_reward_from_string(const std::string& name);
std::string to_string(AlignReward reward);

/// Grouped, reward-centred Adam updates with a tight ratio clip. The plain
/// AlignmentConfig defaults diverge on the toy task.
alignment::AlignmentConfig toy_align_defaults();

/// Every knob of the end-to-end toy pipeline. Sub-configuration seeds are
/// derived from `seed` by `seeded()`.
struct ToyTaskConfig {
  std::uint64_t seed = 0;
  std::size_t image_size = 16;
  dataset::ImageKind image_kind = dataset::ImageKind::smooth_field;
  std::size_t base_images = 512;
  std::size_t annotation_prompts = 400;
  std::size_t heldout_prompts = 40;
  std::size_t align_prompts = 64;
  std::size_t eval_prompts = 50;
  std::vector<dataset::MaskKind> mask_kinds = {dataset::MaskKind::square_crop, dataset::MaskKind::rect_crop,
                                               dataset::MaskKind::irregular};
  double annotation_noise = 0.3;
  dataset::NormalizationMode norm_mode = dataset::NormalizationMode::variance;

  std::size_t steps = 10;
  diffusion::ScheduleKind schedule_kind = diffusion::ScheduleKind::linear;
  double eta = 0.4;

  diffusion::DenoiserConfig denoiser;
  diffusion::TrainBaseConfig train_base;
  reward::RewardNetConfig reward;
  alignment::AlignmentConfig align = toy_align_defaults();
  AlignReward align_reward = AlignReward::reward_net;
  /// When set, the exp-form k is re-fitted so the mean trust weight over the
  /// annotation features equals this value.
  std::optional<double> target_mean_gamma;
  std::vector<std::size_t> eval_samples = {1, 3, 10};

  ToyTaskConfig seeded() const;
  diffusion::NoiseSchedule schedule() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ToyTaskConfig from_json(const nlohmann::json& j);
};

struct ToyData {
  std::vector<numerics::Tensor> base_images;
  std::vector<dataset::Prompt> annotation_prompts;
  std::vector<dataset::Prompt> heldout_prompts;
  std::vector<dataset::Prompt> align_prompts;
  std::vector<dataset::Prompt> eval_prompts;
};

/// Disjoint image pools for base training and each prompt set.
ToyData make_toy_data(const ToyTaskConfig& cfg);

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage);

/// Untrained denoiser initialised from the task seed.
diffusion::Denoiser make_denoiser(const ToyTaskConfig& cfg);

/// Clean oracle aggregate, normalised with `table`; the confidence norm still
/// comes from the reward net so trust weights stay defined.
alignment::RewardFn oracle_reward(const reward::RewardNet& net, const dataset::NormalizationTable& table,
                                  dataset::NormalizationMode mode);

}  // namespace trustalign::harness
