#include "trustalign/harness/toy_task.hpp"

#include "trustalign/errors.hpp"
#include "trustalign/numerics/seed.hpp"

namespace trustalign::harness {

namespace {
enum Stage : std::uint64_t {
  kBaseImages = 1,
  kAnnotationImages,
  kHeldoutImages,
  kAlignImages,
  kEvalImages,
  kMasks,
  kDenoiserInit,
  kTrainBase,
  kReward,
  kAlign,
};
}  // namespace

AlignReward align_reward_from_string(const std::string& name) {
  if (name == "reward_net") return AlignReward::reward_net;
  if (name == "oracle") return AlignReward::oracle;
  throw ValidationError("unknown align_reward '" + name + "'");
}

std::string to_string(AlignReward reward) { return reward == AlignReward::oracle ? "oracle" : "reward_net"; }

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) { return numerics::derive_seed(seed, stage); }

alignment::AlignmentConfig toy_align_defaults() {
  alignment::AlignmentConfig c;
  c.optimizer = alignment::OptimizerKind::adam;
  c.learning_rate = 3e-4;
  c.batch_size = 64;
  c.group_size = 8;
  c.center_rewards = true;
  c.ratio_clip = 1.5;
  c.max_iterations = 3000;
  return c;
}

diffusion::Denoiser make_denoiser(const ToyTaskConfig& cfg) {
  return diffusion::Denoiser(cfg.seeded().denoiser, stage_seed(cfg.seed, kDenoiserInit));
}

ToyTaskConfig ToyTaskConfig::seeded() const {
  ToyTaskConfig c = *this;
  c.train_base.seed = stage_seed(seed, kTrainBase);
  c.reward.seed = stage_seed(seed, kReward);
  c.align.seed = stage_seed(seed, kAlign);
  c.reward.height = c.reward.width = image_size;
  c.denoiser.height = c.denoiser.width = image_size;
  return c;
}

diffusion::NoiseSchedule ToyTaskConfig::schedule() const {
  return diffusion::NoiseSchedule::build(steps, schedule_kind, eta);
}

void ToyTaskConfig::validate() const {
  require(image_size >= 4, "image_size must be >= 4");
  require(base_images >= 2, "base_images must be >= 2");
  require(annotation_prompts >= 1 && heldout_prompts >= 1, "annotation prompt sets must be nonempty");
  require(align_prompts >= 1 && eval_prompts >= 1, "alignment and evaluation prompt sets must be nonempty");
  require(!mask_kinds.empty(), "mask_kinds must be nonempty");
  require(annotation_noise >= 0.0, "annotation_noise must be >= 0");
  require(!eval_samples.empty(), "eval_samples must be nonempty");
  for (auto s : eval_samples) require(s >= 1, "eval sample counts must be >= 1");
  require(!target_mean_gamma || *target_mean_gamma > 0.0, "target_mean_gamma must be > 0");
  reward.validate();
  align.validate();
  schedule();
}

nlohmann::json ToyTaskConfig::to_json() const {
  std::vector<std::string> kinds;
  for (auto k : mask_kinds) kinds.push_back(dataset::to_string(k));
  return {{"seed", seed},
          {"image_size", image_size},
          {"image_kind", dataset::to_string(image_kind)},
          {"base_images", base_images},
          {"annotation_prompts", annotation_prompts},
          {"heldout_prompts", heldout_prompts},
          {"align_prompts", align_prompts},
          {"eval_prompts", eval_prompts},
          {"mask_kinds", kinds},
          {"annotation_noise", annotation_noise},
          {"norm_mode", dataset::to_string(norm_mode)},
          {"schedule", {{"steps", steps}, {"kind", diffusion::to_string(schedule_kind)}, {"eta", eta}}},
          {"denoiser", denoiser.to_json()},
          {"train_base", train_base.to_json()},
          {"reward", reward.to_json()},
          {"align", align.to_json()},
          {"align_reward", to_string(align_reward)},
          {"target_mean_gamma", target_mean_gamma ? nlohmann::json(*target_mean_gamma) : nlohmann::json()},
          {"eval_samples", eval_samples}};
}

ToyTaskConfig ToyTaskConfig::from_json(const nlohmann::json& j) {
  require(j.is_object(), "config must be a JSON object");
  ToyTaskConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.image_size = j.value("image_size", c.image_size);
    c.image_kind = dataset::image_kind_from_string(j.value("image_kind", dataset::to_string(c.image_kind)));
    c.base_images = j.value("base_images", c.base_images);
    c.annotation_prompts = j.value("annotation_prompts", c.annotation_prompts);
    c.heldout_prompts = j.value("heldout_prompts", c.heldout_prompts);
    c.align_prompts = j.value("align_prompts", c.align_prompts);
    c.eval_prompts = j.value("eval_prompts", c.eval_prompts);
    if (j.contains("mask_kinds")) {
      c.mask_kinds.clear();
      for (const auto& k : j.at("mask_kinds")) c.mask_kinds.push_back(dataset::mask_kind_from_string(k.get<std::string>()));
    }
    c.annotation_noise = j.value("annotation_noise", c.annotation_noise);
    c.norm_mode = dataset::normalization_mode_from_string(j.value("norm_mode", dataset::to_string(c.norm_mode)));
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      c.steps = s.value("steps", c.steps);
      c.schedule_kind = diffusion::schedule_kind_from_string(s.value("kind", diffusion::to_string(c.schedule_kind)));
      c.eta = s.value("eta", c.eta);
    }
    if (j.contains("denoiser")) c.denoiser = diffusion::DenoiserConfig::from_json(j.at("denoiser"));
    if (j.contains("train_base")) c.train_base = diffusion::TrainBaseConfig::from_json(j.at("train_base"));
    if (j.contains("reward")) c.reward = reward::RewardNetConfig::from_json(j.at("reward"));
    if (j.contains("align")) c.align = alignment::AlignmentConfig::from_json(j.at("align"), c.align);
    c.align_reward = align_reward_from_string(j.value("align_reward", to_string(c.align_reward)));
    if (j.contains("target_mean_gamma") && !j.at("target_mean_gamma").is_null()) {
      c.target_mean_gamma = j.at("target_mean_gamma").get<double>();
    }
    c.eval_samples = j.value("eval_samples", c.eval_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ToyData make_toy_data(const ToyTaskConfig& cfg) {
  cfg.validate();
  ToyData d;
  const auto kind = cfg.image_kind;
  const auto n = cfg.image_size;
  d.base_images = dataset::gen_toy_images(cfg.base_images, kind, stage_seed(cfg.seed, kBaseImages), n);
  const auto masks = stage_seed(cfg.seed, kMasks);
  std::int64_t next_id = 0;
  auto prompts = [&](std::size_t count, std::uint64_t stage) {
    auto images = dataset::gen_toy_images(count, kind, stage_seed(cfg.seed, stage), n);
    auto out = dataset::make_prompts(images, kind, cfg.mask_kinds, masks, next_id);
    next_id += static_cast<std::int64_t>(count);
    return out;
  };
  d.annotation_prompts = prompts(cfg.annotation_prompts, kAnnotationImages);
  d.heldout_prompts = prompts(cfg.heldout_prompts, kHeldoutImages);
  d.align_prompts = prompts(cfg.align_prompts, kAlignImages);
  d.eval_prompts = prompts(cfg.eval_prompts, kEvalImages);
  return d;
}

alignment::RewardFn oracle_reward(const reward::RewardNet& net, const dataset::NormalizationTable& table,
                                  dataset::NormalizationMode mode) {
  return [&net, table, mode](const numerics::Tensor& image, const dataset::Prompt& prompt) {
    const double agg = dataset::aggregate_score(dataset::oracle_score(prompt.original, image, prompt.masked.mask));
    return alignment::RewardEval{dataset::normalize_score(agg, table, prompt.split_tag, mode),
                                 net.confidence(image, prompt.masked.mask)};
  };
}

}  // namespace trustalign::harness
