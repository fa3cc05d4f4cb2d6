#include "trustalign/alignment/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>

#include "trustalign/errors.hpp"

namespace trustalign::alignment {

namespace {

RefUpdate ref_update_from_string(const std::string& name) {
  if (name == "ema") return RefUpdate::ema;
  if (name == "copy_each_step") return RefUpdate::copy_each_step;
  throw ValidationError("unknown reference update '" + name + "'");
}

std::string to_string(RefUpdate mode) { return mode == RefUpdate::ema ? "ema" : "copy_each_step"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "gradient_descent") return OptimizerKind::gradient_descent;
  if (name == "momentum") return OptimizerKind::momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::gradient_descent: return "gradient_descent";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "";
}

bool all_finite(const numerics::GradientMap& grads) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) return false;
  }
  return true;
}

double trailing_mean(const std::vector<IterationLog>& log, std::size_t window) {
  const std::size_t n = std::min(window, log.size());
  double total = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) total += log[i].mean_reward;
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

void AlignmentConfig::validate() const {
  require(kappa >= 0.0, "kappa must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(group_size >= 1 && batch_size % group_size == 0, "batch_size must be a multiple of group_size");
  require(!center_rewards || group_size >= 2, "center_rewards needs group_size >= 2");
  require(ratio_clip > 1.0, "ratio_clip must be > 1");
  require(ref_update != RefUpdate::ema || (tau > 0.0 && tau <= 1.0), "ema tau must lie in (0,1]");
  require(learning_rate >= 0.0, "learning_rate must be >= 0");
  require(window >= 1, "window must be >= 1");
}

nlohmann::json AlignmentConfig::to_json() const {
  return {{"kappa", kappa},
          {"trust", trust.to_json()},
          {"ref_update", to_string(ref_update)},
          {"tau", tau},
          {"batch_size", batch_size},
          {"group_size", group_size},
          {"center_rewards", center_rewards},
          {"ratio_clip", ratio_clip},
          {"learning_rate", learning_rate},
          {"optimizer", to_string(optimizer)},
          {"momentum", momentum},
          {"max_iterations", max_iterations},
          {"reward_threshold", reward_threshold},
          {"window", window},
          {"seed", seed},
          {"log_wall_time", log_wall_time}};
}

AlignmentConfig AlignmentConfig::from_json(const nlohmann::json& j) { return from_json(j, AlignmentConfig{}); }

AlignmentConfig AlignmentConfig::from_json(const nlohmann::json& j, const AlignmentConfig& base) {
  AlignmentConfig c = base;
  c.kappa = j.value("kappa", c.kappa);
  if (j.contains("trust")) c.trust = TrustConfig::from_json(j.at("trust"));
  c.ref_update = ref_update_from_string(j.value("ref_update", to_string(c.ref_update)));
  c.tau = j.value("tau", c.tau);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.group_size = j.value("group_size", c.group_size);
  c.center_rewards = j.value("center_rewards", c.center_rewards);
  c.ratio_clip = j.value("ratio_clip", c.ratio_clip);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.optimizer = optimizer_from_string(j.value("optimizer", to_string(c.optimizer)));
  c.momentum = j.value("momentum", c.momentum);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.reward_threshold = j.value("reward_threshold", c.reward_threshold);
  c.window = j.value("window", c.window);
  c.seed = j.value("seed", c.seed);
  c.log_wall_time = j.value("log_wall_time", c.log_wall_time);
  c.validate();
  return c;
}

RewardFn reward_net_scorer(const reward::RewardNet& net) {
  return [&net](const Tensor& image, const dataset::Prompt& prompt) {
    const Eigen::VectorXd z = net.feature(image, prompt.masked.mask);
    return RewardEval{net.ridge().predict(z), net.ridge().confidence_norm(z, net.config().norm_mode)};
  };
}

SampledBatch sample_batch(const Denoiser& reference, const RewardFn& scorer,
                          const std::vector<const dataset::Prompt*>& prompts, const std::vector<std::uint64_t>& seeds,
                          const NoiseSchedule& schedule, const TrustConfig& trust) {
  require(!prompts.empty(), "alignment batch needs at least one prompt");
  require(prompts.size() == seeds.size(), "one seed per prompt");
  SampledBatch batch;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    Trajectory tr = diffusion::sample_trajectory(reference, prompts[i]->masked, schedule, seeds[i]);
    tr.prompt_id = prompts[i]->id;
    const RewardEval eval = scorer(tr.final_image, *prompts[i]);
    if (!std::isfinite(eval.reward) || !std::isfinite(eval.confidence)) {
      ++batch.dropped;
      continue;
    }
    batch.trajectories.push_back(std::move(tr));
    batch.rewards.push_back(eval.reward);
    batch.confidences.push_back(eval.confidence);
    batch.gammas.push_back(trust_weight(eval.confidence, trust));
  }
  return batch;
}

void center_by_prompt(SampledBatch& batch) {
  std::map<std::int64_t, std::pair<double, std::size_t>> sums;
  for (std::size_t i = 0; i < batch.rewards.size(); ++i) {
    auto& [total, count] = sums[batch.trajectories[i].prompt_id];
    total += batch.rewards[i];
    ++count;
  }
  for (std::size_t i = 0; i < batch.rewards.size(); ++i) {
    const auto& [total, count] = sums.at(batch.trajectories[i].prompt_id);
    batch.rewards[i] -= total / static_cast<double>(count);
  }
}

GradientResult alignment_gradient(const Denoiser& model, const Denoiser& reference, const SampledBatch& batch,
                                  const NoiseSchedule& schedule, double kappa, double ratio_clip) {
  const std::size_t k = batch.trajectories.size();
  require(k > 0, "alignment_gradient needs at least one kept sample");
  std::vector<const Trajectory*> trs;
  Tensor logp_ref({k, 1}), ratio_weights({k, 1}), divergence_weights({k, 1});
  for (std::size_t i = 0; i < k; ++i) {
    trs.push_back(&batch.trajectories[i]);
    logp_ref[i] = batch.trajectories[i].total_log_prob();
    ratio_weights[i] = -batch.gammas[i] * batch.rewards[i] / static_cast<double>(k);
    divergence_weights[i] = batch.gammas[i] * kappa / static_cast<double>(k);
  }

  Graph g;
  const auto vars = g.bind(model.params());
  const BatchTerms terms = batch_terms(g, model, vars, reference, trs, schedule);
  const Var diff = numerics::sub(g, terms.log_probs, g.constant(logp_ref));
  const Var ratio = numerics::clamped_exp(g, diff, -std::log(ratio_clip), std::log(ratio_clip));
  const Var loss = numerics::add(g, numerics::weighted_sum(g, ratio, ratio_weights),
                                 numerics::weighted_sum(g, terms.divergences, divergence_weights));

  GradientResult result;
  ClampCounter clamps;
  const Tensor& lp = g.value(terms.log_probs);
  const Tensor& dv = g.value(terms.divergences);
  double div_total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    result.ratios.push_back(importance_weight(lp[i], logp_ref[i], &clamps, ratio_clip));
    div_total += dv[i];
  }
  result.clamp_events = clamps.events;
  result.mean_divergence = div_total / static_cast<double>(k);
  result.loss = g.value(loss).item();
  result.grads = g.backward(loss);
  return result;
}

StepReport alignment_step(Denoiser& model, const Denoiser& reference, const RewardFn& scorer,
                          const std::vector<dataset::Prompt>& prompts, const NoiseSchedule& schedule,
                          const AlignmentConfig& cfg, numerics::Optimizer& optimizer, std::mt19937_64& rng) {
  require(!prompts.empty(), "alignment needs prompts");
  std::uniform_int_distribution<std::size_t> pick(0, prompts.size() - 1);
  std::vector<const dataset::Prompt*> chosen;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cfg.batch_size / cfg.group_size; ++i) {
    const dataset::Prompt* p = &prompts[pick(rng)];
    for (std::size_t j = 0; j < cfg.group_size; ++j) {
      chosen.push_back(p);
      seeds.push_back(rng());
    }
  }
  SampledBatch batch = sample_batch(reference, scorer, chosen, seeds, schedule, cfg.trust);

  StepReport report;
  report.dropped = batch.dropped;
  if (batch.trajectories.empty()) return report;
  double reward = 0.0, gamma = 0.0;
  for (std::size_t i = 0; i < batch.rewards.size(); ++i) {
    reward += batch.rewards[i];
    gamma += batch.gammas[i];
  }
  report.mean_reward = reward / static_cast<double>(batch.rewards.size());
  report.mean_gamma = gamma / static_cast<double>(batch.gammas.size());
  if (cfg.center_rewards) center_by_prompt(batch);

  const GradientResult grad = alignment_gradient(model, reference, batch, schedule, cfg.kappa, cfg.ratio_clip);
  report.mean_divergence = grad.mean_divergence;
  report.clamp_count = grad.clamp_events;
  report.loss = grad.loss;
  if (!std::isfinite(grad.loss) || !all_finite(grad.grads)) return report;
  optimizer.step(model.params(), grad.grads);
  report.applied = true;
  return report;
}

void update_reference(Denoiser& reference, const Denoiser& model, RefUpdate mode, double tau) {
  auto& ref = reference.params().entries();
  const auto& cur = model.params().entries();
  require(ref.size() == cur.size(), "reference and model parameter sets differ");
  for (std::size_t i = 0; i < ref.size(); ++i) {
    require(ref[i].name == cur[i].name && ref[i].value.shape() == cur[i].value.shape(),
            "reference and model parameter '" + ref[i].name + "' differ in shape");
    if (mode == RefUpdate::copy_each_step) {
      ref[i].value = cur[i].value;
      continue;
    }
    if (tau == 1.0) continue;
    for (std::size_t k = 0; k < ref[i].value.size(); ++k) {
      ref[i].value[k] = tau * ref[i].value[k] + (1.0 - tau) * cur[i].value[k];
    }
  }
}

std::size_t AlignResult::censored_convergence(std::size_t max_iterations) const {
  return t_convergence.value_or(max_iterations);
}

AlignResult align(const Denoiser& base, const RewardFn& scorer, const std::vector<dataset::Prompt>& prompts,
                  const NoiseSchedule& schedule, const AlignmentConfig& cfg) {
  cfg.validate();
  require(!prompts.empty(), "alignment needs prompts");
  AlignResult result{base, {}, std::nullopt, 0.0, false, {}};
  if (cfg.max_iterations == 0) return result;
  require(!schedule.deterministic(), "alignment needs a schedule with eta > 0");

  Denoiser reference = base;
  Denoiser last_good = base;
  std::unique_ptr<numerics::Optimizer> optimizer;
  if (cfg.optimizer == OptimizerKind::gradient_descent) {
    optimizer = std::make_unique<numerics::GradientDescent>(cfg.learning_rate);
  } else if (cfg.optimizer == OptimizerKind::momentum) {
    optimizer = std::make_unique<numerics::Momentum>(cfg.learning_rate, cfg.momentum);
  } else {
    optimizer = std::make_unique<numerics::Adam>(cfg.learning_rate);
  }
  std::mt19937_64 rng(cfg.seed);
  std::size_t failures = 0;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const StepReport step = alignment_step(result.model, reference, scorer, prompts, schedule, cfg, *optimizer, rng);
    if (!step.applied) {
      if (++failures >= 10) {
        result.model = last_good;
        result.aborted = true;
        result.abort_reason = "10 consecutive steps with a non-finite loss or an empty batch (iteration " +
                              std::to_string(it) + ")";
        break;
      }
      continue;
    }
    failures = 0;
    update_reference(reference, result.model, cfg.ref_update, cfg.tau);
    last_good = result.model;

    IterationLog entry{it, step.mean_reward, step.mean_gamma, step.mean_divergence, step.clamp_count, 0.0};
    if (cfg.log_wall_time) {
      entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    result.log.push_back(entry);
    if (!result.t_convergence && result.log.size() >= cfg.window &&
        trailing_mean(result.log, cfg.window) >= cfg.reward_threshold) {
      result.t_convergence = it;
    }
  }
  result.final_reward = trailing_mean(result.log, cfg.window);
  return result;
}

void write_training_log(const std::filesystem::path& path, const std::vector<IterationLog>& log) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'");
  out.precision(17);
  out << "iteration,mean_reward,mean_gamma,mean_divergence,clamp_count,wall_ms\n";
  for (const auto& e : log) {
    out << e.iteration << ',' << e.mean_reward << ',' << e.mean_gamma << ',' << e.mean_divergence << ','
        << e.clamp_count << ',' << e.wall_ms << '\n';
  }
}

nlohmann::json convergence_summary(const AlignResult& result, const AlignmentConfig& cfg) {
  nlohmann::ordered_json j;
  j["T_convergence"] = result.t_convergence ? nlohmann::json(*result.t_convergence) : nlohmann::json();
  j["threshold"] = cfg.reward_threshold;
  j["final_reward"] = result.final_reward;
  return j;
}

}  // namespace trustalign::alignment
