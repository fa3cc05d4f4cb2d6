#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustalign/dataset/annotations.hpp"
#include "trustalign/diffusion/denoiser.hpp"
#include "trustalign/diffusion/schedule.hpp"
#include "trustalign/reward/reward_net.hpp"

namespace trustalign::harness {

using diffusion::Denoiser;
using diffusion::NoiseSchedule;
using numerics::Tensor;

/// A named scoring rule; reports carry the name so scorers never mix.
struct Scorer {
  std::string name;
  std::function<double(const Tensor& image, const dataset::Prompt& prompt)> score;
};

/// Aggregate oracle score against the prompt's original image.
Scorer clean_oracle_scorer();
/// Ridge-head reward of a reward net (the net must outlive the scorer).
Scorer reward_net_scorer(const reward::RewardNet& net);

/// Seed of sample j for a prompt; sample sets for S ⊂ S' are nested.
std::uint64_t sample_seed(std::uint64_t run_seed, std::int64_t prompt_id, std::size_t j);

/// scores[p][j] for j < samples, sample j seeded by sample_seed(seed, id, j).
std::vector<std::vector<double>> score_samples(const Denoiser& model, const std::vector<dataset::Prompt>& prompts,
                                               std::size_t samples, const Scorer& scorer,
                                               const NoiseSchedule& schedule, std::uint64_t seed);

/// Fraction of prompts where max of the first S candidate scores strictly
/// exceeds the baseline's single score (ties lose).
double win_rate_from_scores(const std::vector<std::vector<double>>& candidate, const std::vector<double>& baseline,
                            std::size_t s);

/// The baseline draws its one sample with the seed of candidate sample 0.
double win_rate(const Denoiser& candidate, const Denoiser& baseline, const std::vector<dataset::Prompt>& prompts,
                std::size_t s, const Scorer& scorer, const NoiseSchedule& schedule, std::uint64_t seed);

struct RewardStats {
  double mean = 0.0;
  /// Population variance over each prompt's samples, averaged over prompts.
  double variance = 0.0;
};

RewardStats reward_stats_from_scores(const std::vector<std::vector<double>>& scores);
RewardStats reward_stats(const Denoiser& model, const std::vector<dataset::Prompt>& prompts, std::size_t s,
                         const Scorer& scorer, const NoiseSchedule& schedule, std::uint64_t seed);

/// T_b / T_m − 1
double acceleration(double t_baseline, double t_method);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
  std::vector<double> percentages;
};

/// Equal-width bins of |predicted − truth| over the observed range.
Histogram error_histogram(const std::vector<double>& predicted, const std::vector<double>& truth, std::size_t bins);

struct EvalReport {
  std::string scorer;
  std::map<std::size_t, double> win_rate;  // by S
  RewardStats candidate;
  RewardStats baseline;
  std::vector<double> best_of_s;  // per prompt, largest S
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const Denoiser& candidate, const Denoiser& baseline, const std::vector<dataset::Prompt>& prompts,
                    const std::vector<std::size_t>& sample_counts, const Scorer& scorer,
                    const NoiseSchedule& schedule, std::uint64_t seed);

}  // namespace trustalign::harness
