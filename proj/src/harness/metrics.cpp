#include "trustalign/harness/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "trustalign/dataset/oracle.hpp"
#include "trustalign/diffusion/sampler.hpp"
#include "trustalign/errors.hpp"
#include "trustalign/numerics/seed.hpp"

namespace trustalign::harness {

Scorer clean_oracle_scorer() {
  return {"clean_oracle", [](const Tensor& image, const dataset::Prompt& p) {
            return dataset::aggregate_score(dataset::oracle_score(p.original, image, p.masked.mask));
          }};
}

Scorer reward_net_scorer(const reward::RewardNet& net) {
  return {"reward_net", [&net](const Tensor& image, const dataset::Prompt& p) { return net.reward(image, p.masked.mask); }};
}

std::uint64_t sample_seed(std::uint64_t run_seed, std::int64_t prompt_id, std::size_t j) {
  return numerics::derive_seed(run_seed, static_cast<std::uint64_t>(prompt_id), j);
}

std::vector<std::vector<double>> score_samples(const Denoiser& model, const std::vector<dataset::Prompt>& prompts,
                                               std::size_t samples, const Scorer& scorer,
                                               const NoiseSchedule& schedule, std::uint64_t seed) {
  require(!prompts.empty(), "evaluation needs a nonempty prompt set");
  require(samples >= 1, "S must be >= 1");
  std::vector<std::vector<double>> scores;
  for (const auto& p : prompts) {
    std::vector<double> row;
    for (std::size_t j = 0; j < samples; ++j) {
      const auto tr = diffusion::sample_trajectory(model, p.masked, schedule, sample_seed(seed, p.id, j));
      row.push_back(scorer.score(tr.final_image, p));
    }
    scores.push_back(std::move(row));
  }
  return scores;
}

double win_rate_from_scores(const std::vector<std::vector<double>>& candidate, const std::vector<double>& baseline,
                            std::size_t s) {
  require(!candidate.empty(), "win rate needs a nonempty prompt set");
  require(candidate.size() == baseline.size(), "candidate and baseline prompt counts differ");
  require(s >= 1, "S must be >= 1");
  std::size_t wins = 0;
  for (std::size_t p = 0; p < candidate.size(); ++p) {
    require(candidate[p].size() >= s, "fewer candidate samples than S");
    const double best = *std::max_element(candidate[p].begin(), candidate[p].begin() + static_cast<long>(s));
    wins += best > baseline[p] ? 1 : 0;
  }
  return static_cast<double>(wins) / static_cast<double>(candidate.size());
}

double win_rate(const Denoiser& candidate, const Denoiser& baseline, const std::vector<dataset::Prompt>& prompts,
                std::size_t s, const Scorer& scorer, const NoiseSchedule& schedule, std::uint64_t seed) {
  const auto cand = score_samples(candidate, prompts, s, scorer, schedule, seed);
  const auto base = score_samples(baseline, prompts, 1, scorer, schedule, seed);
  std::vector<double> base_scores;
  for (const auto& row : base) base_scores.push_back(row[0]);
  return win_rate_from_scores(cand, base_scores, s);
}

RewardStats reward_stats_from_scores(const std::vector<std::vector<double>>& scores) {
  require(!scores.empty(), "reward stats need a nonempty prompt set");
  RewardStats stats;
  double total = 0.0, variance = 0.0;
  std::size_t count = 0;
  for (const auto& row : scores) {
    require(!row.empty(), "reward stats need S >= 1");
    double mean = 0.0;
    for (double v : row) mean += v;
    total += mean;
    count += row.size();
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    variance += var / static_cast<double>(row.size());
  }
  stats.mean = total / static_cast<double>(count);
  stats.variance = variance / static_cast<double>(scores.size());
  return stats;
}

RewardStats reward_stats(const Denoiser& model, const std::vector<dataset::Prompt>& prompts, std::size_t s,
                         const Scorer& scorer, const NoiseSchedule& schedule, std::uint64_t seed) {
  return reward_stats_from_scores(score_samples(model, prompts, s, scorer, schedule, seed));
}

double acceleration(double t_baseline, double t_method) {
  require(t_method > 0.0, "acceleration: method iterations must be > 0");
  require(t_baseline > 0.0, "acceleration: baseline iterations must be > 0");
  return t_baseline / t_method - 1.0;
}

Histogram error_histogram(const std::vector<double>& predicted, const std::vector<double>& truth, std::size_t bins) {
  require(bins >= 2, "histogram needs >= 2 bins");
  require(predicted.size() == truth.size() && !truth.empty(), "histogram needs matching nonempty inputs");
  std::vector<double> errors;
  for (std::size_t i = 0; i < truth.size(); ++i) errors.push_back(std::abs(predicted[i] - truth[i]));
  const auto [lo_it, hi_it] = std::minmax_element(errors.begin(), errors.end());
  const double lo = *lo_it;
  const double hi = *hi_it > lo ? *hi_it : lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  Histogram h;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + width * static_cast<double>(b));
  h.counts.assign(bins, 0);
  for (double e : errors) {
    auto b = static_cast<std::size_t>((e - lo) / width);
    h.counts[std::min(b, bins - 1)] += 1;
  }
  for (auto c : h.counts) h.percentages.push_back(100.0 * static_cast<double>(c) / static_cast<double>(errors.size()));
  return h;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json wr = nlohmann::json::object();
  for (const auto& [s, v] : win_rate) wr["S=" + std::to_string(s)] = v;
  return {{"scorer", scorer},
          {"win_rate", wr},
          {"candidate", {{"mean", candidate.mean}, {"variance", candidate.variance}}},
          {"baseline", {{"mean", baseline.mean}, {"variance", baseline.variance}}},
          {"best_of_s", best_of_s},
          {"seed", seed}};
}

EvalReport evaluate(const Denoiser& candidate, const Denoiser& baseline, const std::vector<dataset::Prompt>& prompts,
                    const std::vector<std::size_t>& sample_counts, const Scorer& scorer,
                    const NoiseSchedule& schedule, std::uint64_t seed) {
  require(!sample_counts.empty(), "evaluation needs at least one S");
  const std::size_t s_max = *std::max_element(sample_counts.begin(), sample_counts.end());
  const auto cand = score_samples(candidate, prompts, s_max, scorer, schedule, seed);
  const auto base = score_samples(baseline, prompts, s_max, scorer, schedule, seed);
  std::vector<double> base_first;
  for (const auto& row : base) base_first.push_back(row[0]);
  EvalReport r;
  r.scorer = scorer.name;
  r.seed = seed;
  for (auto s : sample_counts) r.win_rate[s] = win_rate_from_scores(cand, base_first, s);
  r.candidate = reward_stats_from_scores(cand);
  r.baseline = reward_stats_from_scores(base);
  for (const auto& row : cand) r.best_of_s.push_back(*std::max_element(row.begin(), row.end()));
  return r;
}

}  // namespace trustalign::harness
