#pragma once

#include <map>
#include <string>
#include <vector>

#include "trustalign/diffusion/sampler.hpp"

namespace trustalign::alignment {

using diffusion::Denoiser;
using diffusion::NoiseSchedule;
using diffusion::Trajectory;
using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

inline constexpr double kRatioMin = 1e-4;
inline constexpr double kRatioMax = 1e4;

struct ClampCounter {
  std::size_t events = 0;
};

/// exp(logp_current − logp_reference) clamped to [1/clip, clip].
double importance_weight(double logp_current, double logp_reference, ClampCounter* counter = nullptr,
                         double clip = kRatioMax);

/// Per-trajectory terms of a batch, recorded in one graph: the log-probability
/// of the stored stochastic steps under `model`, and the summed Gaussian KL
/// between the reference's and the model's step means.
struct BatchTerms {
  Var log_probs;    // k x 1
  Var divergences;  // k x 1
};

BatchTerms batch_terms(Graph& g, const Denoiser& model, const std::map<std::string, Var>& vars,
                       const Denoiser& reference, const std::vector<const Trajectory*>& trajectories,
                       const NoiseSchedule& schedule);

/// Graph-recorded and value forms for a single trajectory. Both reject
/// trajectories without a stochastic step.
Var trajectory_log_prob(Graph& g, const Denoiser& model, const std::map<std::string, Var>& vars,
                        const Trajectory& trajectory, const NoiseSchedule& schedule);
double trajectory_log_prob(const Denoiser& model, const Trajectory& trajectory, const NoiseSchedule& schedule);

Var divergence(Graph& g, const Denoiser& model, const std::map<std::string, Var>& vars, const Denoiser& reference,
               const Trajectory& trajectory, const NoiseSchedule& schedule);
double divergence(const Denoiser& model, const Denoiser& reference, const Trajectory& trajectory,
                  const NoiseSchedule& schedule);

}  // namespace trustalign::alignment
