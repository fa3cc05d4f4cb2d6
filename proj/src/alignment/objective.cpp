#include "trustalign/alignment/objective.hpp"

#include <cmath>

#include "trustalign/errors.hpp"

namespace trustalign::alignment {

double importance_weight(double logp_current, double logp_reference, ClampCounter* counter, double clip) {
  require(std::isfinite(logp_current) && std::isfinite(logp_reference), "importance_weight needs finite log-probs");
  require(clip > 1.0, "ratio clip must be > 1");
  const double hi = std::log(clip), lo = -hi;
  const double diff = logp_current - logp_reference;
  if (diff < lo || diff > hi) {
    if (counter) ++counter->events;
    return diff < lo ? 1.0 / clip : clip;
  }
  return std::exp(diff);
}

BatchTerms batch_terms(Graph& g, const Denoiser& model, const std::map<std::string, Var>& vars,
                       const Denoiser& reference, const std::vector<const Trajectory*>& trajectories,
                       const NoiseSchedule& schedule) {
  require(!trajectories.empty(), "batch_terms needs at least one trajectory");
  std::vector<const Tensor*> inputs;
  std::vector<std::size_t> steps, lengths;
  std::vector<double> sigmas;
  std::vector<diffusion::DdimCoefficients> coefficients;
  const std::size_t d = model.config().pixels();
  for (const auto* tr : trajectories) {
    std::size_t n = 0;
    for (const auto& s : tr->steps) {
      if (!s.log_density) continue;
      inputs.push_back(&s.input);
      steps.push_back(s.t);
      sigmas.push_back(schedule.sigma(s.t));
      coefficients.push_back(diffusion::DdimCoefficients::at(s.t, schedule));
      ++n;
    }
    require(n > 0, "trajectory has no stochastic step; its density does not exist");
    lengths.push_back(n);
  }
  const std::size_t rows = inputs.size();
  Tensor states({rows, d}), targets({rows, d}), weights({rows, d});
  std::size_t r = 0;
  for (const auto* tr : trajectories) {
    const Tensor w = tr->region.unknown_weights();
    for (const auto& s : tr->steps) {
      if (!s.log_density) continue;
      std::copy(s.input.data().begin(), s.input.data().end(), states.data().begin() + static_cast<long>(r * d));
      std::copy(s.output.data().begin(), s.output.data().end(), targets.data().begin() + static_cast<long>(r * d));
      std::copy(w.data().begin(), w.data().end(), weights.data().begin() + static_cast<long>(r * d));
      ++r;
    }
  }

  const diffusion::DenoiserBatch input = model.batch(inputs, steps, schedule);
  const Var eps = model.predict(g, vars, input);
  const Var means = diffusion::ddim_means(g, eps, states, coefficients);

  const Tensor ref_eps = reference.predict(input);
  Tensor ref_means({rows, d});
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t i = 0; i < d; ++i) ref_means[k * d + i] = coefficients[k].mean(states[k * d + i], ref_eps[k * d + i]);
  }

  BatchTerms terms;
  terms.log_probs = numerics::segment_sum(g, diffusion::step_log_densities(g, means, targets, sigmas, weights), lengths);
  terms.divergences = numerics::segment_sum(g, diffusion::gaussian_kl_rows(g, means, ref_means, sigmas, weights), lengths);
  return terms;
}

Var trajectory_log_prob(Graph& g, const Denoiser& model, const std::map<std::string, Var>& vars,
                        const Trajectory& trajectory, const NoiseSchedule& schedule) {
  return batch_terms(g, model, vars, model, {&trajectory}, schedule).log_probs;
}

double trajectory_log_prob(const Denoiser& model, const Trajectory& trajectory, const NoiseSchedule& schedule) {
  Graph g;
  const auto vars = g.bind(model.params());
  return g.value(trajectory_log_prob(g, model, vars, trajectory, schedule)).item();
}

Var divergence(Graph& g, const Denoiser& model, const std::map<std::string, Var>& vars, const Denoiser& reference,
               const Trajectory& trajectory, const NoiseSchedule& schedule) {
  return batch_terms(g, model, vars, reference, {&trajectory}, schedule).divergences;
}

double divergence(const Denoiser& model, const Denoiser& reference, const Trajectory& trajectory,
                  const NoiseSchedule& schedule) {
  Graph g;
  const auto vars = g.bind(model.params());
  return g.value(divergence(g, model, vars, reference, trajectory, schedule)).item();
}

}  // namespace trustalign::alignment
