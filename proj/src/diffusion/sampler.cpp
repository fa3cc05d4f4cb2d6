#include "trustalign/diffusion/sampler.hpp"

#include <cmath>
#include <numbers>

#include "trustalign/errors.hpp"
#include "trustalign/numerics/checkpoint.hpp"

namespace trustalign::diffusion {

namespace {

double log_normaliser(double sigma) { return 0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma); }

double density_term(double x, double mean, double sigma, double log_norm) {
  const double r = (x - mean) / sigma;
  return -0.5 * r * r - log_norm;
}

Tensor standard_normal(const numerics::Shape& shape, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor out(shape);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

void require_same_size(const Tensor& a, const Tensor& b, const char* what) {
  require(a.size() == b.size(), std::string(what) + ": shape mismatch " +
                                    numerics::shape_string(a.shape()) + " vs " +
                                    numerics::shape_string(b.shape()));
}

}  // namespace

Tensor forward_diffuse(const Tensor& x0, std::size_t t, const NoiseSchedule& schedule,
                       const Tensor& noise) {
  require(t <= schedule.steps(), "forward_diffuse: step " + std::to_string(t) + " outside [0, " +
                                     std::to_string(schedule.steps()) + "]");
  require(x0.shape() == noise.shape(), "forward_diffuse: noise shape " +
                                           numerics::shape_string(noise.shape()) +
                                           " does not match " + numerics::shape_string(x0.shape()));
  const double a = schedule.alpha(t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  Tensor out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sa * x0[i] + sn * noise[i];
  return out;
}

DdimCoefficients DdimCoefficients::at(std::size_t t, const NoiseSchedule& schedule) {
  require(t >= 1 && t <= schedule.steps(), "DDIM step " + std::to_string(t) + " outside [1, T]");
  const double a = schedule.alpha(t), a_prev = schedule.alpha(t - 1), s = schedule.sigma(t);
  return DdimCoefficients{std::sqrt(a), std::sqrt(1.0 - a), std::sqrt(a_prev),
                          std::sqrt(std::max(0.0, 1.0 - a_prev - s * s)), s};
}

Tensor ddim_mean(const Tensor& x_t, const Tensor& eps, std::size_t t, const NoiseSchedule& schedule) {
  require_same_size(x_t, eps, "ddim_mean");
  const auto c = DdimCoefficients::at(t, schedule);
  Tensor out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.mean(x_t[i], eps[i]);
  return out;
}

double step_log_density(const Tensor& x, const Tensor& mean, double sigma) {
  require(sigma > 0.0, "step_log_density needs sigma > 0");
  require_same_size(x, mean, "step_log_density");
  const double log_norm = log_normaliser(sigma);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += density_term(x[i], mean[i], sigma, log_norm);
  return total;
}

double step_log_density(const Tensor& x, const Tensor& mean, double sigma, const Mask& region) {
  require(sigma > 0.0, "step_log_density needs sigma > 0");
  require_same_size(x, mean, "step_log_density");
  require(region.size() == x.size(), "step_log_density: region size mismatch");
  const double log_norm = log_normaliser(sigma);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!region.known(i)) total += density_term(x[i], mean[i], sigma, log_norm);
  }
  return total;
}

StepResult ddim_step(const Denoiser& model, const Tensor& x_t, std::size_t t,
                     const NoiseSchedule& schedule, Rng& rng, const Mask* density_region) {
  const auto c = DdimCoefficients::at(t, schedule);
  const Tensor eps = model.predict(model.batch({&x_t}, {t}, schedule));
  require(eps.size() == x_t.size(), "denoiser output width does not match the state");

  StepResult r;
  r.sigma = c.sigma;
  r.mean = x_t;
  for (std::size_t i = 0; i < x_t.size(); ++i) r.mean[i] = c.mean(x_t[i], eps[i]);
  if (c.sigma == 0.0) {
    r.noise = Tensor(x_t.shape(), 0.0);
    r.next = r.mean;
    return r;
  }
  r.noise = standard_normal(x_t.shape(), rng);
  r.next = r.mean;
  for (std::size_t i = 0; i < r.next.size(); ++i) r.next[i] = r.mean[i] + c.sigma * r.noise[i];
  r.log_density = density_region ? step_log_density(r.next, r.mean, c.sigma, *density_region)
                                 : step_log_density(r.next, r.mean, c.sigma);
  if (!r.next.all_finite() || !std::isfinite(*r.log_density)) {
    throw NumericError("non-finite DDIM step at t=" + std::to_string(t));
  }
  return r;
}

Tensor inpaint_constrain(const Tensor& x_t, const MaskedPrompt& prompt, std::size_t t,
                         const NoiseSchedule& schedule, Rng& rng) {
  require(x_t.shape() == prompt.image.shape(), "inpaint_constrain: state shape " +
                                                   numerics::shape_string(x_t.shape()) +
                                                   " does not match prompt " +
                                                   numerics::shape_string(prompt.image.shape()));
  Tensor out = x_t;
  if (t == 0) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (prompt.mask.known(i)) out[i] = prompt.image[i];
    }
    return out;
  }
  const Tensor noised = forward_diffuse(prompt.image, t, schedule, standard_normal(x_t.shape(), rng));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (prompt.mask.known(i)) out[i] = noised[i];
  }
  return out;
}

double Trajectory::total_log_prob() const {
  double total = 0.0;
  for (const auto& s : steps) {
    if (s.log_density) total += *s.log_density;
  }
  return total;
}

bool Trajectory::stochastic() const { return stochastic_steps() > 0; }

std::size_t Trajectory::stochastic_steps() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.log_density.has_value() ? 1 : 0;
  return n;
}

Trajectory sample_trajectory(const Denoiser& model, const MaskedPrompt& prompt,
                             const NoiseSchedule& schedule, Rng& rng) {
  prompt.validate();
  require(model.config().height == prompt.height() && model.config().width == prompt.width(),
          "denoiser image size does not match the prompt");
  Trajectory tr;
  tr.region = prompt.mask;
  tr.initial = standard_normal(prompt.image.shape(), rng);
  Tensor x = tr.initial;
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    TrajectoryStep s;
    s.t = t;
    s.input = inpaint_constrain(x, prompt, t, schedule, rng);
    StepResult r = ddim_step(model, s.input, t, schedule, rng, &prompt.mask);
    s.sigma = r.sigma;
    s.mean = std::move(r.mean);
    s.noise = std::move(r.noise);
    s.output = std::move(r.next);
    s.log_density = r.log_density;
    x = s.output;
    tr.steps.push_back(std::move(s));
  }
  tr.final_image = inpaint_constrain(x, prompt, 0, schedule, rng);
  return tr;
}

Trajectory sample_trajectory(const Denoiser& model, const MaskedPrompt& prompt,
                             const NoiseSchedule& schedule, std::uint64_t seed) {
  Rng rng(seed);
  Trajectory tr = sample_trajectory(model, prompt, schedule, rng);
  tr.seed = seed;
  return tr;
}

Tensor replay_means(const Denoiser& model, const Trajectory& trajectory, const NoiseSchedule& schedule) {
  require(!trajectory.steps.empty(), "trajectory has no steps");
  std::vector<const Tensor*> states;
  std::vector<std::size_t> ts;
  for (const auto& s : trajectory.steps) {
    states.push_back(&s.input);
    ts.push_back(s.t);
  }
  const Tensor eps = model.predict(model.batch(states, ts, schedule));
  const std::size_t d = model.config().pixels();
  Tensor means({states.size(), d});
  for (std::size_t r = 0; r < states.size(); ++r) {
    const auto c = DdimCoefficients::at(ts[r], schedule);
    for (std::size_t i = 0; i < d; ++i) means[r * d + i] = c.mean((*states[r])[i], eps[r * d + i]);
  }
  return means;
}

std::vector<std::optional<double>> replay_log_densities(const Denoiser& model,
                                                        const Trajectory& trajectory,
                                                        const NoiseSchedule& schedule) {
  const Tensor means = replay_means(model, trajectory, schedule);
  const std::size_t d = model.config().pixels();
  std::vector<std::optional<double>> out;
  for (std::size_t r = 0; r < trajectory.steps.size(); ++r) {
    const auto& s = trajectory.steps[r];
    const double sigma = schedule.sigma(s.t);
    if (sigma == 0.0) {
      out.emplace_back();
      continue;
    }
    const Tensor mean(s.output.shape(),
                      std::vector<double>(means.values().begin() + static_cast<long>(r * d),
                                          means.values().begin() + static_cast<long>((r + 1) * d)));
    out.emplace_back(step_log_density(s.output, mean, sigma, trajectory.region));
  }
  return out;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  numerics::Checkpoint ck;
  ck.tensors.add("initial", trajectory.initial);
  ck.tensors.add("final", trajectory.final_image);
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trajectory.steps) {
    const std::string p = "step" + std::to_string(s.t);
    ck.tensors.add(p + ".input", s.input);
    ck.tensors.add(p + ".mean", s.mean);
    ck.tensors.add(p + ".noise", s.noise);
    ck.tensors.add(p + ".output", s.output);
    steps.push_back({{"t", s.t},
                     {"sigma", s.sigma},
                     {"log_density", s.log_density ? nlohmann::json(*s.log_density) : nlohmann::json()}});
  }
  std::vector<int> known(trajectory.region.size());
  for (std::size_t i = 0; i < known.size(); ++i) known[i] = trajectory.region.known(i) ? 1 : 0;
  ck.meta = {{"kind", "trajectory"},
             {"seed", trajectory.seed},
             {"prompt_id", trajectory.prompt_id},
             {"height", trajectory.region.height()},
             {"width", trajectory.region.width()},
             {"known", known},
             {"steps", steps}};
  numerics::write_checkpoint(path, ck);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  const auto ck = numerics::read_checkpoint(path);
  require(ck.meta.value("kind", "") == "trajectory", "'" + path.string() + "' is not a trajectory");
  Trajectory tr;
  tr.seed = ck.meta.at("seed").get<std::uint64_t>();
  tr.prompt_id = ck.meta.at("prompt_id").get<std::int64_t>();
  tr.region = Mask(ck.meta.at("height").get<std::size_t>(), ck.meta.at("width").get<std::size_t>());
  const auto known = ck.meta.at("known").get<std::vector<int>>();
  for (std::size_t i = 0; i < known.size(); ++i) tr.region.set_known(i, known[i] != 0);
  tr.initial = ck.tensors.get("initial");
  tr.final_image = ck.tensors.get("final");
  for (const auto& js : ck.meta.at("steps")) {
    TrajectoryStep s;
    s.t = js.at("t").get<std::size_t>();
    s.sigma = js.at("sigma").get<double>();
    if (!js.at("log_density").is_null()) s.log_density = js.at("log_density").get<double>();
    const std::string p = "step" + std::to_string(s.t);
    s.input = ck.tensors.get(p + ".input");
    s.mean = ck.tensors.get(p + ".mean");
    s.noise = ck.tensors.get(p + ".noise");
    s.output = ck.tensors.get(p + ".output");
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

Var ddim_means(Graph& g, Var eps_rows, const Tensor& state_rows,
               const std::vector<DdimCoefficients>& coefficients) {
  const Tensor& eps = g.value(eps_rows);
  require(eps.shape() == state_rows.shape(), "ddim_means: eps/state shape mismatch");
  require(coefficients.size() == eps.rows(), "ddim_means: one coefficient set per row");
  const std::size_t n = eps.rows(), d = eps.cols();
  Tensor out({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = coefficients[r].mean(state_rows[r * d + i], eps[r * d + i]);
    }
  }
  return g.record({eps_rows}, std::move(out), [coefficients, n, d](const numerics::BackwardContext& c) {
    for (std::size_t r = 0; r < n; ++r) {
      const double slope = coefficients[r].mean_slope_eps();
      for (std::size_t i = 0; i < d; ++i) (*c.grads[0])[r * d + i] += c.out_grad[r * d + i] * slope;
    }
  });
}

Var step_log_densities(Graph& g, Var means, const Tensor& targets, const std::vector<double>& sigmas,
                       const Tensor& region_weights) {
  const Tensor& m = g.value(means);
  require(m.shape() == targets.shape(), "step_log_densities: mean/target shape mismatch");
  const std::size_t n = m.rows(), d = m.cols();
  require(sigmas.size() == n, "step_log_densities: one sigma per row");
  require(region_weights.size() == d || region_weights.size() == n * d,
          "step_log_densities: region weights must be width d or n x d");
  const bool per_row = region_weights.size() != d;
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    require(sigmas[r] > 0.0, "step_log_densities needs sigma > 0");
    const double log_norm = log_normaliser(sigmas[r]);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (region_weights[per_row ? r * d + i : i] != 0.0) total += density_term(targets[r * d + i], m[r * d + i], sigmas[r], log_norm);
    }
    out[r] = total;
  }
  return g.record({means}, std::move(out),
                  [targets, sigmas, region_weights, n, d, per_row](const numerics::BackwardContext& c) {
                    const Tensor& mv = *c.inputs[0];
                    for (std::size_t r = 0; r < n; ++r) {
                      const double inv_var = 1.0 / (sigmas[r] * sigmas[r]);
                      for (std::size_t i = 0; i < d; ++i) {
                        if (region_weights[per_row ? r * d + i : i] == 0.0) continue;
                        (*c.grads[0])[r * d + i] += c.out_grad[r] * (targets[r * d + i] - mv[r * d + i]) * inv_var;
                      }
                    }
                  });
}

Var gaussian_kl_rows(Graph& g, Var means, const Tensor& reference_means,
                     const std::vector<double>& sigmas, const Tensor& region_weights) {
  const Tensor& m = g.value(means);
  require(m.shape() == reference_means.shape(), "gaussian_kl_rows: shape mismatch");
  const std::size_t n = m.rows(), d = m.cols();
  require(sigmas.size() == n, "gaussian_kl_rows: one sigma per row");
  require(region_weights.size() == d || region_weights.size() == n * d,
          "gaussian_kl_rows: region weights must be width d or n x d");
  const bool per_row = region_weights.size() != d;
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    const double inv_two_var = 1.0 / (2.0 * sigmas[r] * sigmas[r]);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (region_weights[per_row ? r * d + i : i] == 0.0) continue;
      const double diff = reference_means[r * d + i] - m[r * d + i];
      total += diff * diff * inv_two_var;
    }
    out[r] = total;
  }
  return g.record({means}, std::move(out),
                  [reference_means, sigmas, region_weights, n, d, per_row](const numerics::BackwardContext& c) {
                    const Tensor& mv = *c.inputs[0];
                    for (std::size_t r = 0; r < n; ++r) {
                      const double inv_var = 1.0 / (sigmas[r] * sigmas[r]);
                      for (std::size_t i = 0; i < d; ++i) {
                        if (region_weights[per_row ? r * d + i : i] == 0.0) continue;
                        (*c.grads[0])[r * d + i] +=
                            c.out_grad[r] * (mv[r * d + i] - reference_means[r * d + i]) * inv_var;
                      }
                    }
                  });
}

}  // namespace trustalign::diffusion
