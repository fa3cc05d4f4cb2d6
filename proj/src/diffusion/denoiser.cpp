#include "trustalign/diffusion/denoiser.hpp"

#include <cmath>
#include <numbers>

#include "trustalign/errors.hpp"

namespace trustalign::diffusion {

numerics::MlpSpec DenoiserConfig::mlp_spec() const {
  numerics::MlpSpec spec;
  spec.widths.push_back(pixels() + time_features);
  for (auto h : hidden) spec.widths.push_back(h);
  spec.widths.push_back(pixels());
  spec.hidden = activation;
  spec.output = numerics::Activation::identity;
  return spec;
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"height", height},
          {"width", width},
          {"hidden", hidden},
          {"activation", numerics::to_string(activation)},
          {"time_features", time_features}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.hidden = j.value("hidden", c.hidden);
  c.activation = numerics::activation_from_string(j.value("activation", std::string("silu")));
  c.time_features = j.value("time_features", c.time_features);
  require(c.time_features % 2 == 0, "time_features must be even");
  return c;
}

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      spec_(config_.mlp_spec()),
      params_(numerics::init_mlp(spec_, kPrefix, seed)) {}

Denoiser::Denoiser(DenoiserConfig config, ParameterSet params)
    : config_(std::move(config)), spec_(config_.mlp_spec()), params_(std::move(params)) {
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    const auto& w = params_.get(numerics::weight_name(kPrefix, l));
    require(w.rows() == spec_.widths[l] && w.cols() == spec_.widths[l + 1],
            "denoiser parameters do not match config at layer " + std::to_string(l));
  }
}

DenoiserBatch Denoiser::batch(const std::vector<const Tensor*>& states, const std::vector<std::size_t>& steps,
                              const NoiseSchedule& schedule) const {
  require(states.size() == steps.size() && !states.empty(), "denoiser batch: states/steps mismatch");
  const std::size_t d = config_.pixels();
  const std::size_t width = d + config_.time_features;
  DenoiserBatch b{Tensor({states.size(), width}), Tensor({states.size(), d}), {}, {}};
  for (std::size_t r = 0; r < states.size(); ++r) {
    const Tensor& x = *states[r];
    require(x.size() == d, "denoiser expects " + std::to_string(d) + " pixels, got " + std::to_string(x.size()));
    require(steps[r] >= 1 && steps[r] <= schedule.steps(), "denoiser step " + std::to_string(steps[r]) + " outside [1, T]");
    double* row = b.rows.data().data() + r * width;
    std::copy(x.data().begin(), x.data().end(), row);
    std::copy(x.data().begin(), x.data().end(), b.states.data().begin() + static_cast<long>(r * d));
    const double tau = static_cast<double>(steps[r]) / static_cast<double>(schedule.steps());
    for (std::size_t k = 0; k < config_.time_features / 2; ++k) {
      const double angle = std::numbers::pi * static_cast<double>(k + 1) * tau;
      row[d + 2 * k] = std::sin(angle);
      row[d + 2 * k + 1] = std::cos(angle);
    }
    const double a = schedule.alpha(steps[r]);
    b.sqrt_alpha.push_back(std::sqrt(a));
    b.sqrt_one_minus_alpha.push_back(std::sqrt(1.0 - a));
  }
  return b;
}

namespace {
double noise_from_clean(double x, double clean, double sqrt_alpha, double sqrt_one_minus_alpha) {
  return (x - sqrt_alpha * clean) / sqrt_one_minus_alpha;
}
}  // namespace

Tensor Denoiser::predict(const DenoiserBatch& batch) const {
  Tensor out = numerics::forward_mlp(params_, batch.rows, spec_, kPrefix);
  const std::size_t d = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = noise_from_clean(batch.states[r * d + i], out[r * d + i], batch.sqrt_alpha[r],
                                        batch.sqrt_one_minus_alpha[r]);
    }
  }
  return out;
}

Var Denoiser::predict(Graph& g, const std::map<std::string, Var>& vars, const DenoiserBatch& batch) const {
  const Var clean = numerics::forward_mlp(g, vars, g.constant(batch.rows), spec_, kPrefix);
  Tensor out = g.value(clean);
  const std::size_t n = out.rows(), d = out.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = noise_from_clean(batch.states[r * d + i], out[r * d + i], batch.sqrt_alpha[r],
                                        batch.sqrt_one_minus_alpha[r]);
    }
  }
  std::vector<double> slopes(n);
  for (std::size_t r = 0; r < n; ++r) slopes[r] = -batch.sqrt_alpha[r] / batch.sqrt_one_minus_alpha[r];
  return g.record({clean}, std::move(out), [slopes, n, d](const numerics::BackwardContext& c) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < d; ++i) (*c.grads[0])[r * d + i] += c.out_grad[r * d + i] * slopes[r];
    }
  });
}

numerics::Checkpoint Denoiser::to_checkpoint() const {
  numerics::Checkpoint ck{params_, {{"kind", "denoiser"}, {"config", config_.to_json()}}};
  return ck;
}

Denoiser Denoiser::from_checkpoint(const numerics::Checkpoint& checkpoint) {
  require(checkpoint.meta.value("kind", "") == "denoiser", "checkpoint does not hold a denoiser");
  return Denoiser(DenoiserConfig::from_json(checkpoint.meta.at("config")), checkpoint.tensors);
}

}  // namespace trustalign::diffusion
