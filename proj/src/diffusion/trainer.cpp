#include "trustalign/diffusion/trainer.hpp"

#include <cmath>
#include <random>

#include "trustalign/diffusion/sampler.hpp"
#include "trustalign/errors.hpp"
#include "trustalign/numerics/optim.hpp"

namespace trustalign::diffusion {

nlohmann::json TrainBaseConfig::to_json() const {
  return {{"iterations", iterations},       {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"heldout_fraction", heldout_fraction},
          {"heldout_draws", heldout_draws}, {"seed", seed}};
}

TrainBaseConfig TrainBaseConfig::from_json(const nlohmann::json& j) {
  TrainBaseConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.heldout_fraction = j.value("heldout_fraction", c.heldout_fraction);
  c.heldout_draws = j.value("heldout_draws", c.heldout_draws);
  c.seed = j.value("seed", c.seed);
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.learning_rate >= 0.0, "learning_rate must be >= 0");
  require(c.heldout_fraction > 0.0 && c.heldout_fraction < 1.0, "heldout_fraction must lie in (0,1)");
  return c;
}

namespace {

struct Batch {
  DenoiserBatch input;
  Tensor noise;
};

Batch make_batch(const Denoiser& model, const std::vector<const Tensor*>& images,
                 const NoiseSchedule& schedule, Rng& rng) {
  std::uniform_int_distribution<std::size_t> step(1, schedule.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> states;
  std::vector<std::size_t> steps;
  const std::size_t d = model.config().pixels();
  Tensor noise({images.size(), d});
  states.reserve(images.size());
  for (std::size_t r = 0; r < images.size(); ++r) {
    Tensor n(images[r]->shape());
    for (double& v : n.data()) v = normal(rng);
    const std::size_t t = step(rng);
    std::copy(n.data().begin(), n.data().end(), noise.data().begin() + static_cast<long>(r * d));
    states.push_back(forward_diffuse(*images[r], t, schedule, n));
    steps.push_back(t);
  }
  std::vector<const Tensor*> ptrs;
  for (const auto& s : states) ptrs.push_back(&s);
  return {model.batch(ptrs, steps, schedule), std::move(noise)};
}

double mse(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

}  // namespace

TrainBaseReport train_base(Denoiser& model, const std::vector<Tensor>& images,
                           const NoiseSchedule& schedule, const TrainBaseConfig& config) {
  require(!images.empty(), "train_base needs a nonempty dataset");
  require(config.batch_size >= 1, "batch_size must be >= 1");
  for (const auto& im : images) {
    require(im.size() == model.config().pixels(), "image size does not match the denoiser");
  }
  Rng rng(config.seed);

  std::size_t n_heldout = static_cast<std::size_t>(std::floor(config.heldout_fraction * images.size()));
  if (images.size() >= 2) n_heldout = std::clamp<std::size_t>(n_heldout, 1, images.size() - 1);
  else n_heldout = 0;
  std::vector<const Tensor*> train, heldout;
  for (std::size_t i = 0; i < images.size(); ++i) {
    (i < images.size() - n_heldout ? train : heldout).push_back(&images[i]);
  }
  if (heldout.empty()) heldout = train;

  std::vector<const Tensor*> heldout_draws;
  for (std::size_t k = 0; k < config.heldout_draws; ++k) {
    heldout_draws.insert(heldout_draws.end(), heldout.begin(), heldout.end());
  }
  Rng heldout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const Batch eval = make_batch(model, heldout_draws, schedule, heldout_rng);
  auto heldout_mse = [&] { return mse(model.predict(eval.input), eval.noise); };

  TrainBaseReport report;
  report.initial_heldout_mse = heldout_mse();
  numerics::Adam opt(config.learning_rate);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  double first_loss = 0.0;
  std::size_t above = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<const Tensor*> chosen(config.batch_size);
    for (auto& p : chosen) p = train[pick(rng)];
    const Batch batch = make_batch(model, chosen, schedule, rng);

    Graph g;
    const auto vars = g.bind(model.params());
    const Var pred = model.predict(g, vars, batch.input);
    const Var loss = numerics::mean(g, numerics::square(g, numerics::sub(g, pred, g.constant(batch.noise))));
    const double value = g.value(loss).item();
    if (!std::isfinite(value)) {
      throw NumericError("train_base: non-finite loss at iteration " + std::to_string(it));
    }
    if (it == 0) first_loss = value;
    above = value > 10.0 * first_loss ? above + 1 : 0;
    if (above >= 100) {
      throw NumericError("train_base diverged: loss " + std::to_string(value) + " > 10x initial " +
                         std::to_string(first_loss) + " for 100 consecutive steps (iteration " +
                         std::to_string(it) + ")");
    }
    report.losses.push_back(value);
    if (config.learning_rate > 0.0) opt.step(model.params(), g.backward(loss));
  }
  report.final_heldout_mse = heldout_mse();
  return report;
}

}  // namespace trustalign::diffusion
