#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "fd_check.hpp"
#include "trustalign/diffusion/denoiser.hpp"
#include "trustalign/diffusion/image.hpp"
#include "trustalign/diffusion/sampler.hpp"
#include "trustalign/diffusion/schedule.hpp"
#include "trustalign/diffusion/trainer.hpp"
#include "trustalign/errors.hpp"

using namespace trustalign;
using namespace trustalign::diffusion;

namespace {

DenoiserConfig tiny_config() {
  DenoiserConfig c;
  c.height = c.width = 3;
  c.hidden = {8};
  c.time_features = 4;
  return c;
}

MaskedPrompt tiny_prompt() {
  Tensor img({3, 3}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  Mask m(3, 3, true);
  m.set_known(1, 1, false);
  m.set_known(2, 2, false);
  return make_prompt(img, m);
}

double log_normal_oracle(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace

TEST_CASE("build_schedule examples") {
  const auto one = NoiseSchedule::build(1, ScheduleKind::linear, 0.0);
  CHECK(one.sigmas() == std::vector<double>{0.0});
  for (std::size_t t : {1u, 5u, 50u}) {
    for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
      CHECK(NoiseSchedule::build(t, kind, 0.0).deterministic());
    }
  }
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    const auto s = NoiseSchedule::build(10, kind, 1.0);
    CHECK(s.alpha(0) == 1.0);
    for (std::size_t t = 1; t <= 10; ++t) {
      CHECK(s.alpha(t) < s.alpha(t - 1));
      CHECK(s.alpha(t) > 0.0);
      CHECK(1.0 - s.alpha(t - 1) - s.sigma(t) * s.sigma(t) >= -1e-12);
    }
  }
}

TEST_CASE("sigma follows the DDIM family") {
  const auto s = NoiseSchedule::build(10, ScheduleKind::linear, 0.4);
  for (std::size_t t = 1; t <= 10; ++t) {
    const double a = s.alpha(t), ap = s.alpha(t - 1);
    CHECK(s.sigma(t) == doctest::Approx(0.4 * std::sqrt((1 - ap) / (1 - a)) * std::sqrt(1 - a / ap)));
  }
  CHECK(s.sigma(1) == 0.0);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(NoiseSchedule::build(0, ScheduleKind::linear, 0.0), ValidationError);
  CHECK_THROWS_AS(NoiseSchedule::build(10, ScheduleKind::linear, 1.5), ValidationError);
  CHECK_THROWS_AS(NoiseSchedule::from_values({1.0, 0.5, 0.6}, {0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(NoiseSchedule::from_values({0.9, 0.5}, {0.0}), ValidationError);
  // A one-step schedule cannot be stochastic: 1 - alpha_0 - sigma_1^2 = -sigma_1^2.
  CHECK_THROWS_AS(NoiseSchedule::from_values({1.0, 0.5}, {0.1}), ValidationError);
  CHECK_NOTHROW(NoiseSchedule::from_values({1.0, 0.5}, {0.0}));
}

TEST_CASE("forward_diffuse examples") {
  const auto s = NoiseSchedule::from_values({1.0, 0.5}, {0.0});
  const Tensor x0({4}, std::vector<double>{0.2, -0.4, 0.9, 0.0});
  const Tensor n({4}, std::vector<double>{1.0, -2.0, 0.5, 3.0});
  CHECK(forward_diffuse(x0, 0, s, n) == x0);
  const Tensor out = forward_diffuse(Tensor({4}), 1, s, n);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(n[i] / std::sqrt(2.0)));
  // affine in x0
  const Tensor a = forward_diffuse(x0, 1, s, n);
  Tensor x2 = x0;
  for (double& v : x2.data()) v *= 2.0;
  const Tensor b = forward_diffuse(x2, 1, s, n);
  for (std::size_t i = 0; i < 4; ++i) CHECK(b[i] - a[i] == doctest::Approx(a[i] - out[i]));
}

TEST_CASE("ddim mean scalar example") {
  const auto s = NoiseSchedule::from_values({1.0, 0.5}, {0.0});
  const Tensor m = ddim_mean(Tensor({1}, std::vector<double>{1.0}), Tensor({1}), 1, s);
  CHECK(m[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("ddim mean matches the written formula") {
  const auto s = NoiseSchedule::build(10, ScheduleKind::cosine, 0.7);
  const std::size_t t = 6;
  const double a = s.alpha(t), ap = s.alpha(t - 1), sg = s.sigma(t);
  const double x = 0.37, eps = -1.2;
  const double expected = std::sqrt(ap) * (x - std::sqrt(1 - a) * eps) / std::sqrt(a) + std::sqrt(1 - ap - sg * sg) * eps;
  CHECK(DdimCoefficients::at(t, s).mean(x, eps) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("step_log_density examples") {
  const Tensor zero({1});
  CHECK(step_log_density(zero, zero, 1.0) == doctest::Approx(-0.918939).epsilon(1e-6));
  CHECK(step_log_density(Tensor({1}, std::vector<double>{0.3}), Tensor({1}, std::vector<double>{-0.2}), 0.5) ==
        doctest::Approx(-1.418939 - std::log(0.5)).epsilon(1e-6));
  CHECK(step_log_density(Tensor({1}, std::vector<double>{1.0}), zero, 1.0) == doctest::Approx(-1.418939).epsilon(1e-6));
  const std::size_t d = 9;
  CHECK(step_log_density(Tensor({d}), Tensor({d}), 0.3) ==
        doctest::Approx(-0.5 * d * std::log(2 * std::numbers::pi * 0.09)));
  CHECK_THROWS_AS(step_log_density(zero, zero, 0.0), ValidationError);
}

TEST_CASE("step_log_density over a region counts unknown pixels only") {
  const auto p = tiny_prompt();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  Tensor x({3, 3}), mu({3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    x[i] = n(rng);
    mu[i] = n(rng);
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    if (!p.mask.known(i)) expected += log_normal_oracle(x[i], mu[i], 0.4);
  }
  CHECK(step_log_density(x, mu, 0.4, p.mask) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("step density integrates to one") {
  std::mt19937_64 rng(12);
  const double sigma = 0.7, lo = -6 * sigma, hi = 6 * sigma;
  std::uniform_real_distribution<double> u(lo, hi);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    acc += std::exp(step_log_density(Tensor({1}, std::vector<double>{u(rng)}), Tensor({1}), sigma));
  }
  CHECK(std::abs((hi - lo) * acc / n - 1.0) < 0.02);
}

TEST_CASE("denoiser output is an exact noise predictor of its clean estimate") {
  const Denoiser model(tiny_config(), 3);
  const auto s = NoiseSchedule::build(5, ScheduleKind::linear, 0.5);
  Tensor x({3, 3});
  for (std::size_t i = 0; i < 9; ++i) x[i] = 0.1 * static_cast<double>(i) - 0.4;
  const auto batch = model.batch({&x}, {3}, s);
  const Tensor eps = model.predict(batch);
  const Tensor clean = numerics::forward_mlp(model.params(), batch.rows, model.spec(), Denoiser::kPrefix);
  const double a = s.alpha(3);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(eps[i] == doctest::Approx((x[i] - std::sqrt(a) * clean[i]) / std::sqrt(1 - a)).epsilon(1e-13));
  }
}

TEST_CASE("denoiser graph path matches values and finite differences") {
  const Denoiser model(tiny_config(), 5);
  const auto s = NoiseSchedule::build(5, ScheduleKind::linear, 0.5);
  Tensor x1({3, 3}, 0.3), x2({3, 3}, -0.2);
  const auto batch = model.batch({&x1, &x2}, {2, 5}, s);
  numerics::Graph g;
  const auto vars = g.bind(model.params());
  CHECK(g.value(model.predict(g, vars, batch)) == model.predict(batch));

  Tensor w({2, 9});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(static_cast<double>(i));
  const auto r = trustalign::testing::finite_difference_check(model.params(), [&](numerics::Graph& gg, const auto& v) {
    return numerics::weighted_sum(gg, model.predict(gg, v, batch), w);
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("ddim_step contracts") {
  const Denoiser model(tiny_config(), 7);
  const auto det = NoiseSchedule::build(4, ScheduleKind::linear, 0.0);
  const auto sto = NoiseSchedule::build(4, ScheduleKind::linear, 0.8);
  Tensor x({3, 3}, 0.25);
  Rng rng(1);
  const auto r0 = ddim_step(model, x, 3, det, rng);
  CHECK(r0.next == r0.mean);
  CHECK_FALSE(r0.log_density.has_value());

  Rng a(99), b(99);
  const auto ra = ddim_step(model, x, 3, sto, a);
  const auto rb = ddim_step(model, x, 3, sto, b);
  CHECK(ra.next == rb.next);
  REQUIRE(ra.log_density.has_value());
  CHECK(*ra.log_density == *rb.log_density);
}

TEST_CASE("inpaint_constrain") {
  const auto p = tiny_prompt();
  const auto s = NoiseSchedule::build(4, ScheduleKind::linear, 0.5);
  Tensor x({3, 3}, 5.0);
  Rng rng(8);
  Rng oracle_rng = rng;
  const Tensor out = inpaint_constrain(x, p, 2, s, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < 9; ++i) {
    const double noise = n(oracle_rng);
    if (p.mask.known(i)) {
      CHECK(out[i] == doctest::Approx(std::sqrt(s.alpha(2)) * p.image[i] + std::sqrt(1 - s.alpha(2)) * noise));
    } else {
      CHECK(out[i] == 5.0);
    }
  }
  const Tensor at0 = inpaint_constrain(x, p, 0, s, rng);
  for (std::size_t i = 0; i < 9; ++i) CHECK(at0[i] == (p.mask.known(i) ? p.image[i] : 5.0));

  Mask all_unknown(3, 3, false);
  CHECK_THROWS_AS(make_prompt(p.image, all_unknown), ValidationError);
  Mask all_known(3, 3, true);
  CHECK_THROWS_AS(make_prompt(p.image, all_known), ValidationError);
}

TEST_CASE("sample_trajectory with eta = 0 is deterministic with zero log-probability") {
  const Denoiser model(tiny_config(), 2);
  const auto s = NoiseSchedule::build(6, ScheduleKind::linear, 0.0);
  const auto p = tiny_prompt();
  const auto a = sample_trajectory(model, p, s, 31);
  const auto b = sample_trajectory(model, p, s, 31);
  CHECK(a.final_image == b.final_image);
  CHECK(a.total_log_prob() == 0.0);
  CHECK_FALSE(a.stochastic());
}

TEST_CASE("trajectory invariants and replay") {
  const Denoiser model(tiny_config(), 2);
  const auto s = NoiseSchedule::build(6, ScheduleKind::cosine, 0.6);
  const auto p = tiny_prompt();
  const auto tr = sample_trajectory(model, p, s, 77);
  CHECK(tr.steps.size() == 6);
  CHECK(tr.stochastic_steps() == 5);
  for (const auto& st : tr.steps) {
    for (std::size_t i = 0; i < 9; ++i) CHECK(st.output[i] == st.mean[i] + st.sigma * st.noise[i]);
    if (st.sigma > 0.0) {
      REQUIRE(st.log_density.has_value());
      CHECK(std::abs(*st.log_density - step_log_density(st.output, st.mean, st.sigma, p.mask)) < 1e-9);
    }
  }
  for (std::size_t i = 0; i < 9; ++i) {
    if (p.mask.known(i)) CHECK(tr.final_image[i] == p.image[i]);
  }
  const auto replayed = replay_log_densities(model, tr, s);
  double total = 0.0;
  for (std::size_t k = 0; k < tr.steps.size(); ++k) {
    CHECK(replayed[k].has_value() == tr.steps[k].log_density.has_value());
    if (replayed[k]) {
      CHECK(std::abs(*replayed[k] - *tr.steps[k].log_density) < 1e-9);
      total += *replayed[k];
    }
  }
  CHECK(std::abs(total - tr.total_log_prob()) < 1e-9);
}

TEST_CASE("one stochastic step: total log-probability is that step's density") {
  // sigma_1 = 0 for any valid schedule, so the one-step reduction uses T = 2
  // where only t = 2 is stochastic.
  const Denoiser model(tiny_config(), 4);
  const auto s = NoiseSchedule::build(2, ScheduleKind::linear, 1.0);
  REQUIRE(s.sigma(2) > 0.0);
  const auto tr = sample_trajectory(model, tiny_prompt(), s, 5);
  REQUIRE(tr.stochastic_steps() == 1);
  CHECK(tr.total_log_prob() == *tr.steps[0].log_density);
}

TEST_CASE("trajectory file round trip") {
  const Denoiser model(tiny_config(), 2);
  const auto s = NoiseSchedule::build(4, ScheduleKind::linear, 0.5);
  auto tr = sample_trajectory(model, tiny_prompt(), s, 13);
  tr.prompt_id = 42;
  const auto path = std::filesystem::temp_directory_path() / "trustalign_traj_test.ckpt";
  save_trajectory(path, tr);
  const auto back = load_trajectory(path);
  std::filesystem::remove(path);
  CHECK(back.seed == 13);
  CHECK(back.prompt_id == 42);
  CHECK(back.region == tr.region);
  CHECK(back.final_image == tr.final_image);
  REQUIRE(back.steps.size() == tr.steps.size());
  for (std::size_t k = 0; k < tr.steps.size(); ++k) {
    CHECK(back.steps[k].output == tr.steps[k].output);
    CHECK(back.steps[k].log_density == tr.steps[k].log_density);
  }
}

TEST_CASE("train_base") {
  DenoiserConfig cfg;
  cfg.height = cfg.width = 4;
  cfg.hidden = {32};
  const auto s = NoiseSchedule::build(10, ScheduleKind::linear, 0.0);
  std::vector<Tensor> zeros(40, Tensor({4, 4}));

  SUBCASE("constant-zero images are learned") {
    Denoiser model(cfg, 1);
    TrainBaseConfig tc;
    tc.iterations = 300;
    tc.seed = 3;
    const auto rep = train_base(model, zeros, s, tc);
    CHECK(rep.final_heldout_mse < 0.05);
    CHECK(rep.losses.size() == 300);
  }
  SUBCASE("learning rate 0 leaves parameters unchanged") {
    Denoiser model(cfg, 1);
    const auto before = model.params();
    TrainBaseConfig tc;
    tc.iterations = 20;
    tc.learning_rate = 0.0;
    train_base(model, zeros, s, tc);
    CHECK(model.params() == before);
  }
  SUBCASE("same seed gives an identical checkpoint") {
    std::vector<Tensor> imgs;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 20; ++k) {
      Tensor t({4, 4});
      for (double& v : t.data()) v = u(rng);
      imgs.push_back(t);
    }
    TrainBaseConfig tc;
    tc.iterations = 50;
    tc.seed = 9;
    Denoiser a(cfg, 1), b(cfg, 1);
    train_base(a, imgs, s, tc);
    train_base(b, imgs, s, tc);
    CHECK(numerics::encode_checkpoint(a.to_checkpoint()) == numerics::encode_checkpoint(b.to_checkpoint()));
  }
}

TEST_CASE("denoiser checkpoint round trip") {
  const Denoiser model(tiny_config(), 6);
  const auto back = Denoiser::from_checkpoint(numerics::decode_checkpoint(numerics::encode_checkpoint(model.to_checkpoint())));
  CHECK(back.params() == model.params());
  CHECK(back.config().hidden == model.config().hidden);
}
