#include "trustalign/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "trustalign/errors.hpp"

namespace trustalign::diffusion {

namespace {
constexpr std::size_t kBaseSteps = 1000;

std::vector<double> base_alpha_bar(ScheduleKind kind) {
  std::vector<double> alpha_bar(kBaseSteps + 1, 1.0);
  if (kind == ScheduleKind::linear) {
    constexpr double beta_start = 1e-4, beta_end = 0.02;
    for (std::size_t i = 1; i <= kBaseSteps; ++i) {
      const double beta = beta_start + (beta_end - beta_start) * static_cast<double>(i - 1) /
                                           static_cast<double>(kBaseSteps - 1);
      alpha_bar[i] = alpha_bar[i - 1] * (1.0 - beta);
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [](double s) {
      const double c = std::cos((s + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (std::size_t i = 1; i <= kBaseSteps; ++i) {
      const double s0 = static_cast<double>(i - 1) / kBaseSteps;
      const double s1 = static_cast<double>(i) / kBaseSteps;
      const double beta = std::min(1.0 - f(s1) / f(s0), 0.999);
      alpha_bar[i] = alpha_bar[i - 1] * (1.0 - beta);
    }
  }
  return alpha_bar;
}
}  // namespace

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ValidationError("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "cosine"; }

NoiseSchedule::NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma, double eta)
    : alpha_(std::move(alpha)), sigma_(std::move(sigma)), eta_(eta) {
  validate();
}

NoiseSchedule NoiseSchedule::build(std::size_t steps, ScheduleKind kind, double eta) {
  require(steps >= 1, "schedule needs at least one step");
  require(steps <= kBaseSteps, "schedule supports at most 1000 steps");
  require(eta >= 0.0 && eta <= 1.0, "eta must lie in [0,1]");
  const auto alpha_bar = base_alpha_bar(kind);
  std::vector<double> alpha(steps + 1);
  for (std::size_t t = 0; t <= steps; ++t) alpha[t] = alpha_bar[t * kBaseSteps / steps];

  std::vector<double> sigma(steps, 0.0);
  if (eta > 0.0) {
    for (std::size_t t = 1; t <= steps; ++t) {
      const double a = alpha[t], a_prev = alpha[t - 1];
      sigma[t - 1] = eta * std::sqrt((1.0 - a_prev) / (1.0 - a)) * std::sqrt(1.0 - a / a_prev);
    }
  }
  return NoiseSchedule(std::move(alpha), std::move(sigma), eta);
}

NoiseSchedule NoiseSchedule::from_values(std::vector<double> alpha, std::vector<double> sigma) {
  return NoiseSchedule(std::move(alpha), std::move(sigma), -1.0);
}

void NoiseSchedule::validate() const {
  require(!sigma_.empty(), "schedule needs at least one step");
  require(alpha_.size() == sigma_.size() + 1, "schedule needs T+1 alphas for T sigmas");
  require(alpha_[0] == 1.0, "alpha_0 must equal 1");
  for (std::size_t t = 1; t < alpha_.size(); ++t) {
    require(alpha_[t] > 0.0 && alpha_[t] < alpha_[t - 1],
            "alpha must be positive and strictly decreasing (t=" + std::to_string(t) + ")");
    const double s = sigma_[t - 1];
    require(std::isfinite(s) && s >= 0.0, "sigma must be finite and non-negative");
    require(1.0 - alpha_[t - 1] - s * s >= -1e-12,
            "1 - alpha_{t-1} - sigma_t^2 is negative at t=" + std::to_string(t));
  }
}

double NoiseSchedule::alpha(std::size_t t) const {
  require(t < alpha_.size(), "step " + std::to_string(t) + " outside [0, T]");
  return alpha_[t];
}

double NoiseSchedule::sigma(std::size_t t) const {
  require(t >= 1 && t <= sigma_.size(), "step " + std::to_string(t) + " outside [1, T]");
  return sigma_[t - 1];
}

bool NoiseSchedule::deterministic() const {
  return std::all_of(sigma_.begin(), sigma_.end(), [](double s) { return s == 0.0; });
}

}  // namespace trustalign::diffusion
