#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace trustalign::diffusion {

enum class ScheduleKind { linear, cosine };

ScheduleKind schedule_kind_from_string(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Cumulative signal coefficients alpha_0..alpha_T (alpha_0 = 1, strictly
/// decreasing) and per-step noise scales sigma_1..sigma_T, where sigma_t is
/// a standard deviation.
class NoiseSchedule {
 public:
  /// DDIM sub-sequence of a 1000-step base schedule. sigma_t follows the DDIM
  /// family: eta * sqrt((1 - a_{t-1}) / (1 - a_t)) * sqrt(1 - a_t / a_{t-1}).
  static NoiseSchedule build(std::size_t steps, ScheduleKind kind, double eta);

  /// Arbitrary schedule; alpha has T+1 entries, sigma has T.
  static NoiseSchedule from_values(std::vector<double> alpha, std::vector<double> sigma);

  std::size_t steps() const { return sigma_.size(); }
  double alpha(std::size_t t) const;
  double sigma(std::size_t t) const;
  const std::vector<double>& alphas() const { return alpha_; }
  const std::vector<double>& sigmas() const { return sigma_; }
  double eta() const { return eta_; }
  bool deterministic() const;

 private:
  NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma, double eta);
  void validate() const;

  std::vector<double> alpha_;
  std::vector<double> sigma_;  // sigma_[t-1] is sigma_t
  double eta_ = 0.0;
};

}  // namespace trustalign::diffusion
