#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace trustalign::alignment {

enum class GammaForm { exp, exp_plus_inverse, linear, constant };

GammaForm gamma_form_from_string(const std::string& name);
std::string to_string(GammaForm form);

struct TrustConfig {
  GammaForm form = GammaForm::exp;
  double k = 0.05;
  double b = 0.7;
  double b1 = 0.0;  // exp_plus_inverse only
  double b2 = 0.0;
  double gamma_floor = 0.05;
  double f_floor = 1e-3;

  nlohmann::json to_json() const;
  static TrustConfig from_json(const nlohmann::json& j);
};

/// exp:               e^{-k·f + b}
/// exp_plus_inverse:  e^{-k·f} + b1/max(f, f_floor) + b2
/// linear:            max(-k·f + b, gamma_floor)
/// constant:          b
double trust_weight(double f, const TrustConfig& cfg);

double mean_trust_weight(const std::vector<double>& fs, const TrustConfig& cfg);

/// k >= 0 for which the mean exp-form weight over `fs` equals `target`, by
/// bisection. Requires 0 < target <= e^b.
double calibrate_exp_k(const std::vector<double>& fs, double b, double target);

}  // namespace trustalign::alignment
