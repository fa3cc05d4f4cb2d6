#include "trustalign/alignment/trust.hpp"

#include <algorithm>
#include <cmath>

#include "trustalign/errors.hpp"

namespace trustalign::alignment {

GammaForm gamma_form_from_string(const std::string& name) {
  if (name == "exp") return GammaForm::exp;
  if (name == "exp_plus_inverse") return GammaForm::exp_plus_inverse;
  if (name == "linear") return GammaForm::linear;
  if (name == "constant") return GammaForm::constant;
  throw ValidationError("unknown gamma form '" + name + "'");
}

std::string to_string(GammaForm form) {
  switch (form) {
    case GammaForm::exp: return "exp";
    case GammaForm::exp_plus_inverse: return "exp_plus_inverse";
    case GammaForm::linear: return "linear";
    case GammaForm::constant: return "constant";
  }
  return "?";
}

nlohmann::json TrustConfig::to_json() const {
  return {{"form", to_string(form)}, {"k", k},   {"b", b}, {"b1", b1}, {"b2", b2}, {"gamma_floor", gamma_floor},
          {"f_floor", f_floor}};
}

TrustConfig TrustConfig::from_json(const nlohmann::json& j) {
  TrustConfig c;
  c.form = gamma_form_from_string(j.value("form", to_string(c.form)));
  c.k = j.value("k", c.k);
  c.b = j.value("b", c.b);
  c.b1 = j.value("b1", c.b1);
  c.b2 = j.value("b2", c.b2);
  c.gamma_floor = j.value("gamma_floor", c.gamma_floor);
  c.f_floor = j.value("f_floor", c.f_floor);
  require(c.gamma_floor > 0.0, "gamma_floor must be > 0");
  require(c.f_floor > 0.0, "f_floor must be > 0");
  return c;
}

double trust_weight(double f, const TrustConfig& cfg) {
  require(f >= 0.0 && std::isfinite(f), "trust_weight needs a finite f >= 0");
  switch (cfg.form) {
    case GammaForm::exp: return std::exp(-cfg.k * f + cfg.b);
    case GammaForm::exp_plus_inverse: return std::exp(-cfg.k * f) + cfg.b1 / std::max(f, cfg.f_floor) + cfg.b2;
    case GammaForm::linear: return std::max(-cfg.k * f + cfg.b, cfg.gamma_floor);
    case GammaForm::constant: return cfg.b;
  }
  return cfg.b;
}

double mean_trust_weight(const std::vector<double>& fs, const TrustConfig& cfg) {
  require(!fs.empty(), "mean_trust_weight needs samples");
  double total = 0.0;
  for (double f : fs) total += trust_weight(f, cfg);
  return total / static_cast<double>(fs.size());
}

double calibrate_exp_k(const std::vector<double>& fs, double b, double target) {
  TrustConfig cfg;
  cfg.form = GammaForm::exp;
  cfg.b = b;
  cfg.k = 0.0;
  require(target > 0.0 && target <= mean_trust_weight(fs, cfg),
          "target mean weight exceeds e^b; no k >= 0 reaches it");
  double lo = 0.0, hi = 1.0;
  for (cfg.k = hi; mean_trust_weight(fs, cfg) > target; cfg.k = hi) {
    hi *= 2.0;
    require(hi < 1e12, "target mean weight is unreachable for these confidence norms");
  }
  for (int it = 0; it < 200; ++it) {
    cfg.k = 0.5 * (lo + hi);
    (mean_trust_weight(fs, cfg) > target ? lo : hi) = cfg.k;
  }
  return 0.5 * (lo + hi);
}

}  // namespace trustalign::alignment
