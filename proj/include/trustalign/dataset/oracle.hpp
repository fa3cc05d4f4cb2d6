#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "trustalign/diffusion/image.hpp"

namespace trustalign::dataset {

using diffusion::Mask;
using numerics::Tensor;

struct CriterionScores {
  double structural = 0.0;
  double texture = 0.0;
  double overall = 0.0;
};

/// Synthetic stand-in for the three annotator criteria, each in [0,7]. Only
/// unknown pixels of `inpainted` are read.
///   structural: 4x4 block means over the unknown region
///   texture: gradient mismatch across the known/unknown seam
///   overall: RMSE over the unknown region
CriterionScores oracle_score(const Tensor& original, const Tensor& inpainted, const Mask& mask);

inline constexpr double kStructuralWeight = 0.15;
inline constexpr double kTextureWeight = 0.15;
inline constexpr double kOverallWeight = 0.7;

/// 0.15·structural + 0.15·texture + 0.7·overall; each score must lie in [0,7].
double aggregate_score(const CriterionScores& s);

enum class NormalizationMode { variance, stddev };

NormalizationMode normalization_mode_from_string(const std::string& name);
std::string to_string(NormalizationMode mode);

struct NormalizationFactors {
  double mean = 0.0;
  double var = 1.0;
};

/// split_tag -> (mean, var).
class NormalizationTable {
 public:
  void set(const std::string& split_tag, NormalizationFactors factors);
  bool contains(const std::string& split_tag) const { return entries_.count(split_tag) > 0; }
  const NormalizationFactors& at(const std::string& split_tag) const;
  const std::map<std::string, NormalizationFactors>& entries() const { return entries_; }

  nlohmann::json to_json() const;
  static NormalizationTable from_json(const nlohmann::json& j);

  /// The published per-dataset factors, tagged "<dataset>/<pattern>".
  static NormalizationTable preset();

 private:
  std::map<std::string, NormalizationFactors> entries_;
};

/// (s - mean)/var, or (s - mean)/sqrt(var) in stddev mode.
double normalize_score(double s, const NormalizationTable& table, const std::string& split_tag,
                       NormalizationMode mode = NormalizationMode::variance);

}  // namespace trustalign::dataset
