#include "trustalign/dataset/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "trustalign/errors.hpp"

namespace trustalign::dataset {

namespace {
constexpr double kMaxScore = 7.0;
constexpr double kScale = 0.5;
constexpr std::size_t kBlock = 4;

double to_score(double error) { return kMaxScore * (1.0 - std::min(1.0, error / kScale)); }
}  // namespace

CriterionScores oracle_score(const Tensor& original, const Tensor& inpainted, const Mask& mask) {
  require(original.size() == inpainted.size() && original.size() == mask.size(),
          "oracle_score: original, inpainted and mask sizes differ");
  const std::size_t h = mask.height(), w = mask.width();

  double block_error = 0.0;
  std::size_t blocks = 0;
  for (std::size_t br = 0; br < h; br += kBlock) {
    for (std::size_t bc = 0; bc < w; bc += kBlock) {
      double a = 0.0, b = 0.0;
      std::size_t count = 0;
      for (std::size_t r = br; r < std::min(h, br + kBlock); ++r) {
        for (std::size_t c = bc; c < std::min(w, bc + kBlock); ++c) {
          if (mask.known(r, c)) continue;
          a += inpainted[r * w + c];
          b += original[r * w + c];
          ++count;
        }
      }
      if (count == 0) continue;
      block_error += std::abs(a - b) / static_cast<double>(count);
      ++blocks;
    }
  }

  double seam_error = 0.0;
  std::size_t seams = 0;
  const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (mask.known(r, c)) continue;
      const std::size_t q = r * w + c;
      for (int k = 0; k < 4; ++k) {
        const long nr = static_cast<long>(r) + dr[k], nc = static_cast<long>(c) + dc[k];
        if (nr < 0 || nc < 0 || nr >= static_cast<long>(h) || nc >= static_cast<long>(w)) continue;
        const std::size_t p = static_cast<std::size_t>(nr) * w + static_cast<std::size_t>(nc);
        if (!mask.known(p)) continue;
        const double step_inpainted = inpainted[q] - original[p];
        const double step_original = original[q] - original[p];
        seam_error += std::abs(step_inpainted - step_original);
        ++seams;
      }
    }
  }

  double squared = 0.0;
  std::size_t unknown = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.known(i)) continue;
    squared += (inpainted[i] - original[i]) * (inpainted[i] - original[i]);
    ++unknown;
  }
  require(unknown > 0, "oracle_score: mask has no unknown pixels");

  CriterionScores s;
  s.structural = to_score(blocks ? block_error / static_cast<double>(blocks) : 0.0);
  s.texture = to_score(seams ? seam_error / static_cast<double>(seams) : 0.0);
  s.overall = to_score(std::sqrt(squared / static_cast<double>(unknown)));
  return s;
}

double aggregate_score(const CriterionScores& s) {
  for (double v : {s.structural, s.texture, s.overall}) {
    require(v >= 0.0 && v <= kMaxScore, "criterion score " + std::to_string(v) + " outside [0,7]");
  }
  return kStructuralWeight * s.structural + kTextureWeight * s.texture + kOverallWeight * s.overall;
}

NormalizationMode normalization_mode_from_string(const std::string& name) {
  if (name == "variance") return NormalizationMode::variance;
  if (name == "stddev") return NormalizationMode::stddev;
  throw ValidationError("unknown normalization mode '" + name + "'");
}

std::string to_string(NormalizationMode mode) { return mode == NormalizationMode::variance ? "variance" : "stddev"; }

void NormalizationTable::set(const std::string& split_tag, NormalizationFactors factors) {
  require(std::isfinite(factors.mean), "normalization mean must be finite");
  require(factors.var > 0.0 && std::isfinite(factors.var),
          "normalization variance for '" + split_tag + "' must be positive");
  entries_[split_tag] = factors;
}

const NormalizationFactors& NormalizationTable::at(const std::string& split_tag) const {
  const auto it = entries_.find(split_tag);
  require(it != entries_.end(), "unknown split tag '" + split_tag + "'");
  return it->second;
}

nlohmann::json NormalizationTable::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [tag, f] : entries_) j[tag] = {{"mean", f.mean}, {"var", f.var}};
  return j;
}

NormalizationTable NormalizationTable::from_json(const nlohmann::json& j) {
  require(j.is_object(), "normalization table must be a JSON object");
  NormalizationTable t;
  for (const auto& [tag, f] : j.items()) t.set(tag, {f.at("mean").get<double>(), f.at("var").get<double>()});
  return t;
}

NormalizationTable NormalizationTable::preset() {
  NormalizationTable t;
  t.set("ade20k/warping", {3.46, 2.77});
  t.set("ade20k/outpainting", {3.12, 4.42});
  t.set("kitti/warping", {3.02, 3.04});
  t.set("kitti/outpainting", {2.87, 2.69});
  t.set("imagenet/warping", {2.85, 3.03});
  t.set("imagenet/outpainting", {2.50, 3.08});
  t.set("div2k/warping", {2.99, 3.26});
  t.set("div2k/outpainting", {2.34, 3.60});
  return t;
}

double normalize_score(double s, const NormalizationTable& table, const std::string& split_tag,
                       NormalizationMode mode) {
  const auto& f = table.at(split_tag);
  const double scale = mode == NormalizationMode::variance ? f.var : std::sqrt(f.var);
  return (s - f.mean) / scale;
}

}  // namespace trustalign::dataset
