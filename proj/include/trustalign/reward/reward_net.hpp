#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustalign/dataset/annotations.hpp"
#include "trustalign/numerics/checkpoint.hpp"
#include "trustalign/numerics/mlp.hpp"
#include "trustalign/reward/ridge.hpp"

namespace trustalign::reward {

using diffusion::Mask;

enum class RewardMode { regression, classification };

RewardMode reward_mode_from_string(const std::string& name);
std::string to_string(RewardMode mode);

struct RewardNetConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::size_t feature_dim = 64;
  double fix_rate = 0.7;
  RewardMode mode = RewardMode::regression;
  std::size_t bins = 7;  // classification over scores 1..7
  /// Fixed input channels |dx|, |dy| next to the image and mask.
  bool gradient_stem = true;
  double init_gain = std::sqrt(3.0);

  double lambda = 1.0;
  double delta = 0.1;
  NormMode norm_mode = NormMode::inverse;
  std::optional<double> b_override;
  std::optional<double> psi_norm_override;

  std::size_t iterations = 1000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  std::size_t extractor_layers() const { return hidden.size() + 1; }
  std::size_t input_channels() const { return gradient_stem ? 4 : 2; }
  std::size_t frozen_layers() const;
  numerics::MlpSpec extractor_spec() const;
  numerics::MlpSpec head_spec() const;
  void validate() const;
  nlohmann::json to_json() const;
  static RewardNetConfig from_json(const nlohmann::json& j);
};

/// Feature extractor F over [image, mask] plus a training head, and the
/// ridge head on F's output that serves rewards and bounds.
class RewardNet {
 public:
  static constexpr const char* kExtractor = "feat";
  static constexpr const char* kHead = "head";

  explicit RewardNet(RewardNetConfig config);

  const RewardNetConfig& config() const { return config_; }
  const numerics::ParameterSet& params() const { return params_; }
  numerics::ParameterSet& params() { return params_; }
  const GramState& ridge() const { return ridge_; }
  const BoundConstant& bound() const { return bound_; }
  bool fitted() const { return fitted_; }

  Tensor input_rows(const std::vector<const Tensor*>& images, const std::vector<const Mask*>& masks) const;
  /// N x D' feature rows.
  Tensor features(const Tensor& rows) const;
  Eigen::VectorXd feature(const Tensor& image, const Mask& mask) const;

  /// Ridge-head prediction.
  double reward(const Tensor& image, const Mask& mask) const;
  /// Confidence norm in the configured mode.
  double confidence(const Tensor& image, const Mask& mask) const;
  /// Training-head output: regression value, or expected bin score.
  std::vector<double> native_scores(const Tensor& rows) const;

  /// Refits the ridge head on the current features; B and ‖ψ*‖ default to the
  /// residual std and ‖ψ̂‖.
  void fit_head(const Tensor& rows, const std::vector<double>& targets);

  numerics::Checkpoint to_checkpoint() const;
  static RewardNet from_checkpoint(const numerics::Checkpoint& checkpoint);

 private:
  RewardNetConfig config_;
  numerics::ParameterSet params_;
  GramState ridge_;
  BoundConstant bound_;
  bool fitted_ = false;
};

struct ExtractorReport {
  std::vector<double> losses;
  std::size_t frozen_layers = 0;
};

/// Fine-tunes the extractor (first ⌈fix_rate·L⌉ layers frozen) on the
/// normalised targets, then fits the ridge head.
RewardNet train_extractor(const std::vector<dataset::AnnotationRecord>& data, const RewardNetConfig& config,
                          ExtractorReport* report = nullptr);

/// Rows and targets of annotation records.
Tensor record_rows(const RewardNet& net, const std::vector<dataset::AnnotationRecord>& data);

/// Fraction of pairs with distinct truth that the predictions order the same
/// way; prediction ties count one half.
double ranking_accuracy(const std::vector<double>& predicted, const std::vector<double>& truth);

/// Held-out ranking accuracy against the normalised clean oracle value.
/// Classification outputs (expected bin scores) are normalised by split tag
/// first so both modes are compared in the same units.
struct RankingReport {
  double native = 0.0;  // training head
  double ridge = 0.0;   // ridge head
};

RankingReport heldout_ranking(const RewardNet& net, const std::vector<dataset::AnnotationRecord>& heldout,
                              const dataset::NormalizationTable& table, dataset::NormalizationMode mode);

}  // namespace trustalign::reward
