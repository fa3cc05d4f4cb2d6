#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trustalign/dataset/masks.hpp"
#include "trustalign/dataset/oracle.hpp"
#include "trustalign/dataset/toy_images.hpp"
#include "trustalign/diffusion/denoiser.hpp"
#include "trustalign/diffusion/schedule.hpp"

namespace trustalign::dataset {

/// A prompt together with the image it was cut from (the oracle's reference).
struct Prompt {
  std::int64_t id = 0;
  Tensor original;
  diffusion::MaskedPrompt masked;
  std::string split_tag;
};

/// One prompt per image; mask specs are drawn per prompt from `kinds` in turn.
/// Split tags read "<image kind>/<pattern>".
std::vector<Prompt> make_prompts(const std::vector<Tensor>& images, ImageKind image_kind,
                                 const std::vector<MaskKind>& kinds, std::uint64_t seed,
                                 std::int64_t first_id = 0);

struct AnnotationRecord {
  std::int64_t prompt_id = 0;
  int sample_index = 1;  // 1..3
  CriterionScores scores;
  double aggregate = 0.0;
  double normalized = 0.0;
  std::string split_tag;
  /// Noise-free aggregate; ground truth for bound checks.
  double oracle_clean = 0.0;

  // Not part of the JSONL record.
  Tensor image;
  Mask mask;
};

struct AnnotationOptions {
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  NormalizationMode mode = NormalizationMode::variance;
  /// Fitted per split tag from the generated aggregates when absent.
  std::optional<NormalizationTable> table;
};

struct AnnotationSet {
  std::vector<AnnotationRecord> records;
  NormalizationTable table;
  NormalizationMode mode = NormalizationMode::variance;
};

inline constexpr int kSamplesPerPrompt = 3;

/// Three inpaintings per prompt, sample j seeded from (seed, prompt id, j).
AnnotationSet make_annotation_set(const diffusion::Denoiser& model, const std::vector<Prompt>& prompts,
                                  const diffusion::NoiseSchedule& schedule, const AnnotationOptions& options);

/// Mean and population variance of the aggregates of each split tag. Tags
/// whose variance is zero fall back to var = 1.
NormalizationTable fit_normalization(const std::vector<AnnotationRecord>& records);

/// Records with any criterion score below 1 (outside the nominal 1-7 scale).
std::size_t count_below_scale(const std::vector<AnnotationRecord>& records);

void write_jsonl(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> read_jsonl(const std::filesystem::path& path);

/// Sample images and masks, keyed by record order, in the checkpoint container.
void write_record_images(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);
void read_record_images(const std::filesystem::path& path, std::vector<AnnotationRecord>& records);

}  // namespace trustalign::dataset
