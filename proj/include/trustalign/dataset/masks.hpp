#pragma once

#include <cstdint>
#include <string>

#include "trustalign/diffusion/image.hpp"

namespace trustalign::dataset {

using diffusion::Mask;

enum class MaskKind { square_crop, rect_crop, irregular };

MaskKind mask_kind_from_string(const std::string& name);
std::string to_string(MaskKind kind);

/// square_crop: `ratio` is the kept area fraction, in [0.15, 0.25].
/// rect_crop: `ratio` is the kept band width fraction, in [0.35, 0.40].
/// irregular: `ratio` is unused; 1-4 blobs cover 20-60% of pixels.
/// The kept region is the known prompt; the rest is to be generated.
struct MaskSpec {
  MaskKind kind = MaskKind::square_crop;
  double ratio = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  /// Ratio drawn uniformly from the kind's range.
  static MaskSpec random(MaskKind kind, std::uint64_t seed);
};

/// Extents round down, then are clamped into the integer range whose measured
/// ratio stays inside the kind's interval (when that range is nonempty).
Mask gen_mask(const MaskSpec& spec, std::size_t image_size);

/// Split label used for normalisation lookup: "outpainting" or "warping".
std::string pattern_name(MaskKind kind);

}  // namespace trustalign::dataset
