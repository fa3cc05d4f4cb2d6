#include "trustalign/dataset/masks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "trustalign/errors.hpp"
#include "trustalign/numerics/seed.hpp"

namespace trustalign::dataset {

namespace {
constexpr double kSquareLo = 0.15, kSquareHi = 0.25;
constexpr double kRectLo = 0.35, kRectHi = 0.40;
constexpr double kBlobLo = 0.20, kBlobHi = 0.60;

std::size_t clamp_extent(std::size_t value, std::size_t lo, std::size_t hi) {
  return lo <= hi ? std::clamp(value, lo, hi) : value;
}

Mask irregular(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 4);
  const double size = static_cast<double>(n);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Mask m(n, n, true);
    const int blobs = count(rng);
    for (int b = 0; b < blobs; ++b) {
      const double cr = size * unit(rng), cc = size * unit(rng);
      const double rr = size * (0.12 + 0.25 * unit(rng)), rc = size * (0.12 + 0.25 * unit(rng));
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          const double dr = (static_cast<double>(r) + 0.5 - cr) / rr;
          const double dc = (static_cast<double>(c) + 0.5 - cc) / rc;
          if (dr * dr + dc * dc <= 1.0) m.set_known(r, c, false);
        }
      }
    }
    const double frac = static_cast<double>(m.unknown_count()) / static_cast<double>(m.size());
    if (frac >= kBlobLo && frac <= kBlobHi) return m;
  }
  throw NumericError("irregular mask generation did not reach the 20-60% coverage range");
}
}  // namespace

MaskKind mask_kind_from_string(const std::string& name) {
  if (name == "square_crop") return MaskKind::square_crop;
  if (name == "rect_crop") return MaskKind::rect_crop;
  if (name == "irregular") return MaskKind::irregular;
  throw ValidationError("unknown mask kind '" + name + "'");
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::square_crop: return "square_crop";
    case MaskKind::rect_crop: return "rect_crop";
    case MaskKind::irregular: return "irregular";
  }
  return "?";
}

std::string pattern_name(MaskKind kind) { return kind == MaskKind::irregular ? "warping" : "outpainting"; }

void MaskSpec::validate() const {
  if (kind == MaskKind::square_crop) {
    require(ratio >= kSquareLo && ratio <= kSquareHi,
            "square keep-ratio " + std::to_string(ratio) + " outside [0.15, 0.25]");
  } else if (kind == MaskKind::rect_crop) {
    require(ratio >= kRectLo && ratio <= kRectHi,
            "rect keep-width " + std::to_string(ratio) + " outside [0.35, 0.40]");
  }
}

MaskSpec MaskSpec::random(MaskKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(numerics::derive_seed(seed, 0x6d61736bULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MaskSpec s{kind, 0.0, seed};
  if (kind == MaskKind::square_crop) s.ratio = kSquareLo + (kSquareHi - kSquareLo) * unit(rng);
  if (kind == MaskKind::rect_crop) s.ratio = kRectLo + (kRectHi - kRectLo) * unit(rng);
  return s;
}

Mask gen_mask(const MaskSpec& spec, std::size_t image_size) {
  require(image_size >= 4, "image size must be >= 4");
  spec.validate();
  const std::size_t n = image_size;
  const double size = static_cast<double>(n);
  std::mt19937_64 rng(numerics::derive_seed(spec.seed, 0x706f73ULL));
  Mask m;
  if (spec.kind == MaskKind::square_crop) {
    const auto lo = static_cast<std::size_t>(std::ceil(std::sqrt(kSquareLo) * size));
    const auto hi = static_cast<std::size_t>(std::floor(std::sqrt(kSquareHi) * size));
    const std::size_t side = std::max<std::size_t>(
        1, clamp_extent(static_cast<std::size_t>(std::floor(std::sqrt(spec.ratio) * size)), lo, hi));
    std::uniform_int_distribution<std::size_t> offset(0, n - side);
    const std::size_t r0 = offset(rng), c0 = offset(rng);
    m = Mask(n, n, false);
    for (std::size_t r = r0; r < r0 + side; ++r) {
      for (std::size_t c = c0; c < c0 + side; ++c) m.set_known(r, c, true);
    }
  } else if (spec.kind == MaskKind::rect_crop) {
    const auto lo = static_cast<std::size_t>(std::ceil(kRectLo * size));
    const auto hi = static_cast<std::size_t>(std::floor(kRectHi * size));
    const std::size_t width = std::max<std::size_t>(
        1, clamp_extent(static_cast<std::size_t>(std::floor(spec.ratio * size)), lo, hi));
    std::uniform_int_distribution<std::size_t> offset(0, n - width);
    const std::size_t c0 = offset(rng);
    m = Mask(n, n, false);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = c0; c < c0 + width; ++c) m.set_known(r, c, true);
    }
  } else {
    m = irregular(n, rng);
  }
  return m;
}

}  // namespace trustalign::dataset
