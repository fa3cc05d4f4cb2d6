#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "trustalign/numerics/tensor.hpp"

namespace trustalign::diffusion {

using numerics::Tensor;

/// Per-pixel flag, true = known (prompt) region. Row-major, H x W.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t height, std::size_t width, bool known = false);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return known_.size(); }

  bool known(std::size_t index) const { return known_[index] != 0; }
  bool known(std::size_t row, std::size_t col) const { return known(row * width_ + col); }
  void set_known(std::size_t index, bool value) { known_[index] = value ? 1 : 0; }
  void set_known(std::size_t row, std::size_t col, bool value) { set_known(row * width_ + col, value); }

  std::size_t known_count() const;
  std::size_t unknown_count() const { return size() - known_count(); }

  /// 1.0 on unknown pixels, 0.0 on known ones; flat (H*W).
  Tensor unknown_weights() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<std::uint8_t> known_;
};

/// Image with its known region; `image` is H x W with values in [0,1].
struct MaskedPrompt {
  Tensor image;
  Mask mask;

  std::size_t height() const { return mask.height(); }
  std::size_t width() const { return mask.width(); }
  std::size_t pixels() const { return mask.size(); }
  void validate() const;
};

/// Copies the known region of `original`; unknown pixels are zeroed so the
/// prompt never carries ground truth the sampler could read.
MaskedPrompt make_prompt(const Tensor& original, const Mask& mask);

/// Binary 8-bit PGM (P5); values are clamped to [0,1] before quantising.
void write_pgm(const std::filesystem::path& path, const Tensor& image);
void write_pgm(const std::filesystem::path& path, const Mask& mask);

}  // namespace trustalign::diffusion
