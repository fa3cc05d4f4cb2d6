#include "trustalign/diffusion/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "trustalign/errors.hpp"

namespace trustalign::diffusion {

Mask::Mask(std::size_t height, std::size_t width, bool known)
    : height_(height), width_(width), known_(height * width, known ? 1 : 0) {
  require(height > 0 && width > 0, "mask extents must be positive");
}

std::size_t Mask::known_count() const {
  return static_cast<std::size_t>(std::count(known_.begin(), known_.end(), std::uint8_t{1}));
}

Tensor Mask::unknown_weights() const {
  Tensor w({size()});
  for (std::size_t i = 0; i < size(); ++i) w[i] = known(i) ? 0.0 : 1.0;
  return w;
}

void MaskedPrompt::validate() const {
  require(image.rank() == 2, "prompt image must be H x W, got " + numerics::shape_string(image.shape()));
  require(image.dim(0) == mask.height() && image.dim(1) == mask.width(),
          "prompt image " + numerics::shape_string(image.shape()) + " does not match mask " +
              std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  require(mask.known_count() >= 1, "prompt mask has no known pixel");
  require(mask.unknown_count() >= 1, "prompt mask has no unknown pixel");
}

MaskedPrompt make_prompt(const Tensor& original, const Mask& mask) {
  MaskedPrompt p{original, mask};
  p.validate();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.known(i)) p.image[i] = 0.0;
  }
  return p;
}

namespace {
void write_bytes(const std::filesystem::path& path, std::size_t height, std::size_t width,
                 const std::vector<unsigned char>& pixels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot open '" + path.string() + "' for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}
}  // namespace

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  require(image.rank() == 2, "PGM export needs an H x W image");
  std::vector<unsigned char> px(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    px[i] = static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  write_bytes(path, image.dim(0), image.dim(1), px);
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  std::vector<unsigned char> px(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) px[i] = mask.known(i) ? 255 : 0;
  write_bytes(path, mask.height(), mask.width(), px);
}

}  // namespace trustalign::diffusion
