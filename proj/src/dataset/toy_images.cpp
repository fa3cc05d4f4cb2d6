#include "trustalign/dataset/toy_images.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "trustalign/errors.hpp"
#include "trustalign/numerics/seed.hpp"

namespace trustalign::dataset {

ImageKind image_kind_from_string(const std::string& name) {
  if (name == "smooth_field") return ImageKind::smooth_field;
  if (name == "shapes") return ImageKind::shapes;
  throw ValidationError("unknown image kind '" + name + "'");
}

std::string to_string(ImageKind kind) { return kind == ImageKind::smooth_field ? "smooth_field" : "shapes"; }

namespace {

Tensor smooth_field(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> freq(0, 2);
  Tensor img({n, n});
  for (int wave = 0; wave < 3; ++wave) {
    int fr = freq(rng), fc = freq(rng);
    if (fr == 0 && fc == 0) fc = 1;
    const double amp = 0.5 + unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double arg = 2.0 * std::numbers::pi * (fr * static_cast<double>(r) + fc * static_cast<double>(c)) /
                           static_cast<double>(2 * n);
        img.at(r, c) += amp * std::cos(arg + phase);
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
  const double min = *lo, span = std::max(*hi - *lo, 1e-12);
  for (double& v : img.data()) v = 0.1 + 0.8 * (v - min) / span;
  return img;
}

Tensor shapes(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double background = 0.1 + 0.8 * unit(rng);
  double foreground = 0.1 + 0.8 * unit(rng);
  if (std::abs(foreground - background) < 0.3) foreground = background > 0.5 ? background - 0.35 : background + 0.35;
  const double size = static_cast<double>(n);
  const double cr = size * (0.25 + 0.5 * unit(rng)), cc = size * (0.25 + 0.5 * unit(rng));
  const double extent = size * (0.15 + 0.2 * unit(rng));
  const bool disc = unit(rng) < 0.5;
  Tensor img({n, n}, background);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double dr = static_cast<double>(r) + 0.5 - cr, dc = static_cast<double>(c) + 0.5 - cc;
      const bool inside = disc ? dr * dr + dc * dc <= extent * extent
                               : std::abs(dr) <= extent && std::abs(dc) <= 0.7 * extent;
      if (inside) img.at(r, c) = foreground;
    }
  }
  return img;
}

}  // namespace

std::vector<Tensor> gen_toy_images(std::size_t n, ImageKind kind, std::uint64_t seed, std::size_t size) {
  require(n >= 1, "gen_toy_images needs n >= 1");
  require(size >= 4, "image size must be >= 4");
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(numerics::derive_seed(seed, static_cast<std::uint64_t>(kind), i));
    out.push_back(kind == ImageKind::smooth_field ? smooth_field(size, rng) : shapes(size, rng));
  }
  return out;
}

double mean_neighbor_difference(const Tensor& image) {
  const std::size_t h = image.rows(), w = image.cols();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (c + 1 < w) total += std::abs(image.at(r, c + 1) - image.at(r, c)), ++count;
      if (r + 1 < h) total += std::abs(image.at(r + 1, c) - image.at(r, c)), ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace trustalign::dataset
