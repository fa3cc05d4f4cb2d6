#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trustalign/numerics/tensor.hpp"

namespace trustalign::dataset {

using numerics::Tensor;

enum class ImageKind { smooth_field, shapes };

ImageKind image_kind_from_string(const std::string& name);
std::string to_string(ImageKind kind);

/// n square images (size x size) with values in [0,1].
/// smooth_field: a few low-frequency cosine waves, rescaled to [0.1, 0.9].
/// shapes: a disc or rectangle on a flat background, two tones.
std::vector<Tensor> gen_toy_images(std::size_t n, ImageKind kind, std::uint64_t seed,
                                   std::size_t size = 16);

/// Mean absolute difference between horizontally and vertically adjacent pixels.
double mean_neighbor_difference(const Tensor& image);

}  // namespace trustalign::dataset
