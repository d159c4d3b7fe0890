#pragma once

#include <vector>

#include "util/rng.hpp"

namespace pd::data {

// Deterministic augmentation primitives plus the composed random pipeline:
// random resized crop (side scale uniform in [0.6, 1.0], bilinear resize
// back) followed by horizontal flip with probability 0.5.

std::vector<float> hflip(const std::vector<float>& image, int side);

// Crops the square [off_y, off_y+crop) x [off_x, off_x+crop) and bilinearly
// resizes it back to side x side. crop == side with zero offsets is identity.
std::vector<float> resized_crop(const std::vector<float>& image, int side,
                                int crop, int off_x, int off_y);

std::vector<float> augment(const std::vector<float>& image, int side,
                           RngStream& rng);

}  // namespace pd::data
