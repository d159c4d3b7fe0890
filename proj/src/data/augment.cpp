#include "data/augment.hpp"

#include <cmath>

#include "util/errors.hpp"

namespace pd::data {

std::vector<float> hflip(const std::vector<float>& image, int side) {
  if (static_cast<int>(image.size()) != side * side) {
    throw ShapeError("hflip: image is not side x side");
  }
  std::vector<float> out(image.size());
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      out[y * side + x] = image[y * side + (side - 1 - x)];
    }
  }
  return out;
}

std::vector<float> resized_crop(const std::vector<float>& image, int side,
                                int crop, int off_x, int off_y) {
  if (static_cast<int>(image.size()) != side * side) {
    throw ShapeError("resized_crop: image is not side x side");
  }
  if (crop < 1 || off_x < 0 || off_y < 0 || off_x + crop > side || off_y + crop > side) {
    throw DomainError("resized_crop: crop window out of bounds");
  }
  std::vector<float> out(image.size());
  // Corner-aligned sampling grid so crop == side is exactly the identity.
  const double step = (side > 1 && crop > 1)
                          ? static_cast<double>(crop - 1) / (side - 1)
                          : 0.0;
  for (int y = 0; y < side; ++y) {
    const double sy = off_y + y * step;
    const int y0 = static_cast<int>(sy);
    const int y1 = y0 + 1 < off_y + crop ? y0 + 1 : y0;
    const double fy = sy - y0;
    for (int x = 0; x < side; ++x) {
      const double sx = off_x + x * step;
      const int x0 = static_cast<int>(sx);
      const int x1 = x0 + 1 < off_x + crop ? x0 + 1 : x0;
      const double fx = sx - x0;
      const double v00 = image[y0 * side + x0];
      const double v01 = image[y0 * side + x1];
      const double v10 = image[y1 * side + x0];
      const double v11 = image[y1 * side + x1];
      const double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                       fy * ((1.0 - fx) * v10 + fx * v11);
      out[y * side + x] = static_cast<float>(v);
    }
  }
  return out;
}

std::vector<float> augment(const std::vector<float>& image, int side,
                           RngStream& rng) {
  const double scale = rng.uniform(0.6, 1.0);
  int crop = static_cast<int>(std::lround(scale * side));
  if (crop < 1) crop = 1;
  if (crop > side) crop = side;
  const int max_off = side - crop;
  const int off_x = max_off > 0 ? static_cast<int>(rng.below(max_off + 1)) : 0;
  const int off_y = max_off > 0 ? static_cast<int>(rng.below(max_off + 1)) : 0;
  std::vector<float> out = resized_crop(image, side, crop, off_x, off_y);
  if (rng.bernoulli(0.5)) out = hflip(out, side);
  return out;
}

}  // namespace pd::data
