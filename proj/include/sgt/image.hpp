#pragma once

#include <vector>

namespace sgt {

// Row-major single-channel float image. Values are conventionally in [0,1]
// but the struct itself does not enforce a range; producers do.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> values;  // height * width, row-major

  GrayImage() = default;
  GrayImage(int h, int w);

  float& at(int y, int x);
  float at(int y, int x) const;
  int numel() const { return height * width; }
};

// Saliency maps share the image representation.
using SaliencyMap = GrayImage;

// Bilinear resize using the pixel-center convention
// (src = (dst + 0.5) * scale - 0.5, clamped to the source grid).
// Output values are convex combinations of inputs, so the range never
// escapes the input's [min, max]. Throws std::invalid_argument on
// non-positive extents.
GrayImage resize_bilinear(const GrayImage& img, int out_height, int out_width);

// Square resize to the engine's canonical working extent.
GrayImage resize_canonical(const GrayImage& img, int target_extent);

// 3x3 box filter with zero padding outside the image (each output pixel is
// the mean of the 9-tap window, absent taps contributing 0).
GrayImage box_blur_3x3(const GrayImage& img);

// Affine map of [min, max] onto [0, 1]. A constant image maps to all zeros
// (degenerate-range rule, matching the tensor-side normalization).
GrayImage minmax_stretch(const GrayImage& img);

// Divide by the maximum value if it is positive; all-zero images pass
// through unchanged. Keeps the peak at exactly 1.
GrayImage peak_normalize(const GrayImage& img);

float min_value(const GrayImage& img);
float max_value(const GrayImage& img);

}  // namespace sgt
