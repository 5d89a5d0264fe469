#include "sgt/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgt {

GrayImage::GrayImage(int h, int w) : height(h), width(w) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("GrayImage: extents must be positive");
  values.assign(static_cast<size_t>(h) * w, 0.0f);
}

float& GrayImage::at(int y, int x) {
  return values[static_cast<size_t>(y) * width + x];
}

float GrayImage::at(int y, int x) const {
  return values[static_cast<size_t>(y) * width + x];
}

GrayImage resize_bilinear(const GrayImage& img, int out_height, int out_width) {
  if (img.height <= 0 || img.width <= 0) throw std::invalid_argument("resize_bilinear: empty source");
  if (out_height <= 0 || out_width <= 0) throw std::invalid_argument("resize_bilinear: extents must be positive");

  GrayImage out(out_height, out_width);
  const double sy = static_cast<double>(img.height) / out_height;
  const double sx = static_cast<double>(img.width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * img.at(y0, x0) + wx * img.at(y0, x1);
      const double bot = (1.0 - wx) * img.at(y1, x0) + wx * img.at(y1, x1);
      out.at(y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

GrayImage resize_canonical(const GrayImage& img, int target_extent) {
  return resize_bilinear(img, target_extent, target_extent);
}

GrayImage box_blur_3x3(const GrayImage& img) {
  if (img.height <= 0 || img.width <= 0) throw std::invalid_argument("box_blur_3x3: empty image");
  GrayImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= img.height) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= img.width) continue;
          acc += img.at(yy, xx);
        }
      }
      out.at(y, x) = static_cast<float>(acc / 9.0);
    }
  }
  return out;
}

GrayImage minmax_stretch(const GrayImage& img) {
  if (img.numel() == 0) throw std::invalid_argument("minmax_stretch: empty image");
  const float lo = min_value(img);
  const float hi = max_value(img);
  GrayImage out(img.height, img.width);
  const float range = hi - lo;
  if (range == 0.0f) return out;  // constant image -> all zeros
  for (size_t i = 0; i < img.values.size(); ++i) {
    out.values[i] = (img.values[i] - lo) / range;
  }
  return out;
}

GrayImage peak_normalize(const GrayImage& img) {
  if (img.numel() == 0) throw std::invalid_argument("peak_normalize: empty image");
  const float hi = max_value(img);
  if (hi <= 0.0f) return img;
  GrayImage out(img.height, img.width);
  for (size_t i = 0; i < img.values.size(); ++i) {
    out.values[i] = img.values[i] / hi;
  }
  return out;
}

float min_value(const GrayImage& img) {
  if (img.values.empty()) throw std::invalid_argument("min_value: empty image");
  return *std::min_element(img.values.begin(), img.values.end());
}

float max_value(const GrayImage& img) {
  if (img.values.empty()) throw std::invalid_argument("max_value: empty image");
  return *std::max_element(img.values.begin(), img.values.end());
}

}  // namespace sgt
