#pragma once

#include <string>

#include "sgt/image.hpp"

namespace sgt {

// Binary PGM (P5), 8-bit. Pixels map as byte/maxval -> [0,1] on read and
// round(v*255) clamped to [0,255] on write. Writing always emits the
// canonical header "P5\n<w> <h>\n255\n", so read -> write reproduces any
// file this writer produced byte for byte.
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& img);

}  // namespace sgt
