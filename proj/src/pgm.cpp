#include "sgt/pgm.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sgt {

namespace {

// Reads the next whitespace-separated token, skipping '#' comments
// (PNM comments run to end of line).
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw std::runtime_error("pgm: truncated header");
  return tok;
}

int parse_int(const std::string& tok, const char* what) {
  size_t pos = 0;
  int v;
  try {
    v = std::stoi(tok, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("pgm: bad ") + what + " '" + tok + "'");
  }
  if (pos != tok.size()) throw std::runtime_error(std::string("pgm: bad ") + what + " '" + tok + "'");
  return v;
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open '" + path + "'");

  if (next_token(in) != "P5") throw std::runtime_error("pgm: '" + path + "' is not binary PGM (P5)");
  const int width = parse_int(next_token(in), "width");
  const int height = parse_int(next_token(in), "height");
  const int maxval = parse_int(next_token(in), "maxval");
  if (width <= 0 || height <= 0) throw std::runtime_error("pgm: non-positive extent in '" + path + "'");
  if (maxval <= 0 || maxval > 255) throw std::runtime_error("pgm: unsupported maxval (8-bit only) in '" + path + "'");
  // Exactly one whitespace byte separates maxval from the raster; next_token
  // has already consumed it.

  std::vector<uint8_t> raster(static_cast<size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (static_cast<size_t>(in.gcount()) != raster.size()) {
    throw std::runtime_error("pgm: truncated raster in '" + path + "'");
  }

  GrayImage img(height, width);
  // Divide rather than multiply by a reciprocal: values must be exactly
  // fl(byte / maxval) so quantized images round-trip bit-identically.
  const float denom = static_cast<float>(maxval);
  for (size_t i = 0; i < raster.size(); ++i) {
    img.values[i] = static_cast<float>(raster[i]) / denom;
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  if (img.height <= 0 || img.width <= 0) throw std::invalid_argument("write_pgm: empty image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("pgm: cannot write '" + path + "'");

  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raster(img.values.size());
  for (size_t i = 0; i < img.values.size(); ++i) {
    const long v = std::lround(static_cast<double>(img.values[i]) * 255.0);
    raster[i] = static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
  }
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw std::runtime_error("pgm: write failed for '" + path + "'");
}

}  // namespace sgt
