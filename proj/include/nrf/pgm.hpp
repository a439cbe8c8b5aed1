#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/field_dataset.hpp"

namespace nrf::data {

struct GreyImage {
  int width = 0, height = 0;
  std::vector<double> pixels;  // row-major, in [0, 1]

  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// P2 or P5. Samples are divided by maxval; two-byte P5 samples are big-endian.
GreyImage parse_pgm(std::string_view bytes, const std::string& source = "<memory>");
GreyImage load_pgm(const std::filesystem::path& path);
std::string encode_pgm(const GreyImage& img, int maxval = 255, bool binary = true);
void save_pgm(const std::filesystem::path& path, const GreyImage& img, int maxval = 255, bool binary = true);

// Pixel (i, j) becomes the record ((i + 0.5) / w, (j + 0.5) / h) -> intensity,
// with box [0, 1]^2.
FieldDataset image_to_dataset(const GreyImage& img);

}  // namespace nrf::data
