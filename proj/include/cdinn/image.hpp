#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdinn/grid.hpp"

namespace cdinn::image {

/// 8-bit grayscale raster, row-major.
struct Gray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Linear map of [lo, hi] onto 0..255, clamped. lo == hi maps everything to 0.
Gray to_gray(const RealGrid& grid, double lo, double hi);
/// Same with lo/hi taken from the grid's own range.
Gray to_gray(const RealGrid& grid);

/// Binary P5 PGM, written through a temporary file and renamed into place.
void write_pgm(const std::filesystem::path& path, const Gray& image);
Gray read_pgm(const std::filesystem::path& path);

/// Tiles laid out row by row with a `gap` pixel border (value `fill`).
/// All tiles of a row must share a height; rows may differ in tile count.
Gray compose(const std::vector<std::vector<Gray>>& rows, int gap = 2, std::uint8_t fill = 255);

}  // namespace cdinn::image
