#include "cdinn/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdinn/error.hpp"

namespace cdinn::image {

Gray to_gray(const RealGrid& grid, double lo, double hi) {
  Gray g{grid.side(), grid.side(), std::vector<std::uint8_t>(grid.size(), 0)};
  if (!(hi > lo)) return g;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = std::clamp((grid[i] - lo) / (hi - lo), 0.0, 1.0);
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  return g;
}

Gray to_gray(const RealGrid& grid) {
  if (grid.size() == 0) return {};
  const auto [lo, hi] = std::minmax_element(grid.raw().begin(), grid.raw().end());
  return to_gray(grid, *lo, *hi);
}

void write_pgm(const std::filesystem::path& path, const Gray& image) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height)
    throw InvalidArgument("write_pgm: image dimensions do not match its pixels");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

Gray read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  Gray g;
  in >> magic >> g.width >> g.height >> maxval;
  if (magic != "P5" || maxval != 255 || g.width < 1 || g.height < 1)
    throw FormatError(FormatError::Kind::magic, path.string() + " is not an 8-bit binary PGM");
  in.get();
  g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
  in.read(reinterpret_cast<char*>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(g.pixels.size()))
    throw FormatError(FormatError::Kind::truncated, path.string() + " is truncated");
  return g;
}

Gray compose(const std::vector<std::vector<Gray>>& rows, int gap, std::uint8_t fill) {
  if (rows.empty()) throw InvalidArgument("compose: no rows");
  int width = 0, height = gap;
  for (const auto& row : rows) {
    if (row.empty()) throw InvalidArgument("compose: empty row");
    int w = gap;
    for (const auto& tile : row) {
      if (tile.height != row.front().height) throw InvalidArgument("compose: tiles of a row differ in height");
      w += tile.width + gap;
    }
    width = std::max(width, w);
    height += row.front().height + gap;
  }
  Gray out{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, fill)};
  int y = gap;
  for (const auto& row : rows) {
    int x = gap;
    for (const auto& tile : row) {
      for (int r = 0; r < tile.height; ++r)
        std::copy_n(tile.pixels.begin() + static_cast<std::ptrdiff_t>(r) * tile.width, tile.width,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(y + r) * width + x);
      x += tile.width + gap;
    }
    y += row.front().height + gap;
  }
  return out;
}

}  // namespace cdinn::image
