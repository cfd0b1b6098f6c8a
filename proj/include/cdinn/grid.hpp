#pragma once

#include <cassert>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace cdinn {

using Complex = std::complex<double>;

/// Square row-major 2D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  explicit Grid(int side, T fill = T{})
      : side_(side), data_(static_cast<std::size_t>(side) * side, fill) {}
  Grid(int side, std::vector<T> data) : side_(side), data_(std::move(data)) {
    assert(data_.size() == static_cast<std::size_t>(side) * side);
  }

  int side() const noexcept { return side_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * side_ + col]; }
  const T& operator()(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * side_ + col];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& raw() noexcept { return data_; }
  const std::vector<T>& raw() const noexcept { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int side_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;
using ComplexField = Grid<Complex>;
using Mask = Grid<std::uint8_t>;

}  // namespace cdinn
