#pragma once

#include <complex>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cdinn/grid.hpp"

namespace test_support {

/// O(N^4) centered DFT: X(k) = sum_r x(r) exp(-2 pi i (k - c)(r - c) / N), c = N/2.
inline cdinn::ComplexField direct_dft(const cdinn::ComplexField& x) {
  const int n = x.side();
  const int c = n / 2;
  cdinn::ComplexField out(n);
  for (int kr = 0; kr < n; ++kr)
    for (int kc = 0; kc < n; ++kc) {
      cdinn::Complex acc{};
      for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < n; ++cc) {
          const long phase = (static_cast<long>(kr - c) * (r - c) + static_cast<long>(kc - c) * (cc - c)) % n;
          acc += x(r, cc) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(phase) / n);
        }
      out(kr, kc) = acc;
    }
  return out;
}

inline std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cdinn_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace test_support
