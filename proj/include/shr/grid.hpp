// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "shr/error.hpp"

namespace shr {

/// Row/column position on a grid; (0, 0) is the top-left pixel.
struct PixelPos {
  int row = 0;
  int col = 0;

  friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

inline int squared_distance(PixelPos a, PixelPos b) {
  const int dr = a.row - b.row;
  const int dc = a.col - b.col;
  return dr * dr + dc * dc;
}

/// Dense row-major grid of doubles. The tag only keeps heatmaps and images
/// from being mixed up at call sites; both share this storage.
template <class Tag>
class BasicGrid {
 public:
  BasicGrid() = default;

  BasicGrid(int height, int width, double fill = 0.0) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) {
      throw DomainError("grid dimensions must be positive, got " + std::to_string(height) + "x" +
                        std::to_string(width));
    }
    values_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
  }

  BasicGrid(int height, int width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (height <= 0 || width <= 0) {
      throw DomainError("grid dimensions must be positive");
    }
    if (values_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
      throw DomainError("grid value count " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(height) + "x" +
                        std::to_string(width));
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  bool is_square() const noexcept { return height_ == width_; }

  bool contains(PixelPos p) const noexcept {
    return p.row >= 0 && p.col >= 0 && p.row < height_ && p.col < width_;
  }

  double& operator()(int row, int col) {
    return values_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                   static_cast<std::size_t>(col)];
  }
  double operator()(int row, int col) const {
    return values_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                   static_cast<std::size_t>(col)];
  }
  double& operator[](PixelPos p) { return (*this)(p.row, p.col); }
  double operator[](PixelPos p) const { return (*this)(p.row, p.col); }

  PixelPos position_of(std::size_t flat) const noexcept {
    return {static_cast<int>(flat / static_cast<std::size_t>(width_)),
            static_cast<int>(flat % static_cast<std::size_t>(width_))};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool same_shape(const BasicGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const BasicGrid&, const BasicGrid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

struct HeatmapTag {};
struct ImageTag {};

using Heatmap = BasicGrid<HeatmapTag>;
/// Single-channel image; values are kept in [0, 1].
using Image = BasicGrid<ImageTag>;

template <class A, class B>
void require_same_shape(const BasicGrid<A>& a, const BasicGrid<B>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DomainError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                      std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                      std::to_string(b.width()));
  }
}

}  // namespace shr
