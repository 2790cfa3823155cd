#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace plumekit {

/// Row-major 2-D grid, origin at the top-left corner. Row index increases
/// downward, column index increases to the right. Every raster in the
/// toolkit uses this orientation.
template <typename T>
class Grid2d {
 public:
  Grid2d() = default;
  Grid2d(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(checked_size(height, width), fill) {}

  static Grid2d from_data(int height, int width, std::vector<T> data) {
    if (data.size() != checked_size(height, width))
      throw std::invalid_argument("Grid2d: data size does not match shape");
    Grid2d g;
    g.height_ = height;
    g.width_ = width;
    g.data_ = std::move(data);
    return g;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[std::size_t(r) * width_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[std::size_t(r) * width_ + c];
  }

  T& at(int r, int c) {
    check_index(r, c);
    return (*this)(r, c);
  }
  const T& at(int r, int c) const {
    check_index(r, c);
    return (*this)(r, c);
  }

  bool in_bounds(int r, int c) const {
    return r >= 0 && r < height_ && c >= 0 && c < width_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(const Grid2d& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Grid2d& a, const Grid2d& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(int height, int width) {
    if (height < 0 || width < 0)
      throw std::invalid_argument("Grid2d: negative dimension");
    return std::size_t(height) * std::size_t(width);
  }
  void check_index(int r, int c) const {
    if (!in_bounds(r, c)) throw std::out_of_range("Grid2d: index out of range");
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Pixel-major 3-D grid for band-resolved imagery: element (r, c, b) lives at
/// ((r*W)+c)*B + b, so one pixel's spectrum is contiguous.
template <typename T>
class Cube3d {
 public:
  Cube3d() = default;
  Cube3d(int height, int width, int bands, T fill = T{})
      : height_(height), width_(width), bands_(bands),
        data_(checked_size(height, width, bands), fill) {}

  static Cube3d from_data(int height, int width, int bands,
                          std::vector<T> data) {
    if (data.size() != checked_size(height, width, bands))
      throw std::invalid_argument("Cube3d: data size does not match shape");
    Cube3d c;
    c.height_ = height;
    c.width_ = width;
    c.bands_ = bands;
    c.data_ = std::move(data);
    return c;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int bands() const { return bands_; }
  std::size_t size() const { return data_.size(); }
  std::size_t pixels() const { return std::size_t(height_) * width_; }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c, int b) {
    return data_[(std::size_t(r) * width_ + c) * bands_ + b];
  }
  const T& operator()(int r, int c, int b) const {
    return data_[(std::size_t(r) * width_ + c) * bands_ + b];
  }

  /// Pointer to the first band of pixel (r, c); bands() values follow.
  T* pixel(int r, int c) {
    return data_.data() + (std::size_t(r) * width_ + c) * bands_;
  }
  const T* pixel(int r, int c) const {
    return data_.data() + (std::size_t(r) * width_ + c) * bands_;
  }
  T* pixel(std::size_t flat) { return data_.data() + flat * bands_; }
  const T* pixel(std::size_t flat) const {
    return data_.data() + flat * bands_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Cube3d& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           bands_ == other.bands_;
  }

  friend bool operator==(const Cube3d& a, const Cube3d& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ &&
           a.bands_ == b.bands_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(int height, int width, int bands) {
    if (height < 0 || width < 0 || bands < 0)
      throw std::invalid_argument("Cube3d: negative dimension");
    return std::size_t(height) * std::size_t(width) * std::size_t(bands);
  }

  int height_ = 0;
  int width_ = 0;
  int bands_ = 0;
  std::vector<T> data_;
};

using MaskGrid = Grid2d<std::uint8_t>;

}  // namespace plumekit
