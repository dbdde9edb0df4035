#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aberr/error.hpp"

namespace aberr {

/// Dense row-major 2-D array.
template <class T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Grid2(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ArgumentError("Grid2: data size does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(const Grid2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  friend bool operator==(const Grid2&, const Grid2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Single-channel image, values nominally in [0, 1].
using Image = Grid2<double>;

double mean(const Image& img);

/// Copy of the rectangle starting at (row, col).
Image crop(const Image& img, std::size_t row, std::size_t col, std::size_t rows, std::size_t cols);

/// Edge-replicate padding by `top/left` before and `bottom/right` after.
Image pad_replicate(const Image& img, std::size_t top, std::size_t bottom, std::size_t left,
                    std::size_t right);

void clip_unit(Image& img);

}  // namespace aberr
