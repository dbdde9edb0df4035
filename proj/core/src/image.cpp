#include "aberr/image.hpp"

#include <algorithm>
#include <numeric>

namespace aberr {

double mean(const Image& img) {
  if (img.empty()) throw ArgumentError("mean of empty image");
  return std::accumulate(img.data().begin(), img.data().end(), 0.0) / static_cast<double>(img.size());
}

Image crop(const Image& img, std::size_t row, std::size_t col, std::size_t rows, std::size_t cols) {
  if (row + rows > img.rows() || col + cols > img.cols())
    throw ArgumentError("crop window exceeds image bounds");
  Image out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(&img(row + r, col), cols, &out(r, 0));
  return out;
}

Image pad_replicate(const Image& img, std::size_t top, std::size_t bottom, std::size_t left,
                    std::size_t right) {
  if (img.empty()) throw ArgumentError("pad of empty image");
  const std::size_t rows = img.rows() + top + bottom;
  const std::size_t cols = img.cols() + left + right;
  Image out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t sr = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(top), 0,
                                                      static_cast<std::ptrdiff_t>(img.rows()) - 1);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t sc = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(left), 0,
                                                        static_cast<std::ptrdiff_t>(img.cols()) - 1);
      out(r, c) = img(sr, sc);
    }
  }
  return out;
}

void clip_unit(Image& img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace aberr
