#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>

namespace aberr::fft {

using cplx = std::complex<double>;

/// Unnormalized 2-D DFT over a row-major rows x cols buffer.
/// forward: X[k] = sum_x x[n] exp(-2 pi i k n / N); backward uses +i.
/// Plans are cached process-wide behind a mutex; execution is thread-safe.
void forward(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols);
void backward(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols);

/// Quadrant swap moving index 0 to (rows/2, cols/2). Self-inverse for even sizes.
template <class T>
void fftshift(std::span<T> data, std::size_t rows, std::size_t cols) {
  const std::size_t hr = rows / 2;
  const std::size_t hc = cols / 2;
  for (std::size_t r = 0; r < hr; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t c2 = (c + hc) % cols;
      std::swap(data[r * cols + c], data[(r + hr) * cols + c2]);
    }
  }
}

}  // namespace aberr::fft
