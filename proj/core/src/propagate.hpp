#pragma once

// Shared forward propagation used by the PSF model and its adjoint.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "aberr/optics.hpp"

namespace aberr::detail {

struct Propagation {
  std::size_t field = 0;  // K = pad * N
  std::size_t crop = 0;   // M
  std::size_t start = 0;  // first row/col of the crop window inside the shifted field
  std::size_t offset = 0; // first row/col of the pupil inside the padded field
  std::vector<Complex> spectrum;  // K x K, quadrant-swapped
  std::vector<double> intensity;  // M x M, before normalization
  double total = 0.0;
};

/// Pupil samples given at row-major indices of an N x N grid.
Propagation propagate(const PupilGrid& grid, std::span<const std::size_t> indices,
                      std::span<const Complex> values, const PsfGeometry& geometry);

inline Complex unit_phasor(double waves) {
  const double phase = 2.0 * std::numbers::pi * waves;
  return {std::cos(phase), std::sin(phase)};
}

}  // namespace aberr::detail
