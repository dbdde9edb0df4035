#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aberr/image.hpp"

namespace aberr {

inline constexpr int kFirstNoll = 2;
inline constexpr int kLastNoll = 37;
inline constexpr std::size_t kNumCoeffs = 36;

/// Aberration coefficients a_2 ... a_37 in waves, indexed by Noll j.
class ZernikeVector {
 public:
  ZernikeVector() { values_.fill(0.0); }
  explicit ZernikeVector(std::span<const double> values);

  double& at_noll(int j);
  double at_noll(int j) const;

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  static constexpr std::size_t size() { return kNumCoeffs; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::array<double, kNumCoeffs>& array() const noexcept { return values_; }

  friend bool operator==(const ZernikeVector&, const ZernikeVector&) = default;

 private:
  std::array<double, kNumCoeffs> values_;
};

struct RadialAzimuthal {
  int n;
  int m;  // signed: positive for cosine terms, negative for sine terms
  friend bool operator==(const RadialAzimuthal&, const RadialAzimuthal&) = default;
};

/// Noll's single index to (n, m). Valid for 1 <= j <= 37.
RadialAzimuthal noll_to_nm(int j);

/// Inverse of noll_to_nm on its image.
int nm_to_noll(int n, int m);

/// R_n^{|m|}(rho) by the factorial-sum formula.
double radial_polynomial(int n, int m_abs, double rho);

/// Noll normalization: sqrt(n+1) for m = 0, sqrt(2(n+1)) otherwise.
double noll_normalization(int n, int m);

/// Z_j(rho, theta) with Noll normalization; theta counterclockwise from +x.
double zernike_value(int j, double rho, double theta);

/// Square sampling of the unit pupil disk.
///
/// Pixel (row, col) has coordinates x = (col - n/2) / r, y = (row - n/2) / r
/// with r = aperture_fraction * n / 2. A pixel is inside the aperture iff rho <= 1
/// at its center.
class PupilGrid {
 public:
  PupilGrid(std::size_t n_samples, double aperture_fraction);

  std::size_t n() const noexcept { return n_; }
  double aperture_fraction() const noexcept { return fraction_; }
  double radius_pixels() const noexcept { return fraction_ * static_cast<double>(n_) / 2.0; }
  double x(std::size_t col) const;
  double y(std::size_t row) const;

  friend bool operator==(const PupilGrid&, const PupilGrid&) = default;

 private:
  std::size_t n_;
  double fraction_;
};

/// N x N wavefront in waves plus its aperture mask. Values are zero outside the mask.
struct WavefrontMap {
  PupilGrid grid{2, 1.0};
  Image values;
  Grid2<std::uint8_t> mask;
};

/// Sampled Z_j on the grid, zero outside the aperture. Accepts j = 1 (piston).
WavefrontMap basis_map(int j, const PupilGrid& grid);

/// Basis modes j = 1..37 precomputed on the aperture pixels of one grid.
/// Immutable after construction; safe to share between threads.
class ZernikeBasis {
 public:
  explicit ZernikeBasis(const PupilGrid& grid);

  const PupilGrid& grid() const noexcept { return grid_; }
  /// Row-major linear indices of the aperture pixels.
  std::span<const std::size_t> aperture() const noexcept { return aperture_; }
  std::size_t aperture_size() const noexcept { return aperture_.size(); }
  const Grid2<std::uint8_t>& mask() const noexcept { return mask_; }
  /// Mode values on the aperture pixels, aligned with aperture().
  std::span<const double> mode(int j) const;

 private:
  PupilGrid grid_;
  Grid2<std::uint8_t> mask_;
  std::vector<std::size_t> aperture_;
  std::vector<double> modes_;  // (37) x aperture_size
};

/// Maximum |<Z_i, Z_j>/A - delta_ij| over 2 <= i, j <= 37.
double max_orthonormality_error(const ZernikeBasis& basis);

}  // namespace aberr
