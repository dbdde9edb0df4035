#pragma once

#include <complex>
#include <string>
#include <vector>
#include <cstddef>

#include "aberr/image.hpp"
#include "aberr/zernike.hpp"

namespace aberr {

using Complex = std::complex<double>;

/// mask * exp(i 2 pi W): unit modulus inside the aperture, zero outside.
struct ComplexPupil {
  PupilGrid grid{2, 1.0};
  Grid2<Complex> values;
};

/// Incoherent PSF, nonnegative and normalized to unit sum. For an even side M the
/// diffraction-limited peak sits at (M/2, M/2); convolution and restoration share
/// that convention.
struct PsfMap {
  Image values;

  std::size_t size() const noexcept { return values.rows(); }
  double sum() const;
};

/// Zero-padding and crop used when propagating a pupil to a PSF.
struct PsfGeometry {
  int pad_factor = 2;
  std::size_t crop = 0;  // 0 selects the full pad_factor * N field

  std::size_t field_size(const PupilGrid& grid) const;
  std::size_t crop_size(const PupilGrid& grid) const;
  void validate(const PupilGrid& grid) const;
};

enum class Boundary { circular, replicate };

Boundary parse_boundary(const std::string& name);
std::string to_string(Boundary b);

/// W = sum_j a_j Z_j. Linear in the coefficients.
WavefrontMap wavefront_from_coeffs(const ZernikeVector& coeffs, const ZernikeBasis& basis);
WavefrontMap wavefront_from_coeffs(const ZernikeVector& coeffs, const PupilGrid& grid);

/// Values of W on the aperture pixels only (aligned with basis.aperture()).
std::vector<double> aperture_wavefront(const ZernikeVector& coeffs, const ZernikeBasis& basis);

ComplexPupil pupil_from_wavefront(const WavefrontMap& w);

/// Embeds the pupil centered in a (pad * N)^2 zero field, transforms, quadrant-swaps,
/// squares, crops the central window and normalizes to unit sum.
/// Throws DegenerateApertureError when the cropped field carries no energy.
PsfMap psf_from_pupil(const ComplexPupil& pupil, const PsfGeometry& geometry);

PsfMap psf_from_coeffs(const ZernikeVector& coeffs, const ZernikeBasis& basis,
                       const PsfGeometry& geometry);

/// DFT of the PSF embedded in a rows x cols field with its center (M/2, M/2)
/// moved to the origin.
Grid2<Complex> transfer_function(const PsfMap& psf, std::size_t rows, std::size_t cols);

/// Convolution of a single-channel image with a normalized PSF.
/// Circular mode wraps around; replicate mode pads by M/2 with edge values and crops.
Image blur_image(const Image& clean, const PsfMap& psf, Boundary mode = Boundary::circular);

/// Square delta PSF of side M with its single unit pixel at (M/2, M/2); M = 1 is allowed.
PsfMap delta_psf(std::size_t size);

}  // namespace aberr
