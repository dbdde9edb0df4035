#pragma once

#include <string>

#include "aberr/image.hpp"
#include "aberr/optics.hpp"
#include "aberr/simulate.hpp"

namespace aberr {

struct WienerConfig {
  double nsr = 1e-3;  // constant noise-to-signal power ratio, > 0
  Boundary boundary = Boundary::replicate;

  void validate() const;
};

/// Per-frequency gain conj(H) / (|H|^2 + nsr).
Grid2<Complex> wiener_filter(const Grid2<Complex>& transfer, double nsr);

/// Filters the (boundary-handled) blurred image and clips the result to [0, 1].
/// Replicate mode extends the image by max(M, 8) edge-replicated pixels, blends the
/// outer border across the periodic seam, filters, and crops back.
Image wiener_deconvolve(const Image& blurred, const PsfMap& psf, const WienerConfig& cfg);

/// 10 log10(peak^2 / MSE). Identical images give +infinity.
double psnr(const Image& a, const Image& b, double peak = 1.0);

struct RestorationReport {
  std::string sample_id;
  double psnr_blurred = 0.0;
  double psnr_pred = 0.0;
  double psnr_oracle = 0.0;
  double oracle_gap = 0.0;  // psnr_pred - psnr_oracle
};

/// Restores the sample with the PSF of `pred` and of `truth` and compares both with
/// the clean reference. Throws ArgumentError when the sample has no clean image.
RestorationReport oracle_gap_report(const Sample& sample, const ZernikeVector& pred,
                                    const ZernikeVector& truth, const ZernikeBasis& basis,
                                    const PsfGeometry& geometry, const WienerConfig& cfg);

/// JSON object; infinite PSNRs serialize as null with a "<field>_infinite": true flag.
std::string report_to_json(const RestorationReport& report);

}  // namespace aberr
