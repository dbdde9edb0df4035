#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aberr/optics.hpp"
#include "aberr/zernike.hpp"

namespace aberr {

/// dL/da_j for j = 2..37.
using CoeffGradient = ZernikeVector;

struct LossAndGrad {
  double loss = 0.0;
  CoeffGradient grad;
};

/// (1/A) sum over the aperture of (W_pred - W_target)^2 and its exact gradient
/// (2/A) sum (W_pred - W_target) Z_j. The target must live on the basis grid.
LossAndGrad wave_loss_and_grad(const ZernikeVector& pred, const WavefrontMap& target,
                               const ZernikeBasis& basis);

/// Wave loss against a target given directly on the aperture pixels.
LossAndGrad wave_loss_and_grad(const ZernikeVector& pred, std::span<const double> target_aperture,
                               const ZernikeBasis& basis);

/// Pixel MSE between unit-sum PSFs, scaled by M^2 so that the value equals the plain sum
/// of squared residuals:
///
///   L = M^2 * mean_p (psf(a)_p - target_p)^2
///
/// The gradient is propagated through the unit-sum normalization, the squared modulus,
/// the DFT (by its adjoint) and the pupil phase back onto each Zernike mode.
LossAndGrad psf_loss_and_grad(const ZernikeVector& pred, const PsfMap& target,
                              const ZernikeBasis& basis, const PsfGeometry& geometry);

/// Loss only; no adjoint pass.
double psf_loss(const ZernikeVector& pred, const PsfMap& target, const ZernikeBasis& basis,
                const PsfGeometry& geometry);

struct RecoverConfig {
  PsfGeometry geometry;
  int max_iters = 500;
  int starts = 1;                 // multi-start count; start 0 uses `init`
  double init_spread = 0.05;      // restarts draw a_j uniformly from [-spread, spread]
  std::uint64_t seed = 0;
  ZernikeVector init;
  double momentum = 0.9;
  double initial_step = 1e-2;
  double armijo = 1e-4;
  int max_backtracks = 40;
  double loss_tolerance = 1e-28;  // stop once the loss falls below this
  double grad_tolerance = 1e-14;  // stop once ||g|| falls below this
  double wave_weight = 0.0;       // > 0 adds wave_mse against `wavefront`
  std::optional<WavefrontMap> wavefront;
};

struct TracePoint {
  int iter = 0;
  double loss = 0.0;  // best loss so far (monotone non-increasing)
  double grad_norm = 0.0;
};

struct RecoverResult {
  ZernikeVector coeffs;
  double loss = 0.0;
  int best_start = 0;
  std::vector<TracePoint> trace;                 // trace of the winning start
  std::vector<double> start_losses;              // final loss of every start
  std::vector<ZernikeVector> start_coeffs;       // final iterate of every start
};

/// Gradient descent with momentum and Armijo backtracking on the PSF loss
/// (plus the optional wave loss). Returns the lowest-loss iterate across starts.
/// Throws NumericalError naming the iteration when the loss becomes non-finite.
RecoverResult recover_coefficients(const PsfMap& observed, const ZernikeBasis& basis,
                                   const RecoverConfig& cfg);

}  // namespace aberr
