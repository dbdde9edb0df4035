#include "aberr/grad.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "aberr/fft.hpp"
#include "propagate.hpp"

namespace aberr {
namespace {

void check_target_psf(const PsfMap& target, const detail::Propagation& prop) {
  if (target.values.rows() != prop.crop || target.values.cols() != prop.crop)
    throw ArgumentError("target PSF is " + std::to_string(target.values.rows()) + "x" +
                        std::to_string(target.values.cols()) + " but the geometry produces " +
                        std::to_string(prop.crop) + "x" + std::to_string(prop.crop));
}

std::vector<Complex> phasors(std::span<const double> w) {
  std::vector<Complex> p(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) p[i] = detail::unit_phasor(w[i]);
  return p;
}

CoeffGradient project(std::span<const double> dl_dw, const ZernikeBasis& basis) {
  CoeffGradient g;
  for (int j = kFirstNoll; j <= kLastNoll; ++j) {
    const auto z = basis.mode(j);
    double s = 0.0;
    for (std::size_t p = 0; p < z.size(); ++p) s += dl_dw[p] * z[p];
    g.at_noll(j) = s;
  }
  return g;
}

double dot(const ZernikeVector& a, const ZernikeVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kNumCoeffs; ++i) s += a[i] * b[i];
  return s;
}

double norm(const ZernikeVector& a) { return std::sqrt(dot(a, a)); }

}  // namespace

LossAndGrad wave_loss_and_grad(const ZernikeVector& pred, std::span<const double> target_aperture,
                               const ZernikeBasis& basis) {
  if (target_aperture.size() != basis.aperture_size())
    throw ArgumentError("wave loss: target does not match the aperture of the basis grid");
  const auto w = aperture_wavefront(pred, basis);
  const double inv_a = 1.0 / static_cast<double>(w.size());
  std::vector<double> resid(w.size());
  double loss = 0.0;
  for (std::size_t p = 0; p < w.size(); ++p) {
    resid[p] = w[p] - target_aperture[p];
    loss += resid[p] * resid[p];
  }
  for (double& r : resid) r *= 2.0 * inv_a;
  return {loss * inv_a, project(resid, basis)};
}

LossAndGrad wave_loss_and_grad(const ZernikeVector& pred, const WavefrontMap& target,
                               const ZernikeBasis& basis) {
  if (!(target.grid == basis.grid()) || target.values.rows() != basis.grid().n())
    throw ArgumentError("wave loss: target wavefront grid does not match the basis grid");
  const auto idx = basis.aperture();
  std::vector<double> t(idx.size());
  for (std::size_t p = 0; p < idx.size(); ++p) t[p] = target.values[idx[p]];
  return wave_loss_and_grad(pred, t, basis);
}

double psf_loss(const ZernikeVector& pred, const PsfMap& target, const ZernikeBasis& basis,
                const PsfGeometry& geometry) {
  const auto pupil = phasors(aperture_wavefront(pred, basis));
  const auto prop = detail::propagate(basis.grid(), basis.aperture(), pupil, geometry);
  check_target_psf(target, prop);
  const double inv_total = 1.0 / prop.total;
  double loss = 0.0;
  for (std::size_t i = 0; i < prop.intensity.size(); ++i) {
    const double r = prop.intensity[i] * inv_total - target.values[i];
    loss += r * r;
  }
  return loss;
}

LossAndGrad psf_loss_and_grad(const ZernikeVector& pred, const PsfMap& target,
                              const ZernikeBasis& basis, const PsfGeometry& geometry) {
  const auto pupil = phasors(aperture_wavefront(pred, basis));
  const auto prop = detail::propagate(basis.grid(), basis.aperture(), pupil, geometry);
  check_target_psf(target, prop);

  const std::size_t m = prop.crop;
  const std::size_t k = prop.field;
  const double inv_total = 1.0 / prop.total;

  // Residual and dL/dpsf.
  std::vector<double> psf(m * m);
  std::vector<double> g(m * m);
  double loss = 0.0;
  double g_dot_psf = 0.0;
  for (std::size_t i = 0; i < m * m; ++i) {
    psf[i] = prop.intensity[i] * inv_total;
    const double r = psf[i] - target.values[i];
    loss += r * r;
    g[i] = 2.0 * r;
    g_dot_psf += g[i] * psf[i];
  }

  // Through psf = I / sum(I): dL/dI_p = (g_p - <g, psf>) / sum(I); then
  // I = |E|^2 gives the complex cotangent 2 (dL/dI) E on the crop window.
  std::vector<Complex> cot(k * k);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      const std::size_t i = r * m + c;
      const std::size_t f = (r + prop.start) * k + (c + prop.start);
      const double dl_di = (g[i] - g_dot_psf) * inv_total;
      cot[f] = 2.0 * dl_di * prop.spectrum[f];
    }
  }

  // Adjoint of the quadrant swap is the swap itself; adjoint of the unnormalized
  // forward DFT is the unnormalized backward DFT.
  fft::fftshift(std::span<Complex>(cot), k, k);
  std::vector<Complex> field_cot(k * k);
  fft::backward(cot, field_cot, k, k);

  // P = exp(i 2 pi W): dL/dW = 2 pi Im(conj(P) dL/dP).
  const std::size_t n = basis.grid().n();
  const auto idx = basis.aperture();
  std::vector<double> dl_dw(idx.size());
  for (std::size_t p = 0; p < idx.size(); ++p) {
    const std::size_t r = idx[p] / n + prop.offset;
    const std::size_t c = idx[p] % n + prop.offset;
    dl_dw[p] = 2.0 * std::numbers::pi * (std::conj(pupil[p]) * field_cot[r * k + c]).imag();
  }
  return {loss, project(dl_dw, basis)};
}

RecoverResult recover_coefficients(const PsfMap& observed, const ZernikeBasis& basis,
                                   const RecoverConfig& cfg) {
  if (cfg.max_iters < 0 || cfg.starts < 1) throw ArgumentError("recover: max_iters >= 0 and starts >= 1 required");
  if (cfg.wave_weight > 0.0 && !cfg.wavefront)
    throw ConfigError("recover: wave_weight > 0 requires a target wavefront");

  auto objective = [&](const ZernikeVector& a, bool with_grad) -> LossAndGrad {
    LossAndGrad out;
    if (with_grad) {
      out = psf_loss_and_grad(a, observed, basis, cfg.geometry);
    } else {
      out.loss = psf_loss(a, observed, basis, cfg.geometry);
    }
    if (cfg.wave_weight > 0.0) {
      const auto wave = wave_loss_and_grad(a, *cfg.wavefront, basis);
      out.loss += cfg.wave_weight * wave.loss;
      for (std::size_t i = 0; i < kNumCoeffs; ++i) out.grad[i] += cfg.wave_weight * wave.grad[i];
    }
    return out;
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> spread(-cfg.init_spread, cfg.init_spread);

  RecoverResult result;
  result.loss = std::numeric_limits<double>::infinity();

  for (int s = 0; s < cfg.starts; ++s) {
    ZernikeVector x = cfg.init;
    if (s > 0)
      for (auto& v : x.span()) v = spread(rng);

    auto cur = objective(x, true);
    if (!std::isfinite(cur.loss)) throw NumericalError("recover: non-finite loss at iteration 0");
    std::vector<TracePoint> trace{{0, cur.loss, norm(cur.grad)}};
    ZernikeVector best = x;
    double best_loss = cur.loss;
    ZernikeVector dir_prev;
    double step = cfg.initial_step;

    for (int it = 1; it <= cfg.max_iters; ++it) {
      const double gnorm = norm(cur.grad);
      if (cur.loss <= cfg.loss_tolerance || gnorm <= cfg.grad_tolerance) break;

      ZernikeVector dir;
      for (std::size_t i = 0; i < kNumCoeffs; ++i) dir[i] = -cur.grad[i] + cfg.momentum * dir_prev[i];
      double slope = dot(cur.grad, dir);
      if (!(slope < 0.0)) {
        for (std::size_t i = 0; i < kNumCoeffs; ++i) dir[i] = -cur.grad[i];
        slope = -gnorm * gnorm;
      }

      double alpha = 2.0 * step;
      bool accepted = false;
      ZernikeVector trial;
      double trial_loss = 0.0;
      for (int b = 0; b < cfg.max_backtracks; ++b, alpha *= 0.5) {
        for (std::size_t i = 0; i < kNumCoeffs; ++i) trial[i] = x[i] + alpha * dir[i];
        trial_loss = objective(trial, false).loss;
        if (!std::isfinite(trial_loss))
          throw NumericalError("recover: non-finite loss at iteration " + std::to_string(it));
        if (trial_loss <= cur.loss + cfg.armijo * alpha * slope) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // The line search cannot make progress along this direction; drop momentum once.
        if (dir_prev == ZernikeVector{}) break;
        dir_prev = ZernikeVector{};
        continue;
      }

      x = trial;
      step = alpha;
      dir_prev = dir;
      cur = objective(x, true);
      if (!std::isfinite(cur.loss))
        throw NumericalError("recover: non-finite loss at iteration " + std::to_string(it));
      if (cur.loss < best_loss) {
        best_loss = cur.loss;
        best = x;
      }
      trace.push_back({it, best_loss, norm(cur.grad)});
    }

    result.start_losses.push_back(best_loss);
    result.start_coeffs.push_back(best);
    if (best_loss < result.loss) {
      result.loss = best_loss;
      result.coeffs = best;
      result.best_start = s;
      result.trace = std::move(trace);
    }
  }
  return result;
}

}  // namespace aberr
