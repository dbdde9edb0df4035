#include "aberr/optics.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "aberr/fft.hpp"
#include "propagate.hpp"

namespace aberr {

double PsfMap::sum() const {
  return std::accumulate(values.data().begin(), values.data().end(), 0.0);
}

std::size_t PsfGeometry::field_size(const PupilGrid& grid) const {
  return static_cast<std::size_t>(pad_factor) * grid.n();
}

std::size_t PsfGeometry::crop_size(const PupilGrid& grid) const {
  return crop == 0 ? field_size(grid) : crop;
}

void PsfGeometry::validate(const PupilGrid& grid) const {
  if (pad_factor < 1) throw ArgumentError("pad_factor must be >= 1");
  if (crop > field_size(grid))
    throw ArgumentError("PSF crop " + std::to_string(crop) + " exceeds the padded field " +
                        std::to_string(field_size(grid)));
}

Boundary parse_boundary(const std::string& name) {
  if (name == "circular") return Boundary::circular;
  if (name == "replicate" || name == "edge" || name == "edge-replicate") return Boundary::replicate;
  throw ArgumentError("unknown boundary mode: " + name);
}

std::string to_string(Boundary b) { return b == Boundary::circular ? "circular" : "replicate"; }

std::vector<double> aperture_wavefront(const ZernikeVector& coeffs, const ZernikeBasis& basis) {
  std::vector<double> w(basis.aperture_size(), 0.0);
  for (int j = kFirstNoll; j <= kLastNoll; ++j) {
    const double a = coeffs.at_noll(j);
    if (a == 0.0) continue;
    const auto z = basis.mode(j);
    for (std::size_t p = 0; p < w.size(); ++p) w[p] += a * z[p];
  }
  return w;
}

WavefrontMap wavefront_from_coeffs(const ZernikeVector& coeffs, const ZernikeBasis& basis) {
  const std::size_t n = basis.grid().n();
  WavefrontMap map{basis.grid(), Image(n, n), basis.mask()};
  const auto w = aperture_wavefront(coeffs, basis);
  const auto idx = basis.aperture();
  for (std::size_t p = 0; p < idx.size(); ++p) map.values[idx[p]] = w[p];
  return map;
}

WavefrontMap wavefront_from_coeffs(const ZernikeVector& coeffs, const PupilGrid& grid) {
  return wavefront_from_coeffs(coeffs, ZernikeBasis(grid));
}

ComplexPupil pupil_from_wavefront(const WavefrontMap& w) {
  const std::size_t n = w.grid.n();
  if (w.values.rows() != n || w.values.cols() != n || !w.mask.same_shape(Grid2<std::uint8_t>(n, n)))
    throw ArgumentError("pupil_from_wavefront: map shape does not match its grid");
  ComplexPupil pupil{w.grid, Grid2<Complex>(n, n)};
  for (std::size_t i = 0; i < w.values.size(); ++i)
    if (w.mask[i] != 0) pupil.values[i] = detail::unit_phasor(w.values[i]);
  return pupil;
}

namespace detail {

Propagation propagate(const PupilGrid& grid, std::span<const std::size_t> indices,
                      std::span<const Complex> values, const PsfGeometry& geometry) {
  geometry.validate(grid);
  Propagation out;
  const std::size_t n = grid.n();
  out.field = geometry.field_size(grid);
  out.crop = geometry.crop_size(grid);
  out.offset = (out.field - n) / 2;
  out.start = out.field / 2 - out.crop / 2;

  const std::size_t k = out.field;
  std::vector<Complex> padded(k * k);
  for (std::size_t p = 0; p < indices.size(); ++p) {
    const std::size_t r = indices[p] / n + out.offset;
    const std::size_t c = indices[p] % n + out.offset;
    padded[r * k + c] = values[p];
  }
  out.spectrum.resize(k * k);
  fft::forward(padded, out.spectrum, k, k);
  fft::fftshift(std::span<Complex>(out.spectrum), k, k);

  const std::size_t m = out.crop;
  out.intensity.resize(m * m);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const Complex* row = out.spectrum.data() + (r + out.start) * k + out.start;
    for (std::size_t c = 0; c < m; ++c) {
      const double v = std::norm(row[c]);
      out.intensity[r * m + c] = v;
      total += v;
    }
  }
  out.total = total;
  if (!(total > 0.0)) throw DegenerateApertureError("PSF has zero total energy (empty aperture?)");
  return out;
}

}  // namespace detail

namespace {

PsfMap normalized(const detail::Propagation& prop) {
  PsfMap psf{Image(prop.crop, prop.crop)};
  const double inv = 1.0 / prop.total;
  for (std::size_t i = 0; i < prop.intensity.size(); ++i) psf.values[i] = prop.intensity[i] * inv;
  return psf;
}

}  // namespace

PsfMap psf_from_pupil(const ComplexPupil& pupil, const PsfGeometry& geometry) {
  const std::size_t n = pupil.grid.n();
  if (pupil.values.rows() != n || pupil.values.cols() != n)
    throw ArgumentError("psf_from_pupil: pupil shape does not match its grid");
  std::vector<std::size_t> indices;
  std::vector<Complex> values;
  for (std::size_t i = 0; i < pupil.values.size(); ++i) {
    if (pupil.values[i] == Complex{}) continue;
    indices.push_back(i);
    values.push_back(pupil.values[i]);
  }
  return normalized(detail::propagate(pupil.grid, indices, values, geometry));
}

PsfMap psf_from_coeffs(const ZernikeVector& coeffs, const ZernikeBasis& basis,
                       const PsfGeometry& geometry) {
  const auto w = aperture_wavefront(coeffs, basis);
  std::vector<Complex> values(w.size());
  for (std::size_t p = 0; p < w.size(); ++p) values[p] = detail::unit_phasor(w[p]);
  return normalized(detail::propagate(basis.grid(), basis.aperture(), values, geometry));
}

Grid2<Complex> transfer_function(const PsfMap& psf, std::size_t rows, std::size_t cols) {
  const std::size_t m = psf.size();
  if (m == 0 || psf.values.cols() != m) throw ArgumentError("PSF must be square and non-empty");
  if (m > rows || m > cols)
    throw ArgumentError("PSF (" + std::to_string(m) + ") larger than image (" + std::to_string(rows) +
                        "x" + std::to_string(cols) + ")");
  const std::size_t center = m / 2;
  Grid2<Complex> kernel(rows, cols);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t rr = (r + rows - center) % rows;
    for (std::size_t c = 0; c < m; ++c) {
      const std::size_t cc = (c + cols - center) % cols;
      kernel(rr, cc) = psf.values(r, c);
    }
  }
  Grid2<Complex> h(rows, cols);
  fft::forward(kernel.span(), h.span(), rows, cols);
  return h;
}

namespace {

Image circular_convolve(const Image& img, const PsfMap& psf) {
  const std::size_t rows = img.rows();
  const std::size_t cols = img.cols();
  const auto h = transfer_function(psf, rows, cols);
  std::vector<Complex> buf(img.data().begin(), img.data().end());
  std::vector<Complex> spec(buf.size());
  fft::forward(buf, spec, rows, cols);
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= h[i];
  fft::backward(spec, buf, rows, cols);
  Image out(rows, cols);
  const double scale = 1.0 / static_cast<double>(rows * cols);
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real() * scale;
  return out;
}

}  // namespace

Image blur_image(const Image& clean, const PsfMap& psf, Boundary mode) {
  if (clean.empty()) throw ArgumentError("blur_image: empty image");
  if (psf.size() > clean.rows() || psf.size() > clean.cols())
    throw ArgumentError("blur_image: PSF larger than image");
  if (mode == Boundary::circular) return circular_convolve(clean, psf);
  const std::size_t pad = psf.size() / 2 + 1;
  const Image padded = pad_replicate(clean, pad, pad, pad, pad);
  return crop(circular_convolve(padded, psf), pad, pad, clean.rows(), clean.cols());
}

PsfMap delta_psf(std::size_t size) {
  if (size == 0) throw ArgumentError("delta_psf: size must be >= 1");
  PsfMap psf{Image(size, size)};
  psf.values(size / 2, size / 2) = 1.0;
  return psf;
}

}  // namespace aberr
