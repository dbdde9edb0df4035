#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "aberr/fft.hpp"
#include "aberr/simulate.hpp"

namespace aberr {
namespace {

// Gaussian low-pass of white noise, done in the frequency domain (periodic).
Image filtered_noise(std::size_t size, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<fft::cplx> buf(size * size);
  for (auto& v : buf) v = normal(rng);
  std::vector<fft::cplx> spec(buf.size());
  fft::forward(buf, spec, size, size);
  const double n = static_cast<double>(size);
  for (std::size_t r = 0; r < size; ++r) {
    const double fy = (r <= size / 2 ? static_cast<double>(r) : static_cast<double>(r) - n) / n;
    for (std::size_t c = 0; c < size; ++c) {
      const double fx = (c <= size / 2 ? static_cast<double>(c) : static_cast<double>(c) - n) / n;
      const double f2 = fx * fx + fy * fy;
      spec[r * size + c] *= std::exp(-2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma * f2);
    }
  }
  fft::backward(spec, buf, size, size);
  Image out(size, size);
  double sq = 0.0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out[i] = buf[i].real();
    sq += out[i] * out[i];
  }
  const double rms = std::sqrt(sq / static_cast<double>(out.size()));
  if (rms > 0.0)
    for (double& v : out.data()) v /= rms;
  return out;
}

void stamp(Image& img, double x, double y, double value) {
  // Bilinear splat keeps thin structures smooth but sharp.
  const auto size = static_cast<double>(img.rows());
  if (x < 0.0 || y < 0.0 || x >= size - 1.0 || y >= size - 1.0) return;
  const auto c = static_cast<std::size_t>(x);
  const auto r = static_cast<std::size_t>(y);
  const double fx = x - static_cast<double>(c);
  const double fy = y - static_cast<double>(r);
  img(r, c) += value * (1 - fx) * (1 - fy);
  img(r, c + 1) += value * fx * (1 - fy);
  img(r + 1, c) += value * (1 - fx) * fy;
  img(r + 1, c + 1) += value * fx * fy;
}

void draw_cells(Image& img, std::mt19937_64& rng) {
  const auto size = static_cast<double>(img.rows());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int count = std::max(3, static_cast<int>(size * size / 900.0));
  for (int k = 0; k < count; ++k) {
    const double cx = unit(rng) * size;
    const double cy = unit(rng) * size;
    const double ra = 3.0 + unit(rng) * size / 12.0;
    const double rb = ra * (0.5 + 0.5 * unit(rng));
    const double tilt = unit(rng) * std::numbers::pi;
    const double membrane = 0.8 + 0.6 * unit(rng);
    const double interior = -0.3 * unit(rng);
    const int r_lo = std::max(0, static_cast<int>(cy - ra - 2));
    const int r_hi = std::min(static_cast<int>(size) - 1, static_cast<int>(cy + ra + 2));
    const int c_lo = std::max(0, static_cast<int>(cx - ra - 2));
    const int c_hi = std::min(static_cast<int>(size) - 1, static_cast<int>(cx + ra + 2));
    for (int r = r_lo; r <= r_hi; ++r) {
      for (int c = c_lo; c <= c_hi; ++c) {
        const double dx = c - cx;
        const double dy = r - cy;
        const double u = (dx * std::cos(tilt) + dy * std::sin(tilt)) / ra;
        const double v = (-dx * std::sin(tilt) + dy * std::cos(tilt)) / rb;
        const double rho = std::sqrt(u * u + v * v);
        const double edge = std::abs(rho - 1.0) * rb;  // approximate distance to outline in pixels
        double add = 0.0;
        if (edge < 1.2) add += membrane * (1.2 - edge) / 1.2;
        if (rho < 1.0) add += interior;
        if (rho < 0.25) add -= 0.4;  // nucleus
        img(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) += add;
      }
    }
  }
}

void draw_filaments(Image& img, std::mt19937_64& rng) {
  const auto size = static_cast<double>(img.rows());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> turn(0.0, 0.15);
  const int count = std::max(2, static_cast<int>(size / 16.0));
  for (int k = 0; k < count; ++k) {
    double x = unit(rng) * size;
    double y = unit(rng) * size;
    double heading = unit(rng) * 2.0 * std::numbers::pi;
    const double strength = 0.5 + 0.7 * unit(rng);
    const int steps = static_cast<int>(size * (0.3 + 0.7 * unit(rng)) * 2.0);
    for (int s = 0; s < steps; ++s) {
      stamp(img, x, y, strength);
      heading += turn(rng);
      x += 0.5 * std::cos(heading);
      y += 0.5 * std::sin(heading);
    }
  }
}

}  // namespace

Image procedural_texture(std::size_t size, std::uint64_t seed) {
  if (size < 32) throw ArgumentError("procedural_texture: size must be >= 32");
  std::mt19937_64 rng(seed ^ 0x7e57u);
  Image img(size, size);
  const double sigmas[] = {0.7, 1.5, 3.0, 8.0};
  const double weights[] = {0.15, 0.2, 0.25, 0.35};
  for (int o = 0; o < 4; ++o) {
    const Image layer = filtered_noise(size, sigmas[o], rng);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += weights[o] * layer[i];
  }
  draw_cells(img, rng);
  draw_filaments(img, rng);
  const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
  const double min = *lo;
  const double span = *hi - *lo;
  for (double& v : img.data()) v = span > 0.0 ? (v - min) / span : 0.5;
  return img;
}

}  // namespace aberr
