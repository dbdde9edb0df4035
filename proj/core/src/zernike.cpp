#include "aberr/zernike.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace aberr {
namespace {

constexpr int kMaxRadialOrder = 8;  // Noll j = 37 is (8, 0)

std::array<RadialAzimuthal, kLastNoll + 1> build_noll_table() {
  std::array<RadialAzimuthal, kLastNoll + 1> table{};
  int j = 1;
  for (int n = 0; j <= kLastNoll; ++n) {
    for (int m = n % 2; m <= n && j <= kLastNoll; m += 2) {
      if (m == 0) {
        table[j++] = {n, 0};
        continue;
      }
      // Even j takes the cosine (positive m), odd j the sine.
      for (int k = 0; k < 2 && j <= kLastNoll; ++k, ++j) table[j] = {n, j % 2 == 0 ? m : -m};
    }
  }
  return table;
}

const std::array<RadialAzimuthal, kLastNoll + 1>& noll_table() {
  static const auto table = build_noll_table();
  return table;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

void check_nm(int n, int m_abs) {
  if (n < 0 || m_abs < 0 || m_abs > n || (n - m_abs) % 2 != 0)
    throw ArgumentError("radial polynomial: invalid (n, |m|) = (" + std::to_string(n) + ", " +
                        std::to_string(m_abs) + ")");
}

// Coefficients c_k of rho^{n-2k}, k = 0..(n-|m|)/2.
std::vector<double> radial_coefficients(int n, int m_abs) {
  const int half_diff = (n - m_abs) / 2;
  const int half_sum = (n + m_abs) / 2;
  std::vector<double> c(static_cast<std::size_t>(half_diff) + 1);
  for (int k = 0; k <= half_diff; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    c[static_cast<std::size_t>(k)] =
        sign * factorial(n - k) / (factorial(k) * factorial(half_sum - k) * factorial(half_diff - k));
  }
  return c;
}

struct RadialTable {
  std::vector<double> coeffs[kMaxRadialOrder + 1][kMaxRadialOrder + 1];
  RadialTable() {
    for (int n = 0; n <= kMaxRadialOrder; ++n)
      for (int m = n % 2; m <= n; m += 2) coeffs[n][m] = radial_coefficients(n, m);
  }
};

const RadialTable& radial_table() {
  static const RadialTable table;
  return table;
}

double eval_radial(std::span<const double> c, int n, double rho) {
  double sum = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) sum += c[k] * std::pow(rho, n - 2 * static_cast<int>(k));
  return sum;
}

}  // namespace

ZernikeVector::ZernikeVector(std::span<const double> values) {
  if (values.size() != kNumCoeffs)
    throw ArgumentError("ZernikeVector: expected 36 coefficients, got " +
                        std::to_string(values.size()));
  for (std::size_t i = 0; i < kNumCoeffs; ++i) {
    if (!std::isfinite(values[i])) throw ArgumentError("ZernikeVector: non-finite coefficient");
    values_[i] = values[i];
  }
}

double& ZernikeVector::at_noll(int j) {
  if (j < kFirstNoll || j > kLastNoll) throw ArgumentError("Noll index out of range: " + std::to_string(j));
  return values_[static_cast<std::size_t>(j - kFirstNoll)];
}

double ZernikeVector::at_noll(int j) const {
  if (j < kFirstNoll || j > kLastNoll) throw ArgumentError("Noll index out of range: " + std::to_string(j));
  return values_[static_cast<std::size_t>(j - kFirstNoll)];
}

RadialAzimuthal noll_to_nm(int j) {
  if (j < 1 || j > kLastNoll) throw ArgumentError("Noll index out of range: " + std::to_string(j));
  return noll_table()[static_cast<std::size_t>(j)];
}

int nm_to_noll(int n, int m) {
  const auto& table = noll_table();
  for (int j = 1; j <= kLastNoll; ++j)
    if (table[static_cast<std::size_t>(j)] == RadialAzimuthal{n, m}) return j;
  throw ArgumentError("(n, m) = (" + std::to_string(n) + ", " + std::to_string(m) +
                      ") has no Noll index <= 37");
}

double radial_polynomial(int n, int m_abs, double rho) {
  check_nm(n, m_abs);
  if (!(rho >= 0.0 && rho <= 1.0)) throw ArgumentError("radial polynomial: rho outside [0, 1]");
  if (n <= kMaxRadialOrder) return eval_radial(radial_table().coeffs[n][m_abs], n, rho);
  return eval_radial(radial_coefficients(n, m_abs), n, rho);
}

double noll_normalization(int n, int m) {
  return m == 0 ? std::sqrt(n + 1.0) : std::sqrt(2.0 * (n + 1.0));
}

double zernike_value(int j, double rho, double theta) {
  const auto [n, m] = noll_to_nm(j);
  const int m_abs = std::abs(m);
  const double radial = noll_normalization(n, m) * radial_polynomial(n, m_abs, rho);
  if (m > 0) return radial * std::cos(m_abs * theta);
  if (m < 0) return radial * std::sin(m_abs * theta);
  return radial;
}

PupilGrid::PupilGrid(std::size_t n_samples, double aperture_fraction)
    : n_(n_samples), fraction_(aperture_fraction) {
  if (n_samples < 2 || n_samples % 2 != 0)
    throw ArgumentError("PupilGrid: n_samples must be even and >= 2, got " + std::to_string(n_samples));
  if (!(aperture_fraction > 0.0 && aperture_fraction <= 1.0))
    throw ArgumentError("PupilGrid: aperture_fraction must lie in (0, 1]");
}

double PupilGrid::x(std::size_t col) const {
  return (static_cast<double>(col) - static_cast<double>(n_ / 2)) / radius_pixels();
}

double PupilGrid::y(std::size_t row) const {
  return (static_cast<double>(row) - static_cast<double>(n_ / 2)) / radius_pixels();
}

WavefrontMap basis_map(int j, const PupilGrid& grid) {
  noll_to_nm(j);  // validates j
  const std::size_t n = grid.n();
  WavefrontMap map{grid, Image(n, n), Grid2<std::uint8_t>(n, n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double x = grid.x(c);
      const double y = grid.y(r);
      const double rho = std::hypot(x, y);
      if (rho > 1.0) continue;
      map.mask(r, c) = 1;
      map.values(r, c) = zernike_value(j, rho, std::atan2(y, x));
    }
  }
  return map;
}

ZernikeBasis::ZernikeBasis(const PupilGrid& grid) : grid_(grid), mask_(grid.n(), grid.n()) {
  const std::size_t n = grid.n();
  std::vector<double> rho;
  std::vector<double> theta;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double x = grid.x(c);
      const double y = grid.y(r);
      const double p = std::hypot(x, y);
      if (p > 1.0) continue;
      mask_(r, c) = 1;
      aperture_.push_back(r * n + c);
      rho.push_back(p);
      theta.push_back(std::atan2(y, x));
    }
  }
  if (aperture_.empty()) throw DegenerateApertureError("ZernikeBasis: aperture contains no pixels");
  const std::size_t a = aperture_.size();
  modes_.resize(static_cast<std::size_t>(kLastNoll) * a);
  for (int j = 1; j <= kLastNoll; ++j) {
    double* out = modes_.data() + static_cast<std::size_t>(j - 1) * a;
    for (std::size_t p = 0; p < a; ++p) out[p] = zernike_value(j, rho[p], theta[p]);
  }
}

std::span<const double> ZernikeBasis::mode(int j) const {
  if (j < 1 || j > kLastNoll) throw ArgumentError("Noll index out of range: " + std::to_string(j));
  const std::size_t a = aperture_.size();
  return {modes_.data() + static_cast<std::size_t>(j - 1) * a, a};
}

double max_orthonormality_error(const ZernikeBasis& basis) {
  const double area = static_cast<double>(basis.aperture_size());
  double worst = 0.0;
  for (int i = kFirstNoll; i <= kLastNoll; ++i) {
    const auto zi = basis.mode(i);
    for (int j = i; j <= kLastNoll; ++j) {
      const auto zj = basis.mode(j);
      double dot = 0.0;
      for (std::size_t p = 0; p < zi.size(); ++p) dot += zi[p] * zj[p];
      const double err = std::abs(dot / area - (i == j ? 1.0 : 0.0));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace aberr
