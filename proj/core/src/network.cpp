#include "aberr/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace aberr::nn {
namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// Leaky slope. With plain ReLU, non-negative inputs and zero-mean weights make the
// pre-activation sign nearly constant across positions, so whole channels start dead.
constexpr double kLeak = 0.1;

double act(double z) { return z > 0.0 ? z : kLeak * z; }
double act_slope(double z) { return z > 0.0 ? 1.0 : kLeak; }

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (auto s : shape) p *= s;
  return p;
}

// out(C_out, Ho, Wo) = conv(in_pad(C_in, H+2, W+2)), stride 2.
void conv_forward(const double* in_pad, std::size_t c_in, std::size_t h, std::size_t w, const double* weight,
                  const double* bias, std::size_t c_out, double* out) {
  const std::size_t ho = h / 2;
  const std::size_t wo = w / 2;
  const std::size_t pw = w + 2;
  const std::size_t plane = (h + 2) * pw;
  for (std::size_t o = 0; o < c_out; ++o) {
    double* out_o = out + o * ho * wo;
    std::fill(out_o, out_o + ho * wo, bias != nullptr ? bias[o] : 0.0);
    for (std::size_t i = 0; i < c_in; ++i) {
      const double* in_i = in_pad + i * plane;
      const double* w_oi = weight + (o * c_in + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wv = w_oi[ky * 3 + kx];
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const double* src = in_i + (2 * oy + ky) * pw + kx;
            double* dst = out_o + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) dst[ox] += wv * src[2 * ox];
          }
        }
      }
    }
  }
}

void conv_backward(const double* in_pad, std::size_t c_in, std::size_t h, std::size_t w, const double* weight,
                   std::size_t c_out, const double* dout, double* dweight, double* dbias, double* din_pad) {
  const std::size_t ho = h / 2;
  const std::size_t wo = w / 2;
  const std::size_t pw = w + 2;
  const std::size_t plane = (h + 2) * pw;
  for (std::size_t o = 0; o < c_out; ++o) {
    const double* g_o = dout + o * ho * wo;
    if (dbias != nullptr) {
      double s = 0.0;
      for (std::size_t p = 0; p < ho * wo; ++p) s += g_o[p];
      dbias[o] += s;
    }
    for (std::size_t i = 0; i < c_in; ++i) {
      const double* in_i = in_pad + i * plane;
      double* din_i = din_pad != nullptr ? din_pad + i * plane : nullptr;
      const double* w_oi = weight + (o * c_in + i) * 9;
      double* dw_oi = dweight + (o * c_in + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wv = w_oi[ky * 3 + kx];
          double acc = 0.0;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::size_t base = (2 * oy + ky) * pw + kx;
            const double* src = in_i + base;
            const double* g = g_o + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) acc += g[ox] * src[2 * ox];
            if (din_i != nullptr) {
              double* d = din_i + base;
              for (std::size_t ox = 0; ox < wo; ++ox) d[2 * ox] += wv * g[ox];
            }
          }
          dw_oi[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

std::size_t ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
  const std::size_t size = product(shape);
  slots_.push_back({std::move(name), std::move(shape), total_, size});
  total_ += size;
  return slots_.back().offset;
}

const ParamSlot& ParamLayout::slot(const std::string& name) const {
  for (const auto& s : slots_)
    if (s.name == name) return s;
  throw ArgumentError("no parameter slot named " + name);
}

Network::Network(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.channels.empty()) throw ArgumentError("network needs at least one conv layer");
  std::size_t size = spec_.input_size;
  for (std::size_t l = 0; l < spec_.channels.size(); ++l) {
    if (size < 2 || size % 2 != 0)
      throw ArgumentError("input size " + std::to_string(spec_.input_size) + " cannot be halved " +
                          std::to_string(spec_.channels.size()) + " times");
    size /= 2;
  }
  if (spec_.map_heads && spec_.map_size == 0) throw ArgumentError("map_size must be >= 1");

  std::size_t c_in = 1;
  for (std::size_t l = 0; l < spec_.channels.size(); ++l) {
    const std::size_t c_out = spec_.channels[l];
    const std::string prefix = "conv" + std::to_string(l + 1);
    conv_w_.push_back(layout_.add(prefix + ".weight", {c_out, c_in, 3, 3}));
    conv_b_.push_back(spec_.bias ? layout_.add(prefix + ".bias", {c_out}) : kNone);
    c_in = c_out;
  }
  coeff_w_ = layout_.add("head.coeff.weight", {kNumCoeffs, c_in});
  coeff_b_ = spec_.bias ? layout_.add("head.coeff.bias", {kNumCoeffs}) : kNone;
  if (spec_.map_heads) {
    const std::size_t m2 = spec_.map_size * spec_.map_size;
    wave_w_ = layout_.add("head.wave_map.weight", {m2, c_in});
    wave_b_ = spec_.bias ? layout_.add("head.wave_map.bias", {m2}) : kNone;
    psf_w_ = layout_.add("head.psf_map.weight", {m2, c_in});
    psf_b_ = spec_.bias ? layout_.add("head.psf_map.bias", {m2}) : kNone;
  }
}

std::vector<double> Network::init_params(std::uint64_t seed) const {
  std::vector<double> params(layout_.total(), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& slot : layout_.slots()) {
    if (slot.shape.size() < 2) continue;  // biases stay zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < slot.shape.size(); ++d) fan_in *= slot.shape[d];
    const bool head = slot.name.rfind("head.", 0) == 0;
    const double scale = head ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < slot.size; ++i) params[slot.offset + i] = scale * normal(rng);
  }
  return params;
}

Output Network::forward(std::span<const double> params, const Image& image, Cache* cache) const {
  if (params.size() != layout_.total())
    throw ArgumentError("parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                        std::to_string(layout_.total()));
  if (image.rows() != spec_.input_size || image.cols() != spec_.input_size)
    throw ArgumentError("image is " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                        ", model expects " + std::to_string(spec_.input_size) + "x" +
                        std::to_string(spec_.input_size));

  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  const std::size_t layers = spec_.channels.size();
  c.padded_inputs.resize(layers);
  c.pre_activations.resize(layers);

  // Standardized input, zero padded.
  std::size_t size = spec_.input_size;
  {
    double mu = 0.0;
    for (double v : image.data()) mu += v;
    mu /= static_cast<double>(image.size());
    double var = 0.0;
    for (double v : image.data()) var += (v - mu) * (v - mu);
    const double rms = std::sqrt(var / static_cast<double>(image.size()));
    const double inv = rms > 1e-12 ? 1.0 / rms : 0.0;
    auto& pad = c.padded_inputs[0];
    pad.assign((size + 2) * (size + 2), 0.0);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t col = 0; col < size; ++col) pad[(r + 1) * (size + 2) + col + 1] = (image(r, col) - mu) * inv;
  }

  std::size_t c_in = 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t c_out = spec_.channels[l];
    const std::size_t half = size / 2;
    auto& z = c.pre_activations[l];
    z.assign(c_out * half * half, 0.0);
    conv_forward(c.padded_inputs[l].data(), c_in, size, size, params.data() + conv_w_[l],
                 conv_b_[l] != kNone ? params.data() + conv_b_[l] : nullptr, c_out, z.data());
    if (l + 1 < layers) {
      auto& next = c.padded_inputs[l + 1];
      next.assign(c_out * (half + 2) * (half + 2), 0.0);
      for (std::size_t ch = 0; ch < c_out; ++ch)
        for (std::size_t r = 0; r < half; ++r)
          for (std::size_t col = 0; col < half; ++col)
            next[ch * (half + 2) * (half + 2) + (r + 1) * (half + 2) + col + 1] =
                act(z[ch * half * half + r * half + col]);
    }
    c_in = c_out;
    size = half;
  }

  // Activation + global average pool of the last layer.
  const std::size_t dim = feature_dim();
  const std::size_t area = size * size;
  c.pooled.assign(dim, 0.0);
  const auto& z_last = c.pre_activations.back();
  for (std::size_t ch = 0; ch < dim; ++ch) {
    double s = 0.0;
    for (std::size_t p = 0; p < area; ++p) s += act(z_last[ch * area + p]);
    c.pooled[ch] = s / static_cast<double>(area);
  }

  auto linear = [&](std::size_t w_off, std::size_t b_off, std::size_t outputs, double* out) {
    for (std::size_t o = 0; o < outputs; ++o) {
      const double* w = params.data() + w_off + o * dim;
      double s = b_off != kNone ? params[b_off + o] : 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += w[k] * c.pooled[k];
      out[o] = s;
    }
  };

  Output out;
  linear(coeff_w_, coeff_b_, kNumCoeffs, out.coeffs.data());
  if (spec_.map_heads) {
    const std::size_t m2 = spec_.map_size * spec_.map_size;
    out.wave_map.resize(m2);
    out.psf_map.resize(m2);
    linear(wave_w_, wave_b_, m2, out.wave_map.data());
    linear(psf_w_, psf_b_, m2, out.psf_map.data());
  }
  return out;
}

void Network::backward(std::span<const double> params, const Cache& cache, const OutputGrad& dout,
                       std::span<double> grad) const {
  if (grad.size() != layout_.total()) throw ArgumentError("gradient buffer has the wrong size");
  const std::size_t dim = feature_dim();
  std::vector<double> dpooled(dim, 0.0);

  auto linear_back = [&](std::size_t w_off, std::size_t b_off, std::size_t outputs, const double* g) {
    for (std::size_t o = 0; o < outputs; ++o) {
      if (g[o] == 0.0) continue;
      const double* w = params.data() + w_off + o * dim;
      double* dw = grad.data() + w_off + o * dim;
      for (std::size_t k = 0; k < dim; ++k) {
        dw[k] += g[o] * cache.pooled[k];
        dpooled[k] += g[o] * w[k];
      }
      if (b_off != kNone) grad[b_off + o] += g[o];
    }
  };

  linear_back(coeff_w_, coeff_b_, kNumCoeffs, dout.coeffs.data());
  if (spec_.map_heads) {
    const std::size_t m2 = spec_.map_size * spec_.map_size;
    if (dout.wave_map.size() == m2) linear_back(wave_w_, wave_b_, m2, dout.wave_map.data());
    if (dout.psf_map.size() == m2) linear_back(psf_w_, psf_b_, m2, dout.psf_map.data());
  }

  const std::size_t layers = spec_.channels.size();
  std::size_t size = spec_.input_size >> layers;
  std::vector<double> dz(cache.pre_activations.back().size());
  {
    const auto& z = cache.pre_activations.back();
    const std::size_t area = size * size;
    for (std::size_t ch = 0; ch < dim; ++ch)
      for (std::size_t p = 0; p < area; ++p)
        dz[ch * area + p] = act_slope(z[ch * area + p]) * dpooled[ch] / static_cast<double>(area);
  }

  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t c_out = spec_.channels[l];
    const std::size_t c_in = l == 0 ? 1 : spec_.channels[l - 1];
    const std::size_t in_size = size * 2;
    const std::size_t pw = in_size + 2;
    std::vector<double> din_pad;
    if (l > 0) din_pad.assign(c_in * pw * pw, 0.0);
    conv_backward(cache.padded_inputs[l].data(), c_in, in_size, in_size, params.data() + conv_w_[l], c_out,
                  dz.data(), grad.data() + conv_w_[l], conv_b_[l] != kNone ? grad.data() + conv_b_[l] : nullptr,
                  l > 0 ? din_pad.data() : nullptr);
    if (l == 0) break;
    // Strip padding and apply the activation derivative of the previous layer.
    const auto& z_prev = cache.pre_activations[l - 1];
    dz.assign(c_in * in_size * in_size, 0.0);
    for (std::size_t ch = 0; ch < c_in; ++ch)
      for (std::size_t r = 0; r < in_size; ++r)
        for (std::size_t col = 0; col < in_size; ++col) {
          const std::size_t i = ch * in_size * in_size + r * in_size + col;
          dz[i] = act_slope(z_prev[i]) * din_pad[ch * pw * pw + (r + 1) * pw + col + 1];
        }
    size = in_size;
  }
}

}  // namespace aberr::nn
