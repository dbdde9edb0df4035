#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aberr/image.hpp"
#include "aberr/zernike.hpp"

namespace aberr::nn {

struct ParamSlot {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named views into one flat parameter vector.
class ParamLayout {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape);
  std::size_t total() const noexcept { return total_; }
  const std::vector<ParamSlot>& slots() const noexcept { return slots_; }
  const ParamSlot& slot(const std::string& name) const;

 private:
  std::vector<ParamSlot> slots_;
  std::size_t total_ = 0;
};

struct ModelSpec {
  std::size_t input_size = 64;
  std::vector<std::size_t> channels = {8, 16, 32, 32};
  bool bias = true;
  bool map_heads = false;
  std::size_t map_size = 32;
};

struct Output {
  std::array<double, kNumCoeffs> coeffs{};  // normalized coefficient space
  std::vector<double> wave_map;             // map_size^2, empty without map heads
  std::vector<double> psf_map;
};

/// Cotangents of a scalar loss with respect to the outputs.
struct OutputGrad {
  std::array<double, kNumCoeffs> coeffs{};
  std::vector<double> wave_map;
  std::vector<double> psf_map;
};

/// Activations retained by forward() for the backward pass.
struct Cache {
  std::vector<std::vector<double>> padded_inputs;  // per conv layer, (C, H+2, W+2)
  std::vector<std::vector<double>> pre_activations;
  std::vector<double> pooled;
};

/// Strided 3x3 convolution encoder (stride 2, zero pad 1, leaky ReLU with slope 0.1) followed by global
/// average pooling, a linear coefficient head and optional linear map heads.
class Network {
 public:
  explicit Network(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t num_params() const noexcept { return layout_.total(); }

  /// He-normal conv and head weights, zero biases. Map heads are drawn last so the
  /// shared parameters do not depend on whether they exist.
  std::vector<double> init_params(std::uint64_t seed) const;

  /// Input is standardized per image (zero mean, unit RMS) before the first layer.
  Output forward(std::span<const double> params, const Image& image, Cache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grad`.
  void backward(std::span<const double> params, const Cache& cache, const OutputGrad& dout,
                std::span<double> grad) const;

 private:
  std::size_t feature_dim() const { return spec_.channels.back(); }

  ModelSpec spec_;
  ParamLayout layout_;
  std::vector<std::size_t> conv_w_, conv_b_;
  std::size_t coeff_w_ = 0, coeff_b_ = 0;
  std::size_t wave_w_ = 0, wave_b_ = 0, psf_w_ = 0, psf_b_ = 0;
};

}  // namespace aberr::nn
