#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aberr/network.hpp"
#include "aberr/optics.hpp"
#include "aberr/simulate.hpp"
#include "aberr/zernike.hpp"

namespace aberr {

/// Weights of the combined objective
///   total = lambda_z * coeff + lambda_p_wave * wave + lambda_p_psf * psf
///         + lambda_m * (map_wave + map_psf)
struct LossWeights {
  double lambda_z = 1.0;
  double lambda_p_wave = 1.0;
  double lambda_p_psf = 1.0;
  double lambda_m = 0.5;

  void validate() const;
  bool physics() const { return lambda_p_wave > 0.0 || lambda_p_psf > 0.0; }
  bool maps() const { return lambda_m > 0.0; }

  /// Ablation tags: z, zpw, zpp, zp, zpm.
  static LossWeights from_tag(const std::string& tag);
};

/// Per-coefficient z-scoring fitted on training lenses only.
struct CoeffNormalizer {
  std::array<double, kNumCoeffs> mean{};
  std::array<double, kNumCoeffs> std{};

  static CoeffNormalizer fit(const std::vector<ZernikeVector>& coeffs);
  std::array<double, kNumCoeffs> normalize(const ZernikeVector& a) const;
  ZernikeVector denormalize(const std::array<double, kNumCoeffs>& c) const;
};

struct LossBreakdown {
  double coeff = 0.0;
  double wave = 0.0;
  double psf = 0.0;
  double map_wave = 0.0;
  double map_psf = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double s) const;
};

struct Metrics {
  double mae = 0.0;  // waves
  double mse = 0.0;  // waves^2
  std::array<double, kNumCoeffs> per_coefficient_mae{};
  std::size_t samples = 0;
};

/// Ground truth for one lens on the physics grid. Map targets are block-averaged
/// to map_size; the PSF map is scaled by map_size^2 so its mean is one.
struct LensTargets {
  ZernikeVector coeffs;
  std::vector<double> wave_aperture;
  PsfMap psf;
  std::vector<double> wave_map;
  std::vector<double> psf_map;
};

/// Differentiable optics configuration used for the physics and map terms.
class PhysicsContext {
 public:
  PhysicsContext(const PupilGrid& grid, const PsfGeometry& geometry, std::size_t map_size);

  const ZernikeBasis& basis() const noexcept { return basis_; }
  const PsfGeometry& geometry() const noexcept { return geometry_; }
  std::size_t map_size() const noexcept { return map_size_; }

  LensTargets targets_for(const ZernikeVector& coeffs) const;

 private:
  ZernikeBasis basis_;
  PsfGeometry geometry_;
  std::size_t map_size_;
};

/// Evaluates every term whose weight is positive (or every available term when
/// `all_terms`), and fills `grad` with d(total)/d(outputs) when given.
/// Throws ConfigError when an enabled term lacks its target or model output.
LossBreakdown total_loss(const nn::Output& pred, const LensTargets& target, const LossWeights& weights,
                         const CoeffNormalizer& normalizer, const PhysicsContext& physics,
                         bool all_terms = true, nn::OutputGrad* grad = nullptr);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 0.02;
  double momentum = 0.9;
  bool cosine_decay = true;
  double grad_clip = 5.0;  // global norm, <= 0 disables
  std::uint64_t seed = 0;
  std::vector<std::size_t> channels = {8, 16, 32, 32};
  bool bias = true;
  std::size_t map_size = 32;
  std::size_t physics_pupil_n = 64;
  double physics_aperture_fraction = 0.5;
  int physics_pad = 2;
  std::size_t physics_crop = 64;

  /// Plain-text "key = value" lines; '#' starts a comment. Unknown keys are errors.
  static TrainConfig parse(const std::string& text);
  std::string to_text() const;
};

/// Blurred images and ground-truth coefficients held in memory.
struct TrainingData {
  std::vector<Sample> samples;
  std::map<std::string, ZernikeVector> lens_coeffs;

  static TrainingData load(const DatasetManifest& manifest);
};

struct TrainedModel {
  nn::ModelSpec spec;
  std::vector<double> params;
  CoeffNormalizer normalizer;
  LossWeights weights;
  TrainConfig config;
  std::vector<std::string> train_lens_ids;
  int fold_index = -1;

  nn::Network network() const { return nn::Network(spec); }
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown train;
  LossBreakdown heldout;
  double heldout_mae = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  TrainedModel model;
  std::vector<EpochRecord> history;
};

std::string epoch_to_json(const EpochRecord& rec);

/// Mini-batch SGD with momentum on the combined loss; gradients of the physics terms
/// flow through the differentiable optics layer into the coefficient head.
/// Training lenses are every fold except `fold_index`, which is held out.
TrainResult train(const TrainingData& data, const Folds& folds, std::size_t fold_index,
                  const LossWeights& weights, const TrainConfig& cfg);

/// Mean loss over a sample set; used for held-out reporting and gradient checks.
LossBreakdown dataset_loss(const TrainedModel& model, const std::vector<const Sample*>& samples,
                           const TrainingData& data, const PhysicsContext& physics, bool all_terms);

/// Gradient of the mean batch loss with respect to every parameter.
std::vector<double> batch_gradient(const TrainedModel& model, const std::vector<const Sample*>& batch,
                                   const TrainingData& data, const PhysicsContext& physics,
                                   LossBreakdown* loss = nullptr);

ZernikeVector predict(const TrainedModel& model, const nn::Network& net, const Image& image);

/// MAE / MSE in waves over the samples of `test_lens_ids`. Throws ProtocolError when a
/// test lens was used for training unless `allow_leak`; ArgumentError for an empty set.
Metrics evaluate(const TrainedModel& model, const TrainingData& data,
                 const std::vector<std::string>& test_lens_ids, bool allow_leak = false);

/// Metrics of arbitrary predictions against ground truth (same order).
Metrics coefficient_metrics(const std::vector<ZernikeVector>& pred, const std::vector<ZernikeVector>& truth);

/// model.bin (little-endian f64 parameters) + model.json (shape manifest and metadata).
void save_checkpoint(const std::filesystem::path& dir, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace aberr
