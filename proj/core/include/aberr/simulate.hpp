#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aberr/image.hpp"
#include "aberr/optics.hpp"
#include "aberr/zernike.hpp"

namespace aberr {

namespace fs = std::filesystem;

/// Per-radial-order coefficient scale sigma_n = sigma0 / decay^(n-1).
struct AmplitudeProfile {
  double sigma0 = 0.08;  // waves
  double decay = 2.0;

  double sigma_for_order(int n) const;
};

struct LensRecord {
  std::string lens_id;
  ZernikeVector coeffs;
};

/// IDs "L000", "L001", ... zero-padded to at least three digits.
std::string lens_id_for(std::size_t index, std::size_t count);

/// Zero-mean Gaussian coefficients with the profile's per-order scale.
/// Deterministic in (count, profile, seed).
std::vector<LensRecord> sample_lens_population(std::size_t count, const AmplitudeProfile& profile,
                                               std::uint64_t seed);

struct NoiseSpec {
  double gaussian_sigma = 0.005;
  bool clip = true;
};

struct SimConfig {
  std::size_t patch = 64;
  std::size_t patches_per_lens = 50;
  std::size_t pupil_n = 128;
  double aperture_fraction = 0.5;
  PsfGeometry geometry{2, 64};
  Boundary boundary = Boundary::replicate;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  // Procedural source pool, used when no image directory is given.
  std::size_t procedural_images = 16;
  std::size_t procedural_size = 256;

  PupilGrid grid() const { return PupilGrid(pupil_n, aperture_fraction); }
};

struct SampleRecord {
  std::string sample_id;
  std::string lens_id;
  std::string blurred_path;  // relative to the dataset root
  std::string clean_path;
  double noise_sigma = 0.0;
};

/// In-memory training record.
struct Sample {
  std::string sample_id;
  std::string lens_id;
  Image blurred;
  Image clean;  // empty when no clean reference is available
  double noise_sigma = 0.0;
};

struct DatasetManifest {
  fs::path root;
  SimConfig config;
  std::vector<LensRecord> lenses;
  std::vector<SampleRecord> samples;

  const LensRecord& lens(std::string_view id) const;
  fs::path wave_target_path(std::string_view lens_id) const;
  fs::path psf_target_path(std::string_view lens_id) const;
};

/// Clean-image pool: PGM files from a directory, or seeded procedural textures.
class ImageSource {
 public:
  static ImageSource from_directory(const fs::path& dir);
  static ImageSource procedural(std::size_t count, std::size_t size, std::uint64_t seed);

  std::size_t size() const noexcept { return images_.size(); }
  const Image& image(std::size_t i) const { return images_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::string description() const { return description_; }

 private:
  std::vector<Image> images_;
  std::vector<std::string> names_;
  std::string description_;
};

/// Independent RNG seed for (seed, lens, patch); identical for serial and parallel runs.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view lens_id, std::uint64_t patch_index);

/// Writes under `out`: lenses.csv, manifest.jsonl, dataset.json, blurred/*.pgm,
/// clean/*.pgm and per-lens cached targets targets/<id>.wave.abr, targets/<id>.psf.abr.
DatasetManifest generate_dataset(const std::vector<LensRecord>& lenses, const ImageSource& source,
                                 const SimConfig& cfg, const fs::path& out);

DatasetManifest load_dataset(const fs::path& root);

/// Every sample references an existing lens and files on disk; lens IDs unique.
void check_manifest_integrity(const DatasetManifest& manifest);

Sample load_sample(const DatasetManifest& manifest, const SampleRecord& rec, bool with_clean = true);

using Folds = std::vector<std::vector<std::string>>;

/// Seeded shuffle then round-robin: k disjoint folds whose sizes differ by at most one.
Folds split_lens_folds(const std::vector<std::string>& lens_ids, std::size_t k, std::uint64_t seed);

/// {"0": [ids...], "1": [...]}
std::string folds_to_json(const Folds& folds);
Folds folds_from_json(const std::string& text);

/// Deterministic [0, 1] texture of filtered noise plus cell outlines and filaments.
Image procedural_texture(std::size_t size, std::uint64_t seed);

}  // namespace aberr
