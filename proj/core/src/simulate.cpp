#include "aberr/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "aberr/io.hpp"
#include "json.hpp"

namespace aberr {
namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json config_to_json(const SimConfig& c) {
  return {{"patch", c.patch},
          {"patches_per_lens", c.patches_per_lens},
          {"pupil_n", c.pupil_n},
          {"aperture_fraction", c.aperture_fraction},
          {"pad_factor", c.geometry.pad_factor},
          {"psf_crop", c.geometry.crop},
          {"boundary", to_string(c.boundary)},
          {"noise_sigma", c.noise.gaussian_sigma},
          {"noise_clip", c.noise.clip},
          {"seed", c.seed},
          {"procedural_images", c.procedural_images},
          {"procedural_size", c.procedural_size}};
}

SimConfig config_from_json(const json& j) {
  SimConfig c;
  c.patch = j.at("patch").get<std::size_t>();
  c.patches_per_lens = j.at("patches_per_lens").get<std::size_t>();
  c.pupil_n = j.at("pupil_n").get<std::size_t>();
  c.aperture_fraction = j.at("aperture_fraction").get<double>();
  c.geometry.pad_factor = j.at("pad_factor").get<int>();
  c.geometry.crop = j.at("psf_crop").get<std::size_t>();
  c.boundary = parse_boundary(j.at("boundary").get<std::string>());
  c.noise.gaussian_sigma = j.at("noise_sigma").get<double>();
  c.noise.clip = j.at("noise_clip").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.procedural_images = j.value("procedural_images", c.procedural_images);
  c.procedural_size = j.value("procedural_size", c.procedural_size);
  return c;
}

}  // namespace

double AmplitudeProfile::sigma_for_order(int n) const { return sigma0 / std::pow(decay, n - 1); }

std::string lens_id_for(std::size_t index, std::size_t count) {
  std::size_t width = 3;
  for (std::size_t c = 1000; c < count; c *= 10) ++width;
  std::string digits = std::to_string(index);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "L" + digits;
}

std::vector<LensRecord> sample_lens_population(std::size_t count, const AmplitudeProfile& profile,
                                               std::uint64_t seed) {
  if (count == 0) throw ArgumentError("lens count must be >= 1");
  if (!(profile.sigma0 >= 0.0) || !(profile.decay > 0.0)) throw ArgumentError("invalid amplitude profile");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LensRecord> lenses;
  lenses.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LensRecord lens{lens_id_for(i, count), {}};
    for (int j = kFirstNoll; j <= kLastNoll; ++j)
      lens.coeffs.at_noll(j) = profile.sigma_for_order(noll_to_nm(j).n) * normal(rng);
    lenses.push_back(std::move(lens));
  }
  return lenses;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view lens_id, std::uint64_t patch_index) {
  return splitmix64(splitmix64(seed ^ fnv1a(lens_id)) + patch_index);
}

const LensRecord& DatasetManifest::lens(std::string_view id) const {
  for (const auto& l : lenses)
    if (l.lens_id == id) return l;
  throw ArgumentError("unknown lens id: " + std::string(id));
}

fs::path DatasetManifest::wave_target_path(std::string_view lens_id) const {
  return root / "targets" / (std::string(lens_id) + ".wave.abr");
}

fs::path DatasetManifest::psf_target_path(std::string_view lens_id) const {
  return root / "targets" / (std::string(lens_id) + ".psf.abr");
}

ImageSource ImageSource::from_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("image directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") files.push_back(entry.path());
  }
  if (files.empty()) throw IoError("no .pgm images in " + dir.string());
  std::sort(files.begin(), files.end());
  ImageSource src;
  for (const auto& f : files) {
    src.images_.push_back(io::read_pgm(f));
    src.names_.push_back(f.filename().string());
  }
  src.description_ = "directory:" + dir.string();
  return src;
}

ImageSource ImageSource::procedural(std::size_t count, std::size_t size, std::uint64_t seed) {
  if (count == 0) throw ArgumentError("procedural source needs at least one image");
  ImageSource src;
  for (std::size_t i = 0; i < count; ++i) {
    src.images_.push_back(procedural_texture(size, splitmix64(seed + i)));
    src.names_.push_back("procedural_" + std::to_string(i));
  }
  src.description_ = "procedural:" + std::to_string(count) + "x" + std::to_string(size) +
                     ":seed=" + std::to_string(seed);
  return src;
}

DatasetManifest generate_dataset(const std::vector<LensRecord>& lenses, const ImageSource& source,
                                 const SimConfig& cfg, const fs::path& out) {
  if (lenses.empty()) throw ArgumentError("generate_dataset: empty lens set");
  if (source.size() == 0) throw ArgumentError("generate_dataset: no clean images");
  if (cfg.patch == 0) throw ArgumentError("generate_dataset: patch size must be >= 1");
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source.image(i).rows() < cfg.patch || source.image(i).cols() < cfg.patch)
      throw ArgumentError("patch " + std::to_string(cfg.patch) + " larger than image " + source.name(i));
  if (!(cfg.noise.gaussian_sigma >= 0.0)) throw ArgumentError("noise sigma must be >= 0");
  {
    std::set<std::string> ids;
    for (const auto& l : lenses)
      if (!ids.insert(l.lens_id).second) throw ArgumentError("duplicate lens id: " + l.lens_id);
  }

  const ZernikeBasis basis(cfg.grid());
  cfg.geometry.validate(basis.grid());
  if (cfg.geometry.crop_size(basis.grid()) > cfg.patch)
    throw ArgumentError("PSF crop larger than the patch size");

  DatasetManifest manifest{out, cfg, lenses, {}};
  fs::create_directories(out / "blurred");
  fs::create_directories(out / "clean");
  fs::create_directories(out / "targets");

  std::vector<io::LensRow> rows;
  for (const auto& l : lenses) rows.push_back({l.lens_id, l.coeffs});
  io::write_lens_csv(out / "lenses.csv", rows);

  std::string jsonl;
  for (const auto& lens : lenses) {
    const PsfMap psf = psf_from_coeffs(lens.coeffs, basis, cfg.geometry);
    io::write_grid(manifest.wave_target_path(lens.lens_id), wavefront_from_coeffs(lens.coeffs, basis).values);
    io::write_grid(manifest.psf_target_path(lens.lens_id), psf.values);

    for (std::size_t p = 0; p < cfg.patches_per_lens; ++p) {
      std::mt19937_64 rng(stream_seed(cfg.seed, lens.lens_id, p));
      const Image& src = source.image(rng() % source.size());
      const std::size_t row = rng() % (src.rows() - cfg.patch + 1);
      const std::size_t col = rng() % (src.cols() - cfg.patch + 1);
      const Image clean = crop(src, row, col, cfg.patch, cfg.patch);
      Image blurred = blur_image(clean, psf, cfg.boundary);
      if (cfg.noise.gaussian_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, cfg.noise.gaussian_sigma);
        for (double& v : blurred.data()) v += noise(rng);
      }
      if (cfg.noise.clip) clip_unit(blurred);

      char index[16];
      std::snprintf(index, sizeof index, "%04zu", p);
      SampleRecord rec{lens.lens_id + "_p" + index, lens.lens_id, "", "", cfg.noise.gaussian_sigma};
      rec.blurred_path = "blurred/" + rec.sample_id + ".pgm";
      rec.clean_path = "clean/" + rec.sample_id + ".pgm";
      io::write_pgm16(out / rec.blurred_path, blurred);
      io::write_pgm16(out / rec.clean_path, clean);
      jsonl += json{{"sample_id", rec.sample_id},
                    {"lens_id", rec.lens_id},
                    {"blurred_path", rec.blurred_path},
                    {"clean_path", rec.clean_path},
                    {"noise_sigma", rec.noise_sigma}}
                   .dump() +
               "\n";
      manifest.samples.push_back(std::move(rec));
    }
  }
  io::write_text(out / "manifest.jsonl", jsonl);
  json meta = {{"config", config_to_json(cfg)},
               {"source", source.description()},
               {"lens_count", lenses.size()},
               {"sample_count", manifest.samples.size()}};
  io::write_text(out / "dataset.json", meta.dump(2) + "\n");
  return manifest;
}

DatasetManifest load_dataset(const fs::path& root) {
  DatasetManifest manifest;
  manifest.root = root;
  const json meta = json::parse(io::read_text(root / "dataset.json"));
  manifest.config = config_from_json(meta.at("config"));
  for (auto& row : io::read_lens_csv(root / "lenses.csv")) manifest.lenses.push_back({row.lens_id, row.coeffs});
  std::istringstream in(io::read_text(root / "manifest.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    manifest.samples.push_back({j.at("sample_id").get<std::string>(), j.at("lens_id").get<std::string>(),
                                j.at("blurred_path").get<std::string>(), j.at("clean_path").get<std::string>(),
                                j.at("noise_sigma").get<double>()});
  }
  return manifest;
}

void check_manifest_integrity(const DatasetManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& l : manifest.lenses)
    if (!ids.insert(l.lens_id).second) throw IoError("duplicate lens id in lens set: " + l.lens_id);
  std::set<std::string> sample_ids;
  for (const auto& s : manifest.samples) {
    if (!sample_ids.insert(s.sample_id).second) throw IoError("duplicate sample id: " + s.sample_id);
    if (!ids.contains(s.lens_id)) throw IoError("sample " + s.sample_id + " references unknown lens " + s.lens_id);
    for (const auto& rel : {s.blurred_path, s.clean_path})
      if (!fs::exists(manifest.root / rel)) throw IoError("missing file: " + (manifest.root / rel).string());
  }
  for (const auto& l : manifest.lenses)
    for (const auto& p : {manifest.wave_target_path(l.lens_id), manifest.psf_target_path(l.lens_id)})
      if (!fs::exists(p)) throw IoError("missing target: " + p.string());
  const auto blurred = std::distance(fs::directory_iterator(manifest.root / "blurred"), fs::directory_iterator{});
  if (static_cast<std::size_t>(blurred) != manifest.samples.size())
    throw IoError("manifest lists " + std::to_string(manifest.samples.size()) + " samples but blurred/ holds " +
                  std::to_string(blurred) + " files");
}

Sample load_sample(const DatasetManifest& manifest, const SampleRecord& rec, bool with_clean) {
  Sample s{rec.sample_id, rec.lens_id, io::read_pgm(manifest.root / rec.blurred_path), {}, rec.noise_sigma};
  if (with_clean && !rec.clean_path.empty()) s.clean = io::read_pgm(manifest.root / rec.clean_path);
  return s;
}

Folds split_lens_folds(const std::vector<std::string>& lens_ids, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > lens_ids.size())
    throw ArgumentError("fold count k=" + std::to_string(k) + " must satisfy 2 <= k <= " +
                        std::to_string(lens_ids.size()));
  std::vector<std::string> ids = lens_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ArgumentError("duplicate lens ids");
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng() % i]);
  Folds folds(k);
  for (std::size_t i = 0; i < ids.size(); ++i) folds[i % k].push_back(ids[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::string folds_to_json(const Folds& folds) {
  json j = json::object();
  for (std::size_t i = 0; i < folds.size(); ++i) j[std::to_string(i)] = folds[i];
  return j.dump(2) + "\n";
}

Folds folds_from_json(const std::string& text) {
  const json j = json::parse(text);
  Folds folds(j.size());
  for (const auto& [key, ids] : j.items()) {
    const std::size_t idx = std::stoul(key);
    if (idx >= folds.size()) throw IoError("fold index out of range in folds JSON: " + key);
    folds[idx] = ids.get<std::vector<std::string>>();
  }
  return folds;
}

}  // namespace aberr
