#include "aberr/regressor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "aberr/grad.hpp"
#include "aberr/io.hpp"
#include "json.hpp"

namespace aberr {

using nlohmann::json;

void LossWeights::validate() const {
  for (double w : {lambda_z, lambda_p_wave, lambda_p_psf, lambda_m})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  if (lambda_z + lambda_p_wave + lambda_p_psf + lambda_m <= 0.0)
    throw ConfigError("at least one loss weight must be > 0");
}

LossWeights LossWeights::from_tag(const std::string& tag) {
  if (tag == "z") return {1.0, 0.0, 0.0, 0.0};
  if (tag == "zpw") return {1.0, 1.0, 0.0, 0.0};
  if (tag == "zpp") return {1.0, 0.0, 1.0, 0.0};
  if (tag == "zp") return {1.0, 1.0, 1.0, 0.0};
  if (tag == "zpm") return {1.0, 1.0, 1.0, 0.5};
  throw ArgumentError("unknown loss tag '" + tag + "' (expected z, zpw, zpp, zp or zpm)");
}

CoeffNormalizer CoeffNormalizer::fit(const std::vector<ZernikeVector>& coeffs) {
  if (coeffs.empty()) throw ArgumentError("normalizer needs at least one coefficient vector");
  CoeffNormalizer n;
  const double count = static_cast<double>(coeffs.size());
  for (std::size_t i = 0; i < kNumCoeffs; ++i) {
    double s = 0.0;
    for (const auto& a : coeffs) s += a[i];
    n.mean[i] = s / count;
    double v = 0.0;
    for (const auto& a : coeffs) v += (a[i] - n.mean[i]) * (a[i] - n.mean[i]);
    const double sd = std::sqrt(v / count);
    n.std[i] = sd > 1e-12 ? sd : 1.0;  // a constant coefficient keeps unit scale
  }
  return n;
}

std::array<double, kNumCoeffs> CoeffNormalizer::normalize(const ZernikeVector& a) const {
  std::array<double, kNumCoeffs> c{};
  for (std::size_t i = 0; i < kNumCoeffs; ++i) c[i] = (a[i] - mean[i]) / std[i];
  return c;
}

ZernikeVector CoeffNormalizer::denormalize(const std::array<double, kNumCoeffs>& c) const {
  ZernikeVector a;
  for (std::size_t i = 0; i < kNumCoeffs; ++i) a[i] = mean[i] + std[i] * c[i];
  return a;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  coeff += o.coeff;
  wave += o.wave;
  psf += o.psf;
  map_wave += o.map_wave;
  map_psf += o.map_psf;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double s) const {
  return {coeff * s, wave * s, psf * s, map_wave * s, map_psf * s, total * s};
}

namespace {

std::vector<double> block_reduce(const Image& img, std::size_t out, bool sum) {
  const std::size_t n = img.rows();
  std::vector<double> map(out * out, 0.0);
  if (n % out == 0) {
    const std::size_t f = n / out;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) map[(r / f) * out + c / f] += img(r, c);
    if (!sum)
      for (double& v : map) v /= static_cast<double>(f * f);
  } else {
    // Nearest sampling; sums are preserved only approximately.
    const double scale = static_cast<double>(n) / static_cast<double>(out);
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < out; ++c)
        map[r * out + c] = img(static_cast<std::size_t>((r + 0.5) * scale), static_cast<std::size_t>((c + 0.5) * scale)) *
                           (sum ? scale * scale : 1.0);
  }
  return map;
}

}  // namespace

PhysicsContext::PhysicsContext(const PupilGrid& grid, const PsfGeometry& geometry, std::size_t map_size)
    : basis_(grid), geometry_(geometry), map_size_(map_size) {
  geometry_.validate(grid);
  if (map_size_ == 0) throw ArgumentError("map_size must be >= 1");
}

LensTargets PhysicsContext::targets_for(const ZernikeVector& coeffs) const {
  LensTargets t;
  t.coeffs = coeffs;
  t.wave_aperture = aperture_wavefront(coeffs, basis_);
  t.psf = psf_from_coeffs(coeffs, basis_, geometry_);
  t.wave_map = block_reduce(wavefront_from_coeffs(coeffs, basis_).values, map_size_, false);
  t.psf_map = block_reduce(t.psf.values, map_size_, true);
  const double m2 = static_cast<double>(map_size_ * map_size_);
  for (double& v : t.psf_map) v *= m2;
  return t;
}

LossBreakdown total_loss(const nn::Output& pred, const LensTargets& target, const LossWeights& weights,
                         const CoeffNormalizer& normalizer, const PhysicsContext& physics, bool all_terms,
                         nn::OutputGrad* grad) {
  LossBreakdown loss;
  if (grad != nullptr) {
    grad->coeffs.fill(0.0);
    grad->wave_map.assign(pred.wave_map.size(), 0.0);
    grad->psf_map.assign(pred.psf_map.size(), 0.0);
  }

  const auto c_true = normalizer.normalize(target.coeffs);
  constexpr double inv_k = 1.0 / static_cast<double>(kNumCoeffs);
  for (std::size_t i = 0; i < kNumCoeffs; ++i) {
    const double d = pred.coeffs[i] - c_true[i];
    loss.coeff += d * d * inv_k;
    if (grad != nullptr) grad->coeffs[i] += weights.lambda_z * 2.0 * d * inv_k;
  }

  const bool want_wave = weights.lambda_p_wave > 0.0 || all_terms;
  const bool want_psf = weights.lambda_p_psf > 0.0 || all_terms;
  if (want_wave || want_psf) {
    const ZernikeVector a = normalizer.denormalize(pred.coeffs);
    if (want_wave) {
      if (target.wave_aperture.empty()) throw ConfigError("wave loss enabled but no wavefront target");
      const auto w = wave_loss_and_grad(a, target.wave_aperture, physics.basis());
      loss.wave = w.loss;
      if (grad != nullptr && weights.lambda_p_wave > 0.0)
        for (std::size_t i = 0; i < kNumCoeffs; ++i)
          grad->coeffs[i] += weights.lambda_p_wave * w.grad[i] * normalizer.std[i];
    }
    if (want_psf) {
      if (target.psf.values.empty()) throw ConfigError("PSF loss enabled but no PSF target");
      if (grad != nullptr && weights.lambda_p_psf > 0.0) {
        const auto p = psf_loss_and_grad(a, target.psf, physics.basis(), physics.geometry());
        loss.psf = p.loss;
        for (std::size_t i = 0; i < kNumCoeffs; ++i)
          grad->coeffs[i] += weights.lambda_p_psf * p.grad[i] * normalizer.std[i];
      } else {
        loss.psf = psf_loss(a, target.psf, physics.basis(), physics.geometry());
      }
    }
  }

  const bool have_maps = !pred.wave_map.empty();
  if (weights.lambda_m > 0.0 && !have_maps) throw ConfigError("map loss enabled but the model has no map heads");
  if (have_maps && (weights.lambda_m > 0.0 || all_terms)) {
    if (target.wave_map.size() != pred.wave_map.size() || target.psf_map.size() != pred.psf_map.size())
      throw ConfigError("map targets missing or of the wrong size");
    const double inv_m = 1.0 / static_cast<double>(pred.wave_map.size());
    for (std::size_t p = 0; p < pred.wave_map.size(); ++p) {
      const double dw = pred.wave_map[p] - target.wave_map[p];
      const double dp = pred.psf_map[p] - target.psf_map[p];
      loss.map_wave += dw * dw * inv_m;
      loss.map_psf += dp * dp * inv_m;
      if (grad != nullptr) {
        grad->wave_map[p] = weights.lambda_m * 2.0 * dw * inv_m;
        grad->psf_map[p] = weights.lambda_m * 2.0 * dp * inv_m;
      }
    }
  }

  loss.total = weights.lambda_z * loss.coeff + weights.lambda_p_wave * loss.wave + weights.lambda_p_psf * loss.psf +
               weights.lambda_m * (loss.map_wave + loss.map_psf);
  return loss;
}

namespace {

const std::map<std::string, std::string> kConfigKeys = {
    {"epochs", ""}, {"batch_size", ""}, {"learning_rate", ""}, {"momentum", ""}, {"cosine_decay", ""},
    {"grad_clip", ""}, {"seed", ""}, {"channels", ""}, {"bias", ""}, {"map_size", ""},
    {"physics_pupil_n", ""}, {"physics_aperture_fraction", ""}, {"physics_pad", ""}, {"physics_crop", ""}};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

}  // namespace

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!kConfigKeys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    try {
      if (key == "epochs") cfg.epochs = std::stoul(value);
      else if (key == "batch_size") cfg.batch_size = std::stoul(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "momentum") cfg.momentum = std::stod(value);
      else if (key == "cosine_decay") cfg.cosine_decay = parse_bool(value);
      else if (key == "grad_clip") cfg.grad_clip = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "bias") cfg.bias = parse_bool(value);
      else if (key == "map_size") cfg.map_size = std::stoul(value);
      else if (key == "physics_pupil_n") cfg.physics_pupil_n = std::stoul(value);
      else if (key == "physics_aperture_fraction") cfg.physics_aperture_fraction = std::stod(value);
      else if (key == "physics_pad") cfg.physics_pad = std::stoi(value);
      else if (key == "physics_crop") cfg.physics_crop = std::stoul(value);
      else if (key == "channels") {
        cfg.channels.clear();
        std::istringstream cs(value);
        std::string item;
        while (std::getline(cs, item, ',')) cfg.channels.push_back(std::stoul(trim(item)));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("config key '" + key + "': bad value '" + value + "'");
    }
  }
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ConfigError("epochs and batch_size must be >= 1");
  return cfg;
}

std::string TrainConfig::to_text() const {
  std::string ch;
  for (std::size_t i = 0; i < channels.size(); ++i) ch += (i ? "," : "") + std::to_string(channels[i]);
  std::ostringstream out;
  out << "epochs = " << epochs << "\n"
      << "batch_size = " << batch_size << "\n"
      << "learning_rate = " << io::format_double(learning_rate) << "\n"
      << "momentum = " << io::format_double(momentum) << "\n"
      << "cosine_decay = " << (cosine_decay ? "true" : "false") << "\n"
      << "grad_clip = " << io::format_double(grad_clip) << "\n"
      << "seed = " << seed << "\n"
      << "channels = " << ch << "\n"
      << "bias = " << (bias ? "true" : "false") << "\n"
      << "map_size = " << map_size << "\n"
      << "physics_pupil_n = " << physics_pupil_n << "\n"
      << "physics_aperture_fraction = " << io::format_double(physics_aperture_fraction) << "\n"
      << "physics_pad = " << physics_pad << "\n"
      << "physics_crop = " << physics_crop << "\n";
  return out.str();
}

TrainingData TrainingData::load(const DatasetManifest& manifest) {
  TrainingData data;
  for (const auto& l : manifest.lenses) data.lens_coeffs[l.lens_id] = l.coeffs;
  data.samples.reserve(manifest.samples.size());
  for (const auto& rec : manifest.samples) data.samples.push_back(load_sample(manifest, rec, false));
  return data;
}

std::string epoch_to_json(const EpochRecord& rec) {
  auto lb = [](const LossBreakdown& l) {
    return json{{"coeff", l.coeff}, {"wave", l.wave},         {"psf", l.psf},
                {"map_wave", l.map_wave}, {"map_psf", l.map_psf}, {"total", l.total}};
  };
  return json{{"epoch", rec.epoch},
              {"learning_rate", rec.learning_rate},
              {"train", lb(rec.train)},
              {"heldout", lb(rec.heldout)},
              {"heldout_mae", rec.heldout_mae}}
      .dump();
}

namespace {

PhysicsContext make_physics(const TrainConfig& cfg) {
  return PhysicsContext(PupilGrid(cfg.physics_pupil_n, cfg.physics_aperture_fraction),
                        PsfGeometry{cfg.physics_pad, cfg.physics_crop}, cfg.map_size);
}

const ZernikeVector& lens_truth(const TrainingData& data, const std::string& lens_id) {
  const auto it = data.lens_coeffs.find(lens_id);
  if (it == data.lens_coeffs.end()) throw ArgumentError("sample references unknown lens " + lens_id);
  return it->second;
}

class TargetCache {
 public:
  TargetCache(const TrainingData& data, const PhysicsContext& physics) : data_(data), physics_(physics) {}
  const LensTargets& get(const std::string& lens_id) {
    auto it = cache_.find(lens_id);
    if (it == cache_.end()) it = cache_.emplace(lens_id, physics_.targets_for(lens_truth(data_, lens_id))).first;
    return it->second;
  }

 private:
  const TrainingData& data_;
  const PhysicsContext& physics_;
  std::map<std::string, LensTargets> cache_;
};

std::vector<double> gradient_impl(const TrainedModel& model, const nn::Network& net,
                                  const std::vector<const Sample*>& batch, TargetCache& targets,
                                  const PhysicsContext& physics, LossBreakdown* loss_out) {
  std::vector<double> grad(net.num_params(), 0.0);
  LossBreakdown sum;
  nn::Cache cache;
  nn::OutputGrad dout;
  for (const Sample* s : batch) {
    const auto out = net.forward(model.params, s->blurred, &cache);
    sum += total_loss(out, targets.get(s->lens_id), model.weights, model.normalizer, physics, false, &dout);
    net.backward(model.params, cache, dout, grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  if (loss_out != nullptr) *loss_out = sum.scaled(inv);
  return grad;
}

LossBreakdown loss_impl(const TrainedModel& model, const nn::Network& net, const std::vector<const Sample*>& samples,
                        TargetCache& targets, const PhysicsContext& physics, bool all_terms) {
  LossBreakdown sum;
  for (const Sample* s : samples) {
    const auto out = net.forward(model.params, s->blurred);
    sum += total_loss(out, targets.get(s->lens_id), model.weights, model.normalizer, physics, all_terms);
  }
  return samples.empty() ? sum : sum.scaled(1.0 / static_cast<double>(samples.size()));
}

std::vector<const Sample*> samples_of(const TrainingData& data, const std::set<std::string>& lenses) {
  std::vector<const Sample*> out;
  for (const auto& s : data.samples)
    if (lenses.contains(s.lens_id)) out.push_back(&s);
  return out;
}

Metrics metrics_impl(const TrainedModel& model, const nn::Network& net, const TrainingData& data,
                     const std::vector<const Sample*>& samples) {
  std::vector<ZernikeVector> pred;
  std::vector<ZernikeVector> truth;
  for (const Sample* s : samples) {
    pred.push_back(predict(model, net, s->blurred));
    truth.push_back(lens_truth(data, s->lens_id));
  }
  return coefficient_metrics(pred, truth);
}

}  // namespace

LossBreakdown dataset_loss(const TrainedModel& model, const std::vector<const Sample*>& samples,
                           const TrainingData& data, const PhysicsContext& physics, bool all_terms) {
  TargetCache targets(data, physics);
  return loss_impl(model, model.network(), samples, targets, physics, all_terms);
}

std::vector<double> batch_gradient(const TrainedModel& model, const std::vector<const Sample*>& batch,
                                   const TrainingData& data, const PhysicsContext& physics, LossBreakdown* loss) {
  if (batch.empty()) throw ArgumentError("empty batch");
  TargetCache targets(data, physics);
  return gradient_impl(model, model.network(), batch, targets, physics, loss);
}

ZernikeVector predict(const TrainedModel& model, const nn::Network& net, const Image& image) {
  return model.normalizer.denormalize(net.forward(model.params, image).coeffs);
}

Metrics coefficient_metrics(const std::vector<ZernikeVector>& pred, const std::vector<ZernikeVector>& truth) {
  if (pred.size() != truth.size()) throw ArgumentError("prediction and truth counts differ");
  if (pred.empty()) throw ArgumentError("metrics over an empty set");
  Metrics m;
  m.samples = pred.size();
  for (std::size_t s = 0; s < pred.size(); ++s)
    for (std::size_t i = 0; i < kNumCoeffs; ++i) {
      const double d = pred[s][i] - truth[s][i];
      m.per_coefficient_mae[i] += std::abs(d);
      m.mse += d * d;
    }
  const double n = static_cast<double>(pred.size());
  for (double& v : m.per_coefficient_mae) {
    v /= n;
    m.mae += v;
  }
  m.mae /= static_cast<double>(kNumCoeffs);
  m.mse /= n * static_cast<double>(kNumCoeffs);
  return m;
}

Metrics evaluate(const TrainedModel& model, const TrainingData& data, const std::vector<std::string>& test_lens_ids,
                 bool allow_leak) {
  if (test_lens_ids.empty()) throw ArgumentError("evaluate: empty test lens set");
  const std::set<std::string> train(model.train_lens_ids.begin(), model.train_lens_ids.end());
  std::vector<std::string> leaked;
  for (const auto& id : test_lens_ids)
    if (train.contains(id)) leaked.push_back(id);
  if (!leaked.empty() && !allow_leak) {
    std::string list;
    for (const auto& id : leaked) list += (list.empty() ? "" : ", ") + id;
    throw ProtocolError("test lenses overlap the training lenses: " + list);
  }
  const auto samples = samples_of(data, std::set<std::string>(test_lens_ids.begin(), test_lens_ids.end()));
  if (samples.empty()) throw ArgumentError("evaluate: no samples for the test lenses");
  return metrics_impl(model, model.network(), data, samples);
}

TrainResult train(const TrainingData& data, const Folds& folds, std::size_t fold_index, const LossWeights& weights,
                  const TrainConfig& cfg) {
  weights.validate();
  if (fold_index >= folds.size())
    throw ArgumentError("fold index " + std::to_string(fold_index) + " out of range for " +
                        std::to_string(folds.size()) + " folds");
  if (data.samples.empty()) throw ArgumentError("train: no samples");

  std::set<std::string> test_lenses(folds[fold_index].begin(), folds[fold_index].end());
  std::set<std::string> train_lenses;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != fold_index)
      for (const auto& id : folds[f]) {
        if (test_lenses.contains(id)) throw ProtocolError("lens " + id + " appears in both train and test folds");
        train_lenses.insert(id);
      }

  const auto train_samples = samples_of(data, train_lenses);
  const auto heldout_samples = samples_of(data, test_lenses);
  if (train_samples.empty()) throw ArgumentError("train: no samples for the training lenses");

  TrainResult result;
  TrainedModel& model = result.model;
  model.weights = weights;
  model.config = cfg;
  model.fold_index = static_cast<int>(fold_index);
  model.train_lens_ids.assign(train_lenses.begin(), train_lenses.end());
  {
    std::vector<ZernikeVector> coeffs;
    for (const auto& id : model.train_lens_ids) coeffs.push_back(lens_truth(data, id));
    model.normalizer = CoeffNormalizer::fit(coeffs);
  }
  model.spec.input_size = train_samples.front()->blurred.rows();
  model.spec.channels = cfg.channels;
  model.spec.bias = cfg.bias;
  model.spec.map_heads = weights.maps();
  model.spec.map_size = cfg.map_size;
  const nn::Network net(model.spec);
  model.params = net.init_params(cfg.seed);

  const PhysicsContext physics = make_physics(cfg);
  TargetCache targets(data, physics);

  std::vector<double> velocity(model.params.size(), 0.0);
  std::vector<const Sample*> order = train_samples;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5eedf00dULL);
  const std::size_t steps_per_epoch = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * cfg.epochs);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
    LossBreakdown epoch_loss;
    double lr = cfg.learning_rate;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const std::vector<const Sample*> batch(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                             order.begin() + static_cast<std::ptrdiff_t>(hi));
      LossBreakdown batch_loss;
      auto grad = gradient_impl(model, net, batch, targets, physics, &batch_loss);
      if (!std::isfinite(batch_loss.total))
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      epoch_loss += batch_loss.scaled(static_cast<double>(batch.size()));

      double gnorm = 0.0;
      for (double g : grad) gnorm += g * g;
      gnorm = std::sqrt(gnorm);
      if (!std::isfinite(gnorm))
        throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      const double clip = (cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip) ? cfg.grad_clip / gnorm : 1.0;

      lr = cfg.cosine_decay
               ? cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps))
               : cfg.learning_rate;
      for (std::size_t k = 0; k < model.params.size(); ++k) {
        velocity[k] = cfg.momentum * velocity[k] - lr * clip * grad[k];
        model.params[k] += velocity[k];
      }
    }
    for (double p : model.params)
      if (!std::isfinite(p))
        throw NumericalError("non-finite parameter after epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train = epoch_loss.scaled(1.0 / static_cast<double>(order.size()));
    if (!heldout_samples.empty()) {
      rec.heldout = loss_impl(model, net, heldout_samples, targets, physics, true);
      rec.heldout_mae = metrics_impl(model, net, data, heldout_samples).mae;
    }
    result.history.push_back(rec);
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainedModel& model) {
  std::filesystem::create_directories(dir);
  std::string blob;
  blob.reserve(model.params.size() * 8);
  for (double v : model.params) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  io::write_text(dir / "model.bin", blob);

  const nn::Network net(model.spec);
  json slots = json::array();
  for (const auto& s : net.layout().slots())
    slots.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", s.offset}, {"size", s.size}});
  json j = {{"format", "aberr-checkpoint-1"},
            {"dtype", "float64-le"},
            {"param_count", model.params.size()},
            {"spec",
             {{"input_size", model.spec.input_size},
              {"channels", model.spec.channels},
              {"bias", model.spec.bias},
              {"map_heads", model.spec.map_heads},
              {"map_size", model.spec.map_size}}},
            {"slots", slots},
            {"normalizer", {{"mean", model.normalizer.mean}, {"std", model.normalizer.std}}},
            {"weights",
             {{"lambda_z", model.weights.lambda_z},
              {"lambda_p_wave", model.weights.lambda_p_wave},
              {"lambda_p_psf", model.weights.lambda_p_psf},
              {"lambda_m", model.weights.lambda_m}}},
            {"train_config", model.config.to_text()},
            {"train_lens_ids", model.train_lens_ids},
            {"fold_index", model.fold_index}};
  io::write_text(dir / "model.json", j.dump(2) + "\n");
}

TrainedModel load_checkpoint(const std::filesystem::path& dir) {
  const json j = json::parse(io::read_text(dir / "model.json"));
  TrainedModel m;
  const auto& s = j.at("spec");
  m.spec.input_size = s.at("input_size").get<std::size_t>();
  m.spec.channels = s.at("channels").get<std::vector<std::size_t>>();
  m.spec.bias = s.at("bias").get<bool>();
  m.spec.map_heads = s.at("map_heads").get<bool>();
  m.spec.map_size = s.at("map_size").get<std::size_t>();
  m.normalizer.mean = j.at("normalizer").at("mean").get<std::array<double, kNumCoeffs>>();
  m.normalizer.std = j.at("normalizer").at("std").get<std::array<double, kNumCoeffs>>();
  const auto& w = j.at("weights");
  m.weights = {w.at("lambda_z").get<double>(), w.at("lambda_p_wave").get<double>(),
               w.at("lambda_p_psf").get<double>(), w.at("lambda_m").get<double>()};
  m.config = TrainConfig::parse(j.at("train_config").get<std::string>());
  m.train_lens_ids = j.at("train_lens_ids").get<std::vector<std::string>>();
  m.fold_index = j.at("fold_index").get<int>();

  const std::string blob = io::read_text(dir / "model.bin");
  const std::size_t count = j.at("param_count").get<std::size_t>();
  if (blob.size() != count * 8) throw IoError("model.bin size does not match param_count in " + dir.string());
  if (nn::Network(m.spec).num_params() != count) throw IoError("checkpoint shape manifest disagrees with parameters");
  m.params.resize(count);
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[8 * i + b]) << (8 * b);
    m.params[i] = std::bit_cast<double>(bits);
  }
  return m;
}

}  // namespace aberr
