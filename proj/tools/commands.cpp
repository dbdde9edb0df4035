#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iterator>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "aberr/grad.hpp"
#include "aberr/io.hpp"
#include "aberr/optics.hpp"
#include "aberr/restore.hpp"
#include "aberr/run_manifest.hpp"
#include "aberr/simulate.hpp"
#include "json.hpp"
#include "montage.hpp"

namespace aberr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument:
    case ErrorKind::config:
    case ErrorKind::protocol: return kExitUsage;
    case ErrorKind::io: return kExitIo;
    case ErrorKind::numerical: return kExitNumerical;
  }
  return kExitFailure;
}

namespace {

// Below ~3e-5 the band past the diffraction cutoff amplifies boundary mismatch.
constexpr double kNoiselessNsr = 1e-4;

const std::vector<std::string> kVariantOrder = {"z", "zpw", "zpp", "zp", "zpm"};

bool same_weights(const LossWeights& a, const LossWeights& b) {
  return a.lambda_z == b.lambda_z && a.lambda_p_wave == b.lambda_p_wave &&
         a.lambda_p_psf == b.lambda_p_psf && a.lambda_m == b.lambda_m;
}

// JSON number, or null when not finite.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json coeffs_json(const ZernikeVector& a) { return json(std::vector<double>(a.span().begin(), a.span().end())); }

json weights_json(const LossWeights& w) {
  return {{"lambda_z", w.lambda_z}, {"lambda_p_wave", w.lambda_p_wave}, {"lambda_p_psf", w.lambda_p_psf},
          {"lambda_m", w.lambda_m}};
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// Regular files under `dir`, relative and sorted, without the run manifest.
std::vector<std::string> list_outputs(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      const std::string rel = fs::relative(e.path(), dir).generic_string();
      if (rel != kRunManifestName) files.push_back(rel);
    }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<LensRecord> read_lenses(const fs::path& csv) {
  std::vector<LensRecord> lenses;
  for (auto& row : io::read_lens_csv(csv)) lenses.push_back({row.lens_id, row.coeffs});
  return lenses;
}

Folds read_folds(const fs::path& path) { return folds_from_json(io::read_text(path)); }

// Shared state of one invocation: streams plus the manifest being assembled.
struct Invocation {
  std::ostream& out;
  std::ostream& err;
  RunManifest manifest;
  fs::path out_dir;
};

// ---------------------------------------------------------------- gen-lenses

struct GenLensesOpts {
  long long count = 0;
  std::uint64_t seed = 0;
  double sigma0 = AmplitudeProfile{}.sigma0;
  double decay = AmplitudeProfile{}.decay;
};

void cmd_gen_lenses(Invocation& inv, const GenLensesOpts& o) {
  if (o.count <= 0) throw ArgumentError("--count must be positive");
  const AmplitudeProfile profile{o.sigma0, o.decay};
  const auto lenses = sample_lens_population(static_cast<std::size_t>(o.count), profile, o.seed);
  std::vector<io::LensRow> rows;
  for (const auto& l : lenses) rows.push_back({l.lens_id, l.coeffs});
  io::write_lens_csv(inv.out_dir / "lenses.csv", rows);
  inv.manifest.config_json = json{{"count", o.count}, {"sigma0", o.sigma0}, {"decay", o.decay}}.dump();
  inv.manifest.seeds["seed"] = o.seed;
  inv.out << "wrote " << lenses.size() << " lenses to " << (inv.out_dir / "lenses.csv").string() << "\n";
}

// ------------------------------------------------------------------ simulate

struct SimulateOpts {
  std::string lenses;
  std::string images;
  bool procedural = false;
  std::uint64_t seed = 0;
  SimConfig cfg;
  int pad = 2;
  std::size_t crop = 64;
  std::string boundary = "replicate";
  bool no_clip = false;
};

void cmd_simulate(Invocation& inv, SimulateOpts o) {
  if (o.procedural == !o.images.empty()) throw ArgumentError("pass exactly one of --images or --procedural");
  const auto lenses = read_lenses(o.lenses);
  o.cfg.seed = o.seed;
  o.cfg.geometry = PsfGeometry{o.pad, o.crop};
  o.cfg.boundary = parse_boundary(o.boundary);
  o.cfg.noise.clip = !o.no_clip;
  const ImageSource source = o.procedural
                                 ? ImageSource::procedural(o.cfg.procedural_images, o.cfg.procedural_size, o.seed)
                                 : ImageSource::from_directory(o.images);
  const DatasetManifest m = generate_dataset(lenses, source, o.cfg, inv.out_dir);
  inv.manifest.config_json = json::parse(io::read_text(inv.out_dir / "dataset.json")).dump();
  inv.manifest.seeds["seed"] = o.seed;
  inv.out << "wrote " << m.samples.size() << " samples for " << m.lenses.size() << " lenses to "
          << inv.out_dir.string() << "\n";
}

// --------------------------------------------------------------- split-folds

struct SplitOpts {
  std::string dataset;
  std::string lenses;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

void cmd_split_folds(Invocation& inv, const SplitOpts& o) {
  if (o.dataset.empty() == o.lenses.empty()) throw ArgumentError("pass exactly one of --dataset or --lenses");
  const auto lenses = o.dataset.empty() ? read_lenses(o.lenses) : load_dataset(o.dataset).lenses;
  std::vector<std::string> ids;
  for (const auto& l : lenses) ids.push_back(l.lens_id);
  const Folds folds = split_lens_folds(ids, o.k, o.seed);
  io::write_text(inv.out_dir / "folds.json", folds_to_json(folds));
  inv.manifest.config_json = json{{"k", o.k}, {"lens_count", ids.size()}}.dump();
  inv.manifest.seeds["seed"] = o.seed;
  inv.out << "wrote " << folds.size() << " folds over " << ids.size() << " lenses\n";
}

// --------------------------------------------------------------------- train

struct TrainOpts {
  std::string dataset;
  std::string folds;
  std::size_t fold = 0;
  std::string loss = "zpm";
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  std::size_t epochs = 0;
  double lr = 0.0;
  std::size_t batch = 0;
};

void cmd_train(Invocation& inv, const TrainOpts& o) {
  const LossWeights weights = LossWeights::from_tag(o.loss);
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : TrainConfig::parse(io::read_text(o.config));
  cfg.seed = o.seed;
  if (o.epochs_opt->count()) cfg.epochs = o.epochs;
  if (o.lr_opt->count()) cfg.learning_rate = o.lr;
  if (o.batch_opt->count()) cfg.batch_size = o.batch;

  const DatasetManifest dm = load_dataset(o.dataset);
  const TrainingData data = TrainingData::load(dm);
  const Folds folds = read_folds(o.folds);
  if (o.fold >= folds.size()) throw ArgumentError("--fold out of range");

  const TrainResult r = train(data, folds, o.fold, weights, cfg);
  save_checkpoint(inv.out_dir / "model", r.model);
  std::string history;
  for (const auto& e : r.history) history += epoch_to_json(e) + "\n";
  io::write_text(inv.out_dir / "history.jsonl", history);

  const EpochRecord& last = r.history.back();
  const json summary = {{"loss", o.loss},
                        {"label", variant_label(o.loss)},
                        {"weights", weights_json(weights)},
                        {"fold_index", o.fold},
                        {"epochs", r.history.size()},
                        {"final_train_total", last.train.total},
                        {"final_train_coeff", last.train.coeff},
                        {"final_heldout_coeff", last.heldout.coeff},
                        {"final_heldout_mae", last.heldout_mae}};
  io::write_text(inv.out_dir / "train.json", summary.dump(2) + "\n");

  inv.manifest.config_json =
      json{{"loss", o.loss}, {"weights", weights_json(weights)}, {"fold", o.fold}, {"train_config", cfg.to_text()}}
          .dump();
  inv.manifest.seeds["seed"] = o.seed;
  inv.out << "trained " << o.loss << " on fold " << o.fold << ": held-out MAE " << last.heldout_mae << " waves\n";
}

// ---------------------------------------------------------------------- eval

struct EvalOpts {
  std::string model;
  std::string dataset;
  std::string folds;
  long long fold = -1;
  std::string test_lenses;
  bool allow_leak = false;
};

// Lens-level estimate: mean prediction over the lens's samples.
ZernikeVector mean_prediction(const TrainedModel& model, const nn::Network& net, const TrainingData& data,
                              const std::string& lens_id) {
  ZernikeVector acc;
  std::size_t n = 0;
  for (const auto& s : data.samples)
    if (s.lens_id == lens_id) {
      const ZernikeVector p = predict(model, net, s.blurred);
      for (int j = kFirstNoll; j <= kLastNoll; ++j) acc.at_noll(j) += p.at_noll(j);
      ++n;
    }
  if (n == 0) throw ArgumentError("no samples for lens " + lens_id);
  for (int j = kFirstNoll; j <= kLastNoll; ++j) acc.at_noll(j) /= static_cast<double>(n);
  return acc;
}

void write_lens_triptychs(const fs::path& dir, const ZernikeVector& truth, const ZernikeVector& pred,
                          const PupilGrid& grid, const PsfGeometry& geometry) {
  const ZernikeBasis basis(grid);
  write_triptych(dir / "wavefront_triptych.pgm", aperture_view(wavefront_from_coeffs(truth, basis)),
                 aperture_view(wavefront_from_coeffs(pred, basis)));
  write_triptych(dir / "psf_triptych.pgm", psf_from_coeffs(truth, basis, geometry).values,
                 psf_from_coeffs(pred, basis, geometry).values);
}

void cmd_eval(Invocation& inv, const EvalOpts& o) {
  const TrainedModel model = load_checkpoint(o.model);
  const TrainingData data = TrainingData::load(load_dataset(o.dataset));

  std::vector<std::string> test_ids;
  long long fold = o.fold;
  if (!o.test_lenses.empty()) {
    test_ids = split_csv_list(o.test_lenses);
  } else {
    if (o.folds.empty()) throw ArgumentError("pass --folds (with optional --fold) or --test-lenses");
    const Folds folds = read_folds(o.folds);
    if (fold < 0) fold = model.fold_index;
    if (fold < 0 || static_cast<std::size_t>(fold) >= folds.size()) throw ArgumentError("--fold out of range");
    test_ids = folds[static_cast<std::size_t>(fold)];
  }

  const Metrics m = evaluate(model, data, test_ids, o.allow_leak);
  inv.manifest.leak_allowed = o.allow_leak;

  const std::string tag = variant_tag(model.weights);
  json metrics = {{"variant", tag},
                  {"label", variant_label(tag)},
                  {"fold_index", fold},
                  {"mae", m.mae},
                  {"mse", m.mse},
                  {"samples", m.samples},
                  {"per_coefficient_mae", m.per_coefficient_mae},
                  {"test_lens_ids", test_ids},
                  {"leak_allowed", o.allow_leak}};
  io::write_text(inv.out_dir / "metrics.json", metrics.dump(2) + "\n");

  const nn::Network net(model.spec);
  const std::string& lens = test_ids.front();
  const PupilGrid grid(model.config.physics_pupil_n, model.config.physics_aperture_fraction);
  write_lens_triptychs(inv.out_dir, data.lens_coeffs.at(lens), mean_prediction(model, net, data, lens), grid,
                       PsfGeometry{model.config.physics_pad, model.config.physics_crop});

  inv.manifest.config_json = json{{"variant", tag}, {"fold", fold}, {"test_lens_ids", test_ids}}.dump();
  inv.out << tag << " fold " << fold << ": MAE " << m.mae << " waves, MSE " << m.mse << " over " << m.samples
          << " samples\n";
}

// ------------------------------------------------------------------- recover

struct RecoverOpts {
  std::string lenses;
  std::string lens;
  std::string psf;
  std::size_t pupil_n = 64;
  double af = 0.5;
  int pad = 2;
  std::size_t crop = 0;
  int starts = 8;
  int max_iters = 500;
  double spread = 0.05;
  std::uint64_t seed = 0;
};

void cmd_recover(Invocation& inv, const RecoverOpts& o) {
  if (o.psf.empty() == o.lenses.empty()) throw ArgumentError("pass exactly one of --psf or --lenses with --lens");
  const PupilGrid grid(o.pupil_n, o.af);
  const ZernikeBasis basis(grid);
  RecoverConfig cfg;
  cfg.geometry = PsfGeometry{o.pad, o.crop};
  cfg.geometry.validate(grid);
  cfg.starts = o.starts;
  cfg.max_iters = o.max_iters;
  cfg.init_spread = o.spread;
  cfg.seed = o.seed;

  std::optional<ZernikeVector> truth;
  PsfMap observed;
  if (!o.psf.empty()) {
    observed.values = io::read_grid(o.psf);
  } else {
    if (o.lens.empty()) throw ArgumentError("--lenses requires --lens");
    for (const auto& l : read_lenses(o.lenses))
      if (l.lens_id == o.lens) truth = l.coeffs;
    if (!truth) throw ArgumentError("lens " + o.lens + " not found in " + o.lenses);
    observed = psf_from_coeffs(*truth, basis, cfg.geometry);
  }

  const RecoverResult r = recover_coefficients(observed, basis, cfg);

  std::string trace;
  for (const auto& t : r.trace)
    trace += json{{"iter", t.iter}, {"loss", t.loss}, {"grad_norm", t.grad_norm}}.dump() + "\n";
  io::write_text(inv.out_dir / "trace.jsonl", trace);

  json result = {{"coeffs", coeffs_json(r.coeffs)},
                 {"loss", r.loss},
                 {"best_start", r.best_start},
                 {"start_losses", r.start_losses},
                 {"iterations", r.trace.empty() ? 0 : r.trace.back().iter}};
  if (truth) {
    result["truth"] = coeffs_json(*truth);
    result["mae"] = coefficient_metrics({r.coeffs}, {*truth}).mae;
    write_lens_triptychs(inv.out_dir, *truth, r.coeffs, grid, cfg.geometry);
  }
  io::write_text(inv.out_dir / "result.json", result.dump(2) + "\n");
  io::write_lens_csv(inv.out_dir / "recovered.csv", {{truth ? o.lens : std::string("recovered"), r.coeffs}});

  inv.manifest.config_json = json{{"pupil_n", o.pupil_n},
                                  {"aperture_fraction", o.af},
                                  {"pad", o.pad},
                                  {"crop", o.crop},
                                  {"starts", o.starts},
                                  {"max_iters", o.max_iters},
                                  {"init_spread", o.spread}}
                                 .dump();
  inv.manifest.seeds["seed"] = o.seed;
  inv.out << "recovered in " << r.trace.size() - 1 << " iterations, loss " << r.loss;
  if (truth) inv.out << ", MAE " << result["mae"].get<double>() << " waves";
  inv.out << "\n";
}

// ------------------------------------------------------------------- restore

struct RestoreOpts {
  std::string dataset;
  std::string source = "truth";
  std::string model;
  std::string lenses;
  std::string folds;
  long long fold = -1;
  std::size_t max_per_lens = 5;
  CLI::Option* nsr_opt = nullptr;
  double nsr = 1e-3;
  std::string boundary = "replicate";
  std::size_t recover_pupil_n = 0;
  int starts = 8;
  int max_iters = 500;
  std::uint64_t seed = 0;
};

struct RestoreSummary {
  double blurred = 0, pred = 0, oracle = 0, gap = 0;
};

void cmd_restore(Invocation& inv, const RestoreOpts& o) {
  if (o.source != "truth" && o.source != "model" && o.source != "recover")
    throw ArgumentError("--source must be truth, model or recover");
  const DatasetManifest dm = load_dataset(o.dataset);

  std::vector<std::string> lens_ids;
  if (!o.lenses.empty()) {
    lens_ids = split_csv_list(o.lenses);
  } else if (!o.folds.empty()) {
    const Folds folds = read_folds(o.folds);
    if (o.fold < 0 || static_cast<std::size_t>(o.fold) >= folds.size()) throw ArgumentError("--fold out of range");
    lens_ids = folds[static_cast<std::size_t>(o.fold)];
  } else {
    for (const auto& l : dm.lenses) lens_ids.push_back(l.lens_id);
  }

  std::optional<TrainedModel> model;
  std::optional<nn::Network> net;
  if (o.source == "model") {
    if (o.model.empty()) throw ArgumentError("--source model requires --model");
    model = load_checkpoint(o.model);
    net.emplace(model->spec);
    for (const auto& id : lens_ids)
      if (std::find(model->train_lens_ids.begin(), model->train_lens_ids.end(), id) != model->train_lens_ids.end())
        throw ProtocolError("lens " + id + " was used to train the model");
  }

  bool noiseless = true;
  for (const auto& s : dm.samples) noiseless = noiseless && s.noise_sigma == 0.0;
  WienerConfig wcfg;
  wcfg.nsr = o.nsr_opt->count() ? o.nsr : (noiseless ? kNoiselessNsr : 1e-3);
  wcfg.boundary = parse_boundary(o.boundary);
  wcfg.validate();

  const ZernikeBasis basis(dm.config.grid());
  const PsfGeometry& geometry = dm.config.geometry;
  const std::size_t rec_n = o.recover_pupil_n ? o.recover_pupil_n : dm.config.pupil_n;
  std::optional<ZernikeBasis> rec_basis;
  if (o.source == "recover") rec_basis.emplace(PupilGrid(rec_n, dm.config.aperture_fraction));

  std::string lines;
  std::vector<RestorationReport> reports;
  json recovered = json::object();
  for (const auto& id : lens_ids) {
    const ZernikeVector& truth = dm.lens(id).coeffs;
    std::optional<ZernikeVector> lens_pred;
    if (o.source == "truth") lens_pred = truth;
    if (o.source == "recover") {
      RecoverConfig rc;
      rc.geometry = geometry;
      rc.starts = o.starts;
      rc.max_iters = o.max_iters;
      rc.seed = stream_seed(o.seed, id, 0);
      const PsfMap observed = psf_from_coeffs(truth, *rec_basis, geometry);
      lens_pred = recover_coefficients(observed, *rec_basis, rc).coeffs;
      recovered[id] = coeffs_json(*lens_pred);
    }
    std::size_t used = 0;
    for (const auto& rec : dm.samples) {
      if (rec.lens_id != id || used >= o.max_per_lens) continue;
      ++used;
      const Sample s = load_sample(dm, rec, true);
      const ZernikeVector pred = lens_pred ? *lens_pred : predict(*model, *net, s.blurred);
      const RestorationReport rep = oracle_gap_report(s, pred, truth, basis, geometry, wcfg);
      io::write_pgm16(inv.out_dir / "restored" / (s.sample_id + ".pgm"),
                      wiener_deconvolve(s.blurred, psf_from_coeffs(pred, basis, geometry), wcfg));
      lines += report_to_json(rep) + "\n";
      reports.push_back(rep);
    }
  }
  if (reports.empty()) throw ArgumentError("no samples selected for restoration");
  io::write_text(inv.out_dir / "reports.jsonl", lines);

  RestoreSummary sum;
  for (const auto& r : reports) {
    sum.blurred += r.psnr_blurred;
    sum.pred += r.psnr_pred;
    sum.oracle += r.psnr_oracle;
    sum.gap += r.oracle_gap;
  }
  const double n = static_cast<double>(reports.size());
  json summary = {{"source", o.source},
                  {"nsr", wcfg.nsr},
                  {"boundary", to_string(wcfg.boundary)},
                  {"samples", reports.size()},
                  {"lens_ids", lens_ids},
                  {"mean_psnr_blurred", finite_or_null(sum.blurred / n)},
                  {"mean_psnr_pred", finite_or_null(sum.pred / n)},
                  {"mean_psnr_oracle", finite_or_null(sum.oracle / n)},
                  {"mean_oracle_gap", finite_or_null(sum.gap / n)},
                  {"mean_improvement", finite_or_null((sum.pred - sum.blurred) / n)}};
  if (o.source == "recover") summary["recovered"] = recovered;
  io::write_text(inv.out_dir / "restore.json", summary.dump(2) + "\n");

  inv.manifest.config_json = json{{"source", o.source},
                                  {"nsr", wcfg.nsr},
                                  {"boundary", to_string(wcfg.boundary)},
                                  {"max_per_lens", o.max_per_lens},
                                  {"recover_pupil_n", rec_n},
                                  {"starts", o.starts},
                                  {"max_iters", o.max_iters}}
                                 .dump();
  inv.manifest.seeds["seed"] = o.seed;
  inv.out << std::fixed << std::setprecision(2) << "restored " << reports.size()
          << " samples: PSNR blurred " << sum.blurred / n << " dB, restored " << sum.pred / n << " dB, oracle "
          << sum.oracle / n << " dB, gap " << sum.gap / n << " dB\n";
}

// -------------------------------------------------------------------- report

struct ReportOpts {
  std::vector<std::string> runs;
};

struct Stats {
  std::size_t n = 0;
  double mean = 0, std = 0, median = 0;
};

Stats stats_of(std::vector<double> v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(s.n);
  double ss = 0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  std::sort(v.begin(), v.end());
  s.median = s.n % 2 ? v[s.n / 2] : 0.5 * (v[s.n / 2 - 1] + v[s.n / 2]);
  return s;
}

std::string fmt(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void cmd_report(Invocation& inv, const ReportOpts& o) {
  std::map<std::string, std::vector<double>> mae, mse;
  std::map<std::string, std::vector<double>> psnr_pred, gap;
  std::vector<fs::path> files;
  std::size_t leaked = 0;
  for (const auto& root : o.runs) {
    if (!fs::exists(root)) throw IoError("no such run directory: " + root);
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && (e.path().filename() == "metrics.json" || e.path().filename() == "restore.json"))
        files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const json j = json::parse(io::read_text(f));
    if (f.filename() == "metrics.json") {
      if (j.value("leak_allowed", false)) {
        ++leaked;
        continue;
      }
      mae[j.at("variant").get<std::string>()].push_back(j.at("mae").get<double>());
      mse[j.at("variant").get<std::string>()].push_back(j.at("mse").get<double>());
    } else if (!j.at("mean_psnr_pred").is_null() && !j.at("mean_oracle_gap").is_null()) {
      psnr_pred[j.at("source").get<std::string>()].push_back(j.at("mean_psnr_pred").get<double>());
      gap[j.at("source").get<std::string>()].push_back(j.at("mean_oracle_gap").get<double>());
    }
  }
  if (mae.empty() && psnr_pred.empty()) throw ArgumentError("no metrics.json or restore.json under the given runs");

  std::vector<std::string> order;
  for (const auto& t : kVariantOrder)
    if (mae.contains(t)) order.push_back(t);
  for (const auto& [t, _] : mae)
    if (std::find(order.begin(), order.end(), t) == order.end()) order.push_back(t);

  std::string csv = "variant,label,runs,mae_mean,mae_std,mae_median,mse_mean,mse_std\n";
  std::ostringstream txt;
  txt << std::left << std::setw(30) << "Loss configuration" << std::setw(6) << "runs" << std::setw(26)
      << "MAE (waves) mean +- std" << "MSE (waves^2) mean +- std\n";
  for (const auto& t : order) {
    const Stats a = stats_of(mae[t]), b = stats_of(mse[t]);
    csv += t + ",\"" + variant_label(t) + "\"," + std::to_string(a.n) + "," + io::format_double(a.mean) + "," +
           io::format_double(a.std) + "," + io::format_double(a.median) + "," + io::format_double(b.mean) + "," +
           io::format_double(b.std) + "\n";
    txt << std::left << std::setw(30) << variant_label(t) << std::setw(6) << a.n << std::setw(26)
        << (fmt(a.mean, 5) + " +- " + fmt(a.std, 5)) << (fmt(b.mean, 7) + " +- " + fmt(b.std, 7)) << "\n";
  }
  io::write_text(inv.out_dir / "table1.csv", csv);

  if (!psnr_pred.empty()) {
    std::string rcsv = "source,runs,psnr_mean,oracle_gap_mean\n";
    txt << "\n" << std::left << std::setw(30) << "Restoration source" << std::setw(6) << "runs" << std::setw(26)
        << "mean PSNR (dB)" << "mean oracle gap (dB)\n";
    for (const auto& [src, v] : psnr_pred) {
      const Stats p = stats_of(v), g = stats_of(gap[src]);
      rcsv += src + "," + std::to_string(p.n) + "," + io::format_double(p.mean) + "," + io::format_double(g.mean) + "\n";
      txt << std::left << std::setw(30) << src << std::setw(6) << p.n << std::setw(26) << fmt(p.mean, 2)
          << fmt(g.mean, 2) << "\n";
    }
    io::write_text(inv.out_dir / "restoration.csv", rcsv);
  }
  if (leaked) txt << "\n" << leaked << " leak-watermarked eval run(s) excluded\n";
  io::write_text(inv.out_dir / "table1.txt", txt.str());
  inv.manifest.config_json = json{{"runs", o.runs}, {"files", files.size()}, {"excluded_leaked", leaked}}.dump();
  inv.out << txt.str();
}

// --------------------------------------------------------------------- rerun

struct RerunOpts {
  std::string manifest;
  bool verify = false;
};

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::equal(std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>(),
                    std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>());
}

}  // namespace

std::string variant_tag(const LossWeights& w) {
  for (const auto& t : kVariantOrder)
    if (same_weights(w, LossWeights::from_tag(t))) return t;
  return "custom";
}

std::string variant_label(const std::string& tag) {
  static const std::map<std::string, std::string> labels = {{"z", "z (coefficients only)"},
                                                            {"zpw", "z + p_W (wavefront loss)"},
                                                            {"zpp", "z + p_P (PSF loss)"},
                                                            {"zp", "z + p (combined physics)"},
                                                            {"zpm", "z + p + m (full multi-task)"}};
  const auto it = labels.find(tag);
  return it == labels.end() ? tag : it->second;
}

namespace {

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_rerun(const RerunOpts& o, const std::string& new_out, std::ostream& out, std::ostream& err) {
  const RunManifest m = read_run_manifest(o.manifest);
  std::vector<std::string> argv{m.command};
  const auto rest = with_output_dir(m.args, new_out);
  argv.insert(argv.end(), rest.begin(), rest.end());
  const int code = run_parsed(argv, out, err);
  if (code != kExitOk || !o.verify) return code;

  const fs::path original = fs::path(o.manifest).parent_path();
  std::size_t mismatches = 0;
  for (const auto& rel : m.outputs)
    if (!same_bytes(original / rel, fs::path(new_out) / rel)) {
      err << "differs: " << rel << "\n";
      ++mismatches;
    }
  const auto produced = list_outputs(new_out);
  if (produced != m.outputs) {
    err << "output file sets differ\n";
    ++mismatches;
  }
  if (mismatches) {
    err << mismatches << " output(s) not reproduced bitwise\n";
    return kExitNumerical;
  }
  out << "reproduced " << m.outputs.size() << " outputs bitwise\n";
  return kExitOk;
}

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zernike aberration toolkit: simulation, physics-informed regression, recovery, restoration"};
  app.name("aberr");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string out_dir;
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", out_dir, "Output directory")->required(); };
  auto add_seed = [](CLI::App* sub, std::uint64_t& seed) {
    sub->add_option("--seed", seed, "Random seed (mandatory, no implicit entropy)")->required();
  };

  GenLensesOpts gl;
  auto* gen = app.add_subcommand("gen-lenses", "Sample a synthetic lens population");
  gen->add_option("--count", gl.count, "Number of lenses")->required();
  gen->add_option("--sigma0", gl.sigma0, "Amplitude scale of radial order 1 (waves)");
  gen->add_option("--decay", gl.decay, "Amplitude ratio between consecutive radial orders");
  add_seed(gen, gl.seed);
  add_out(gen);

  SimulateOpts so;
  auto* sim = app.add_subcommand("simulate", "Generate a blurred-patch dataset from a lens set");
  sim->add_option("--lenses", so.lenses, "Lens CSV")->required();
  sim->add_option("--images", so.images, "Directory of clean PGM images");
  sim->add_flag("--procedural", so.procedural, "Use procedural textures instead of --images");
  sim->add_option("--patch", so.cfg.patch, "Patch size in pixels");
  sim->add_option("--patches-per-lens", so.cfg.patches_per_lens, "Patches per lens");
  sim->add_option("--pupil-n", so.cfg.pupil_n, "Pupil grid size");
  sim->add_option("--aperture-fraction", so.cfg.aperture_fraction, "Aperture diameter over grid size");
  sim->add_option("--pad", so.pad, "Zero-padding factor of the PSF field");
  sim->add_option("--crop", so.crop, "PSF crop size (0 keeps the full field)");
  sim->add_option("--boundary", so.boundary, "circular | replicate");
  sim->add_option("--noise", so.cfg.noise.gaussian_sigma, "Gaussian read-noise sigma");
  sim->add_flag("--no-clip", so.no_clip, "Do not clip noisy images to [0, 1]");
  sim->add_option("--procedural-count", so.cfg.procedural_images, "Number of procedural images");
  sim->add_option("--procedural-size", so.cfg.procedural_size, "Side of each procedural image");
  add_seed(sim, so.seed);
  add_out(sim);

  SplitOpts sp;
  auto* split = app.add_subcommand("split-folds", "Partition lenses into k disjoint folds");
  split->add_option("--dataset", sp.dataset, "Dataset directory");
  split->add_option("--lenses", sp.lenses, "Lens CSV");
  split->add_option("--k", sp.k, "Number of folds");
  add_seed(split, sp.seed);
  add_out(split);

  TrainOpts to;
  auto* tr = app.add_subcommand("train", "Train the coefficient regressor on one fold");
  tr->add_option("--dataset", to.dataset, "Dataset directory")->required();
  tr->add_option("--folds", to.folds, "Folds JSON")->required();
  tr->add_option("--fold", to.fold, "Held-out fold index")->required();
  tr->add_option("--loss", to.loss, "Loss variant")->check(CLI::IsMember(kVariantOrder));
  tr->add_option("--config", to.config, "TrainConfig key = value file");
  to.epochs_opt = tr->add_option("--epochs", to.epochs, "Override epochs");
  to.lr_opt = tr->add_option("--lr", to.lr, "Override learning rate");
  to.batch_opt = tr->add_option("--batch", to.batch, "Override batch size");
  add_seed(tr, to.seed);
  add_out(tr);

  EvalOpts eo;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on held-out lenses");
  ev->add_option("--model", eo.model, "Checkpoint directory")->required();
  ev->add_option("--dataset", eo.dataset, "Dataset directory")->required();
  ev->add_option("--folds", eo.folds, "Folds JSON");
  ev->add_option("--fold", eo.fold, "Test fold (defaults to the model's held-out fold)");
  ev->add_option("--test-lenses", eo.test_lenses, "Comma-separated test lens ids");
  ev->add_flag("--allow-leak", eo.allow_leak, "Permit train/test lens overlap; watermarks the run manifest");
  add_out(ev);

  RecoverOpts ro;
  auto* rec = app.add_subcommand("recover", "Recover Zernike coefficients from a PSF");
  rec->add_option("--psf", ro.psf, "Observed PSF grid (.abr)");
  rec->add_option("--lenses", ro.lenses, "Lens CSV (simulate the PSF of --lens)");
  rec->add_option("--lens", ro.lens, "Lens id");
  rec->add_option("--pupil-n", ro.pupil_n, "Pupil grid size");
  rec->add_option("--aperture-fraction", ro.af, "Aperture diameter over grid size");
  rec->add_option("--pad", ro.pad, "Zero-padding factor");
  rec->add_option("--crop", ro.crop, "PSF crop size (0 keeps the full field)");
  rec->add_option("--starts", ro.starts, "Number of starts");
  rec->add_option("--max-iters", ro.max_iters, "Iterations per start");
  rec->add_option("--spread", ro.spread, "Restart draw range in waves");
  add_seed(rec, ro.seed);
  add_out(rec);

  RestoreOpts rs;
  auto* res = app.add_subcommand("restore", "Wiener restoration with predicted and oracle PSFs");
  res->add_option("--dataset", rs.dataset, "Dataset directory")->required();
  res->add_option("--source", rs.source, "Coefficient source: truth | model | recover");
  res->add_option("--model", rs.model, "Checkpoint directory (for --source model)");
  res->add_option("--lenses", rs.lenses, "Comma-separated lens ids");
  res->add_option("--folds", rs.folds, "Folds JSON");
  res->add_option("--fold", rs.fold, "Fold index selecting the lenses");
  res->add_option("--max-per-lens", rs.max_per_lens, "Samples restored per lens");
  rs.nsr_opt = res->add_option("--nsr", rs.nsr, "Wiener noise-to-signal ratio (default 1e-4 noiseless, 1e-3 noisy)");
  res->add_option("--boundary", rs.boundary, "circular | replicate");
  res->add_option("--recover-pupil-n", rs.recover_pupil_n, "Pupil grid for recovery (default: dataset grid)");
  res->add_option("--starts", rs.starts, "Recovery starts");
  res->add_option("--max-iters", rs.max_iters, "Recovery iterations per start");
  add_seed(res, rs.seed);
  add_out(res);

  ReportOpts rp;
  auto* rep = app.add_subcommand("report", "Summarize eval and restore runs into ablation tables");
  rep->add_option("--runs", rp.runs, "Run directories to scan")->required();
  add_out(rep);

  RerunOpts rr;
  auto* rerun = app.add_subcommand("rerun", "Re-execute a subcommand from its run manifest");
  rerun->add_option("--manifest", rr.manifest, "run_manifest.json")->required();
  rerun->add_flag("--verify", rr.verify, "Compare every output with the original bitwise");
  add_out(rerun);

  std::vector<std::string> argv_store{"aberr"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (rerun->parsed()) return run_rerun(rr, out_dir, out, err);

  Invocation inv{out, err, {}, out_dir};
  inv.manifest.command = app.get_subcommands().front()->get_name();
  inv.manifest.args.assign(args.begin() + 1, args.end());
  inv.manifest.started_at = utc_timestamp();
  fs::create_directories(inv.out_dir);

  if (gen->parsed()) cmd_gen_lenses(inv, gl);
  if (sim->parsed()) cmd_simulate(inv, so);
  if (split->parsed()) cmd_split_folds(inv, sp);
  if (tr->parsed()) cmd_train(inv, to);
  if (ev->parsed()) cmd_eval(inv, eo);
  if (rec->parsed()) cmd_recover(inv, ro);
  if (res->parsed()) cmd_restore(inv, rs);
  if (rep->parsed()) cmd_report(inv, rp);

  inv.manifest.finished_at = utc_timestamp();
  inv.manifest.outputs = list_outputs(inv.out_dir);
  write_run_manifest(inv.out_dir, inv.manifest);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_parsed(args, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace aberr::cli
