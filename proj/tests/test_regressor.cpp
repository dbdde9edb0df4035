#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "aberr/error.hpp"
#include "aberr/regressor.hpp"
#include "test_support.hpp"

using namespace aberr;
using aberr::testing::TempDir;

namespace {

// Small dataset shared by most cases: 6 lenses x 4 patches of 32 x 32.
struct Fixture {
  TempDir dir{"reg"};
  DatasetManifest manifest;
  TrainingData data;
  Folds folds;

  Fixture() {
    SimConfig cfg;
    cfg.patch = 32;
    cfg.patches_per_lens = 4;
    cfg.pupil_n = 32;
    cfg.geometry = PsfGeometry{2, 16};
    cfg.seed = 2;
    manifest = generate_dataset(sample_lens_population(6, {}, 4), ImageSource::procedural(2, 64, 1), cfg, dir / "ds");
    data = TrainingData::load(manifest);
    std::vector<std::string> ids;
    for (const auto& l : manifest.lenses) ids.push_back(l.lens_id);
    folds = split_lens_folds(ids, 3, 5);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.channels = {4, 8, 8, 8};
  c.map_size = 8;
  c.physics_pupil_n = 32;
  c.physics_crop = 16;
  c.seed = 3;
  return c;
}

PhysicsContext physics_for(const TrainConfig& c) {
  return PhysicsContext(PupilGrid(c.physics_pupil_n, c.physics_aperture_fraction),
                        PsfGeometry{c.physics_pad, c.physics_crop}, c.map_size);
}

}  // namespace

TEST_CASE("loss weights") {
  auto same = [](const LossWeights& w, double z, double pw, double pp, double m) {
    return w.lambda_z == z && w.lambda_p_wave == pw && w.lambda_p_psf == pp && w.lambda_m == m;
  };
  CHECK(same(LossWeights::from_tag("z"), 1, 0, 0, 0));
  CHECK(same(LossWeights::from_tag("zpw"), 1, 1, 0, 0));
  CHECK(same(LossWeights::from_tag("zpp"), 1, 0, 1, 0));
  CHECK(same(LossWeights::from_tag("zp"), 1, 1, 1, 0));
  CHECK(same(LossWeights::from_tag("zpm"), 1, 1, 1, 0.5));
  CHECK(LossWeights::from_tag("zpm").maps());
  CHECK_FALSE(LossWeights::from_tag("zp").maps());
  CHECK_THROWS_AS(LossWeights::from_tag("zz"), ArgumentError);
  CHECK_THROWS_AS(LossWeights({0, 0, 0, 0}).validate(), ConfigError);
  CHECK_THROWS_AS(LossWeights({1, -1, 0, 0}).validate(), ConfigError);
}

TEST_CASE("normalizer round trip and degenerate spread") {
  std::mt19937_64 rng(1);
  std::vector<ZernikeVector> cs;
  for (int i = 0; i < 10; ++i) cs.push_back(aberr::testing::random_coeffs(rng, 0.1));
  for (auto& c : cs) c.at_noll(37) = 0.25;  // constant column
  const CoeffNormalizer n = CoeffNormalizer::fit(cs);
  CHECK(n.std[35] == 1.0);
  for (const auto& c : cs) {
    const ZernikeVector back = n.denormalize(n.normalize(c));
    for (std::size_t i = 0; i < kNumCoeffs; ++i) CHECK(std::abs(back[i] - c[i]) <= 1e-12);
  }
  double m = 0;
  for (const auto& c : cs) m += n.normalize(c)[0];
  CHECK(std::abs(m) < 1e-12);
}

TEST_CASE("total loss") {
  const TrainConfig c = small_config();
  const PhysicsContext phys = physics_for(c);
  std::mt19937_64 rng(2);
  const ZernikeVector truth = aberr::testing::random_coeffs(rng, 0.05);
  const LensTargets t = phys.targets_for(truth);
  const CoeffNormalizer norm = CoeffNormalizer::fit({truth, aberr::testing::random_coeffs(rng, 0.05)});

  nn::Output exact;
  exact.coeffs = norm.normalize(truth);
  exact.wave_map = t.wave_map;
  exact.psf_map = t.psf_map;

  SUBCASE("exact prediction gives zero in every field") {
    const LossBreakdown l = total_loss(exact, t, LossWeights::from_tag("zpm"), norm, phys);
    CHECK(l.coeff == 0.0);
    CHECK(l.wave < 1e-30);
    CHECK(l.psf < 1e-30);
    CHECK(l.map_wave == 0.0);
    CHECK(l.map_psf == 0.0);
    CHECK(l.total < 1e-30);
  }

  nn::Output off = exact;
  for (std::size_t i = 0; i < kNumCoeffs; ++i) off.coeffs[i] += 0.3 * std::sin(1.0 + i);
  for (double& v : off.wave_map) v += 0.01;

  SUBCASE("z weights give exactly the coefficient term") {
    const LossBreakdown l = total_loss(off, t, LossWeights::from_tag("z"), norm, phys, false);
    CHECK(l.total == l.coeff);
    CHECK(l.coeff > 0.0);
  }

  SUBCASE("total is the weighted sum and variants differ by the physics terms") {
    const LossBreakdown zp = total_loss(off, t, LossWeights::from_tag("zp"), norm, phys);
    const LossBreakdown z = total_loss(off, t, LossWeights::from_tag("z"), norm, phys);
    CHECK(zp.total - z.total == doctest::Approx(zp.wave + zp.psf));
    const LossWeights w{0.7, 1.3, 2.1, 0.4};
    const LossBreakdown l = total_loss(off, t, w, norm, phys);
    CHECK(l.total == 0.7 * l.coeff + 1.3 * l.wave + 2.1 * l.psf + 0.4 * (l.map_wave + l.map_psf));
    CHECK(l.map_wave == doctest::Approx(1e-4));
  }

  SUBCASE("missing targets for an enabled term is a configuration error") {
    nn::Output no_maps = off;
    no_maps.wave_map.clear();
    no_maps.psf_map.clear();
    CHECK_THROWS_AS(total_loss(no_maps, t, LossWeights::from_tag("zpm"), norm, phys), ConfigError);
    LensTargets bare = t;
    bare.psf.values = Image();
    CHECK_THROWS_AS(total_loss(off, bare, LossWeights::from_tag("zpp"), norm, phys, false), ConfigError);
  }
}

TEST_CASE("end-to-end gradient matches central differences through the optics layer") {
  Fixture& f = fixture();
  TrainConfig c = small_config();
  TrainedModel m;
  m.weights = LossWeights::from_tag("zpm");
  m.config = c;
  m.spec.input_size = 32;
  m.spec.channels = c.channels;
  m.spec.map_heads = true;
  m.spec.map_size = c.map_size;
  std::vector<ZernikeVector> cs;
  for (const auto& l : f.manifest.lenses) cs.push_back(l.coeffs);
  m.normalizer = CoeffNormalizer::fit(cs);
  m.params = nn::Network(m.spec).init_params(11);
  const PhysicsContext phys = physics_for(c);
  const std::vector<const Sample*> batch{&f.data.samples[0], &f.data.samples[9]};

  const auto g = batch_gradient(m, batch, f.data, phys);
  const auto loss_at = [&](std::size_t k, double h) {
    TrainedModel q = m;
    q.params[k] += h;
    return dataset_loss(q, batch, f.data, phys, false).total;
  };
  // Leaky ReLU has kinks; a coordinate whose one-sided slopes disagree straddles one and is skipped.
  const double h = 1e-6, base = dataset_loss(m, batch, f.data, phys, false).total;
  std::mt19937_64 rng(12);
  int checked = 0;
  for (int t = 0; t < 12; ++t) {
    const std::size_t k = rng() % m.params.size();
    const double up = (loss_at(k, h) - base) / h, down = (base - loss_at(k, -h)) / h;
    if (std::abs(up - down) > 1e-2 * std::max({std::abs(up), std::abs(down), 1e-8})) continue;
    const double fd = 0.5 * (up + down);
    CAPTURE(k);
    CHECK(std::abs(g[k] - fd) <= 1e-3 * std::max({std::abs(fd), std::abs(g[k]), 1e-8}));
    ++checked;
  }
  CHECK(checked >= 10);
}

TEST_CASE("training") {
  Fixture& f = fixture();

  SUBCASE("one epoch on a small fold: history of length one with finite losses") {
    TrainConfig c = small_config();
    c.epochs = 1;
    const TrainResult r = train(f.data, f.folds, 0, LossWeights::from_tag("zpm"), c);
    REQUIRE(r.history.size() == 1);
    CHECK(std::isfinite(r.history[0].train.total));
    CHECK(std::isfinite(r.history[0].heldout.total));
    CHECK(r.history[0].heldout_mae > 0.0);
    CHECK(r.model.spec.map_heads);
    for (const auto& id : f.folds[0])
      CHECK(std::find(r.model.train_lens_ids.begin(), r.model.train_lens_ids.end(), id) == r.model.train_lens_ids.end());
  }

  SUBCASE("deterministic given the seed") {
    const TrainConfig c = small_config();
    const auto a = train(f.data, f.folds, 1, LossWeights::from_tag("zp"), c);
    const auto b = train(f.data, f.folds, 1, LossWeights::from_tag("zp"), c);
    CHECK(a.model.params == b.model.params);
  }

  SUBCASE("z-only training does not depend on the optics configuration") {
    TrainConfig c = small_config();
    const auto a = train(f.data, f.folds, 0, LossWeights::from_tag("z"), c);
    c.physics_pupil_n = 16;
    c.physics_crop = 8;
    c.physics_aperture_fraction = 0.8;
    const auto b = train(f.data, f.folds, 0, LossWeights::from_tag("z"), c);
    CHECK(a.model.params == b.model.params);
    CHECK(a.history.back().train.coeff == b.history.back().train.coeff);
  }

  SUBCASE("invalid fold index") {
    CHECK_THROWS_AS(train(f.data, f.folds, 7, LossWeights::from_tag("z"), small_config()), ArgumentError);
  }
}

TEST_CASE("evaluation") {
  Fixture& f = fixture();
  const TrainResult r = train(f.data, f.folds, 2, LossWeights::from_tag("z"), small_config());

  SUBCASE("protocol guard and empty test set") {
    CHECK_THROWS_AS(evaluate(r.model, f.data, f.folds[0]), ProtocolError);
    CHECK_NOTHROW(evaluate(r.model, f.data, f.folds[0], true));
    CHECK_THROWS_AS(evaluate(r.model, f.data, {}), ArgumentError);
  }

  SUBCASE("Jensen: mae^2 <= mse, and sample order does not matter") {
    const Metrics m = evaluate(r.model, f.data, f.folds[2]);
    CHECK(m.mae * m.mae <= m.mse);
    CHECK(m.samples == f.folds[2].size() * 4);
    TrainingData shuffled = f.data;
    std::mt19937_64 rng(3);
    std::shuffle(shuffled.samples.begin(), shuffled.samples.end(), rng);
    const Metrics s = evaluate(r.model, shuffled, f.folds[2]);
    CHECK(s.mae == doctest::Approx(m.mae).epsilon(1e-14));
    CHECK(s.mse == doctest::Approx(m.mse).epsilon(1e-14));
  }

  SUBCASE("perfect and zero predictors") {
    std::vector<ZernikeVector> truth, zeros;
    double abs_sum = 0;
    for (const auto& l : f.manifest.lenses) {
      truth.push_back(l.coeffs);
      zeros.emplace_back();
      for (double v : l.coeffs.span()) abs_sum += std::abs(v);
    }
    const Metrics perfect = coefficient_metrics(truth, truth);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.mse == 0.0);
    const Metrics zero = coefficient_metrics(zeros, truth);
    CHECK(zero.mae == doctest::Approx(abs_sum / (truth.size() * kNumCoeffs)));
  }
}

TEST_CASE("checkpoint round trip") {
  Fixture& f = fixture();
  const TrainResult r = train(f.data, f.folds, 0, LossWeights::from_tag("zpm"), small_config());
  TempDir dir("ckpt");
  save_checkpoint(dir / "m", r.model);
  const TrainedModel back = load_checkpoint(dir / "m");
  CHECK(back.params == r.model.params);
  CHECK(back.spec.map_heads);
  CHECK(back.spec.channels == r.model.spec.channels);
  CHECK(back.normalizer.mean == r.model.normalizer.mean);
  CHECK(back.normalizer.std == r.model.normalizer.std);
  CHECK(back.train_lens_ids == r.model.train_lens_ids);
  CHECK(back.fold_index == 0);
  CHECK(back.config.to_text() == r.model.config.to_text());
  const nn::Network net(back.spec);
  CHECK(predict(back, net, f.data.samples[0].blurred) == predict(r.model, net, f.data.samples[0].blurred));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), IoError);
}

TEST_CASE("TrainConfig text format") {
  TrainConfig c = small_config();
  c.learning_rate = 0.0123;
  c.cosine_decay = false;
  const TrainConfig back = TrainConfig::parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(TrainConfig::parse("# comment\nepochs = 3\n\nchannels = 2, 4\n").channels == std::vector<std::size_t>{2, 4});
  CHECK_THROWS_AS(TrainConfig::parse("epochz = 3"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("epochs = many"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("epochs 3"), ConfigError);
}

TEST_CASE("desk scale: z-only training lowers the training coefficient loss every epoch for five epochs") {
  TempDir dir("desk");
  const SimConfig sim;  // desk defaults: 64 x 64 patches, 50 per lens
  const auto manifest = generate_dataset(sample_lens_population(20, {}, 1),
                                         ImageSource::procedural(sim.procedural_images, sim.procedural_size, 1), sim,
                                         dir / "ds");
  const TrainingData data = TrainingData::load(manifest);
  std::vector<std::string> ids;
  for (const auto& l : manifest.lenses) ids.push_back(l.lens_id);
  TrainConfig c;  // defaults
  c.epochs = 5;
  c.seed = 1;
  const TrainResult r = train(data, split_lens_folds(ids, 5, 1), 0, LossWeights::from_tag("z"), c);
  REQUIRE(r.history.size() == 5);
  for (std::size_t e = 1; e < 5; ++e) {
    CAPTURE(e);
    CHECK(r.history[e].train.coeff < r.history[e - 1].train.coeff);
  }
}
