#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <sstream>

#include "aberr/io.hpp"
#include "aberr/regressor.hpp"
#include "aberr/run_manifest.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace aberr;
using aberr::testing::TempDir;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result aberr_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

json read_json(const std::filesystem::path& p) { return json::parse(io::read_text(p)); }

constexpr const char* kSmallTrain =
    "epochs = 2\nbatch_size = 4\nchannels = 4, 8, 8, 8\nmap_size = 8\nphysics_pupil_n = 32\nphysics_crop = 16\n";

// One small end-to-end pipeline shared by the cases below.
struct Pipeline {
  TempDir dir{"cli"};
  std::string p(const std::string& rel) const { return (dir / rel).string(); }

  Pipeline() {
    io::write_text(dir / "small.cfg", kSmallTrain);
    REQUIRE(aberr_cli({"gen-lenses", "--count", "6", "--seed", "1", "--out", p("lenses")}).code == 0);
    REQUIRE(aberr_cli({"simulate", "--lenses", p("lenses/lenses.csv"), "--procedural", "--procedural-count", "2",
                 "--procedural-size", "64", "--patch", "32", "--patches-per-lens", "3", "--pupil-n", "32", "--crop",
                 "16", "--seed", "2", "--out", p("ds")})
                .code == 0);
    REQUIRE(aberr_cli({"split-folds", "--dataset", p("ds"), "--k", "3", "--seed", "3", "--out", p("folds")}).code == 0);
  }

  Result train(const std::string& loss, const std::string& out, const std::string& fold = "0") const {
    return aberr_cli({"train", "--dataset", p("ds"), "--folds", p("folds/folds.json"), "--fold", fold, "--loss", loss,
                "--config", p("small.cfg"), "--seed", "4", "--out", p(out)});
  }
};

Pipeline& pipeline() {
  static Pipeline pl;
  return pl;
}

}  // namespace

TEST_CASE("gen-lenses") {
  TempDir dir("cli");
  const Result r = aberr_cli({"gen-lenses", "--count", "109", "--seed", "7", "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  CHECK(io::read_lens_csv(dir / "a" / "lenses.csv").size() == 109);
  CHECK(aberr_cli({"gen-lenses", "--count", "109", "--seed", "7", "--out", (dir / "b").string()}).code == 0);
  CHECK(io::read_text(dir / "a" / "lenses.csv") == io::read_text(dir / "b" / "lenses.csv"));

  CHECK(aberr_cli({"gen-lenses", "--count", "0", "--seed", "7", "--out", (dir / "c").string()}).code == cli::kExitUsage);
  CHECK(aberr_cli({"gen-lenses", "--count", "3", "--out", (dir / "d").string()}).code == cli::kExitUsage);
  CHECK(aberr_cli({"no-such-command"}).code == cli::kExitUsage);
  CHECK(aberr_cli({"--help"}).code == 0);

  const RunManifest m = read_run_manifest(dir / "a" / kRunManifestName);
  CHECK(m.command == "gen-lenses");
  CHECK(m.seeds.at("seed") == 7);
  CHECK(m.outputs == std::vector<std::string>{"lenses.csv"});
}

TEST_CASE("simulate") {
  TempDir dir("cli");
  REQUIRE(aberr_cli({"gen-lenses", "--count", "20", "--seed", "1", "--out", (dir / "l").string()}).code == 0);

  SUBCASE("missing lens file is an I/O error that names the path") {
    const std::string missing = (dir / "nope.csv").string();
    const Result r = aberr_cli({"simulate", "--lenses", missing, "--procedural", "--seed", "1", "--out", (dir / "x").string()});
    CHECK(r.code == cli::kExitIo);
    CHECK(r.err.find(missing) != std::string::npos);
  }

  SUBCASE("desk defaults give 20 x 50 samples") {
    const Result r = aberr_cli({"simulate", "--lenses", (dir / "l" / "lenses.csv").string(), "--procedural", "--seed", "1",
                          "--out", (dir / "ds").string()});
    REQUIRE(r.code == 0);
    CHECK(count_lines(io::read_text(dir / "ds" / "manifest.jsonl")) == 1000);
    const Sample s = load_sample(load_dataset(dir / "ds"), load_dataset(dir / "ds").samples[0]);
    CHECK(s.blurred.rows() == 64);
  }

  SUBCASE("large patches") {
    REQUIRE(aberr_cli({"gen-lenses", "--count", "1", "--seed", "1", "--out", (dir / "one").string()}).code == 0);
    const Result r = aberr_cli({"simulate", "--lenses", (dir / "one" / "lenses.csv").string(), "--procedural",
                          "--procedural-count", "1", "--procedural-size", "300", "--patch", "256", "--patches-per-lens",
                          "1", "--pupil-n", "32", "--crop", "16", "--seed", "1", "--out", (dir / "big").string()});
    REQUIRE(r.code == 0);
    const DatasetManifest m = load_dataset(dir / "big");
    CHECK(load_sample(m, m.samples[0]).blurred.cols() == 256);
  }

  SUBCASE("both or neither image source is a usage error") {
    CHECK(aberr_cli({"simulate", "--lenses", (dir / "l" / "lenses.csv").string(), "--seed", "1", "--out",
               (dir / "y").string()})
              .code == cli::kExitUsage);
  }
}

TEST_CASE("train") {
  Pipeline& pl = pipeline();
  REQUIRE(pl.train("z", "train_z").code == 0);
  const TrainedModel z = load_checkpoint(pl.dir / "train_z" / "model");
  CHECK(z.weights.lambda_z == 1.0);
  CHECK(z.weights.lambda_p_wave == 0.0);
  CHECK(z.weights.lambda_p_psf == 0.0);
  CHECK(z.weights.lambda_m == 0.0);
  CHECK_FALSE(z.spec.map_heads);
  CHECK(count_lines(io::read_text(pl.dir / "train_z" / "history.jsonl")) == 2);
  CHECK(read_json(pl.dir / "train_z" / "train.json").at("loss") == "z");

  REQUIRE(pl.train("zpm", "train_zpm").code == 0);
  CHECK(load_checkpoint(pl.dir / "train_zpm" / "model").spec.map_heads);

  CHECK(pl.train("bogus", "train_bad").code == cli::kExitUsage);
  CHECK(pl.train("z", "train_badfold", "9").code == cli::kExitUsage);
  io::write_text(pl.dir / "bad.cfg", "epochz = 1\n");
  CHECK(aberr_cli({"train", "--dataset", pl.p("ds"), "--folds", pl.p("folds/folds.json"), "--fold", "0", "--config",
             pl.p("bad.cfg"), "--seed", "1", "--out", pl.p("train_badcfg")})
            .code == cli::kExitUsage);
}

TEST_CASE("eval and the protocol guard") {
  Pipeline& pl = pipeline();
  if (!std::filesystem::exists(pl.dir / "train_z" / "model")) REQUIRE(pl.train("z", "train_z").code == 0);
  const std::string model = pl.p("train_z/model");

  const Result ok = aberr_cli({"eval", "--model", model, "--dataset", pl.p("ds"), "--folds", pl.p("folds/folds.json"),
                         "--out", pl.p("eval_ok")});
  REQUIRE(ok.code == 0);
  const json m = read_json(pl.dir / "eval_ok" / "metrics.json");
  CHECK(m.at("variant") == "z");
  CHECK(m.at("fold_index") == 0);
  CHECK(m.at("mae").get<double>() > 0.0);
  CHECK(std::filesystem::exists(pl.dir / "eval_ok" / "wavefront_triptych.pgm"));
  CHECK(std::filesystem::exists(pl.dir / "eval_ok" / "psf_triptych.pgm.json"));

  const TrainedModel tm = load_checkpoint(model);
  const std::string leaked = tm.train_lens_ids.front();
  const Result guard = aberr_cli({"eval", "--model", model, "--dataset", pl.p("ds"), "--test-lenses", leaked, "--out",
                            pl.p("eval_leak")});
  CHECK(guard.code == cli::kExitUsage);
  CHECK(guard.err.find(leaked) != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(pl.dir / "eval_leak" / "metrics.json"));

  const Result allowed = aberr_cli({"eval", "--model", model, "--dataset", pl.p("ds"), "--test-lenses", leaked,
                              "--allow-leak", "--out", pl.p("eval_allowed")});
  REQUIRE(allowed.code == 0);
  CHECK(read_run_manifest(pl.dir / "eval_allowed" / kRunManifestName).leak_allowed);
  CHECK_FALSE(read_run_manifest(pl.dir / "eval_ok" / kRunManifestName).leak_allowed);

  SUBCASE("report skips leak-watermarked runs and aggregates the rest per variant") {
    REQUIRE(pl.train("zp", "train_zp", "1").code == 0);
    REQUIRE(aberr_cli({"eval", "--model", pl.p("train_zp/model"), "--dataset", pl.p("ds"), "--folds",
                 pl.p("folds/folds.json"), "--out", pl.p("eval_zp")})
                .code == 0);
    const Result r = aberr_cli({"report", "--runs", pl.p("eval_ok"), pl.p("eval_zp"), pl.p("eval_allowed"), "--out",
                          pl.p("report")});
    REQUIRE(r.code == 0);
    const std::string csv = io::read_text(pl.dir / "report" / "table1.csv");
    CHECK(count_lines(csv) == 3);
    CHECK(csv.find("\nz,") != std::string::npos);
    CHECK(csv.find("\nzp,") != std::string::npos);
    CHECK(csv.find("z,\"z (coefficients only)\",1,") != std::string::npos);
    CHECK(r.out.find("+-") != std::string::npos);
    CHECK(r.out.find("1 leak-watermarked") != std::string::npos);
  }
}

TEST_CASE("recover") {
  Pipeline& pl = pipeline();
  const Result r = aberr_cli({"recover", "--lenses", pl.p("lenses/lenses.csv"), "--lens", "L002", "--pupil-n", "32",
                        "--starts", "2", "--max-iters", "60", "--seed", "5", "--out", pl.p("rec")});
  REQUIRE(r.code == 0);
  std::istringstream trace(io::read_text(pl.dir / "rec" / "trace.jsonl"));
  double prev = 1e300;
  std::size_t n = 0;
  for (std::string line; std::getline(trace, line); ++n) {
    const double loss = json::parse(line).at("loss").get<double>();
    CHECK(loss <= prev);
    prev = loss;
  }
  CHECK(n > 0);
  const json res = read_json(pl.dir / "rec" / "result.json");
  CHECK(res.contains("mae"));
  CHECK(io::read_lens_csv(pl.dir / "rec" / "recovered.csv").size() == 1);

  CHECK(aberr_cli({"recover", "--seed", "1", "--out", pl.p("rec_bad")}).code == cli::kExitUsage);
  CHECK(aberr_cli({"recover", "--psf", pl.p("missing.abr"), "--seed", "1", "--out", pl.p("rec_missing")}).code ==
        cli::kExitIo);
}

TEST_CASE("restore") {
  Pipeline& pl = pipeline();
  const Result r = aberr_cli({"restore", "--dataset", pl.p("ds"), "--source", "truth", "--lenses", "L000,L001",
                        "--max-per-lens", "2", "--seed", "1", "--out", pl.p("restore_truth")});
  REQUIRE(r.code == 0);
  CHECK(count_lines(io::read_text(pl.dir / "restore_truth" / "reports.jsonl")) == 4);
  const json s = read_json(pl.dir / "restore_truth" / "restore.json");
  CHECK(s.at("mean_oracle_gap").get<double>() == 0.0);

  if (!std::filesystem::exists(pl.dir / "train_z" / "model")) REQUIRE(pl.train("z", "train_z").code == 0);
  const TrainedModel tm = load_checkpoint(pl.dir / "train_z" / "model");
  CHECK(aberr_cli({"restore", "--dataset", pl.p("ds"), "--source", "model", "--model", pl.p("train_z/model"), "--lenses",
             tm.train_lens_ids.front(), "--seed", "1", "--out", pl.p("restore_leak")})
            .code == cli::kExitUsage);
  CHECK(aberr_cli({"restore", "--dataset", pl.p("ds"), "--source", "model", "--model", pl.p("train_z/model"), "--folds",
             pl.p("folds/folds.json"), "--fold", "0", "--max-per-lens", "1", "--seed", "1", "--out",
             pl.p("restore_model")})
            .code == 0);
  CHECK(aberr_cli({"restore", "--dataset", pl.p("ds"), "--source", "guess", "--lenses", "L000", "--seed", "1", "--out",
             pl.p("restore_bad")})
            .code == cli::kExitUsage);
}

TEST_CASE("rerun reproduces every subcommand bitwise") {
  Pipeline& pl = pipeline();
  if (!std::filesystem::exists(pl.dir / "train_z" / "model")) REQUIRE(pl.train("z", "train_z").code == 0);
  REQUIRE(aberr_cli({"recover", "--lenses", pl.p("lenses/lenses.csv"), "--lens", "L001", "--pupil-n", "32", "--starts", "1",
               "--max-iters", "20", "--seed", "5", "--out", pl.p("rec2")})
              .code == 0);
  for (const char* run : {"lenses", "ds", "folds", "train_z", "rec2"}) {
    CAPTURE(run);
    const Result r = aberr_cli({"rerun", "--manifest", pl.p(std::string(run) + "/" + kRunManifestName), "--verify", "--out",
                          pl.p(std::string("rerun_") + run)});
    CHECK(r.code == 0);
    CHECK(r.err.empty());
  }

  // Tampering with an output is detected.
  io::write_text(pl.dir / "lenses" / "lenses.csv", "lens_id\n");
  CHECK(aberr_cli({"rerun", "--manifest", pl.p(std::string("lenses/") + kRunManifestName), "--verify", "--out",
             pl.p("rerun_tampered")})
            .code == cli::kExitNumerical);
}

TEST_CASE("exit code mapping") {
  CHECK(cli::exit_code_for(ErrorKind::argument) == 2);
  CHECK(cli::exit_code_for(ErrorKind::config) == 2);
  CHECK(cli::exit_code_for(ErrorKind::protocol) == 2);
  CHECK(cli::exit_code_for(ErrorKind::io) == 3);
  CHECK(cli::exit_code_for(ErrorKind::numerical) == 4);
  CHECK(cli::variant_tag(LossWeights::from_tag("zpp")) == "zpp");
  CHECK(cli::variant_tag(LossWeights{2, 0, 0, 0}) == "custom");
}
