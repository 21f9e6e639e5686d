#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "softs/checkpoint.hpp"
#include "softs/cli.hpp"
#include "softs/data.hpp"
#include "support.hpp"

using namespace softs;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small, fast training invocation on a synthetic file.
std::vector<std::string> train_args(const test::TempDir& dir, const std::string& out) {
  return {"train",        "--data",   (dir / "syn.csv").string(), "--out", (dir / out).string(),
          "--lookback",   "8",        "--horizon",                "4",     "--hidden",
          "16",           "--core",   "8",                        "--layers", "1",
          "--epochs",     "3",        "--batch-size",             "16",    "--seed",
          "11"};
}

bool single_error_line(const std::string& err, const std::string& code) {
  return err.rfind("error: " + code + ": ", 0) == 0 && err.find('\n') == err.size() - 1;
}

}  // namespace

TEST_CASE("train, evaluate and forecast on a synthetic file") {
  test::TempDir dir;
  test::write_text(dir / "syn.csv", test::synthetic_csv(200, 3));

  const Result trained = run(train_args(dir, "m.ckpt"));
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  const json report = json::parse(trained.out);
  const double val_mse = report["val"]["mse"].get<double>();
  CHECK(std::isfinite(val_mse));
  CHECK(std::filesystem::exists(dir / "m.ckpt"));
  CHECK(std::filesystem::exists(dir / "m.ckpt.history.jsonl"));

  // history: one JSON object per epoch
  std::istringstream history(test::read_text(dir / "m.ckpt.history.jsonl"));
  std::string line;
  std::size_t epochs = 0;
  while (std::getline(history, line)) {
    const json record = json::parse(line);
    CHECK(record.contains("val_mse"));
    CHECK(record.contains("lr"));
    ++epochs;
  }
  CHECK(epochs == report["epochs_run"].get<std::size_t>());

  const LoadedCheckpoint ckpt = load_checkpoint(dir / "m.ckpt");
  CHECK(ckpt.model.config().channels == 3);

  const Result eval = run({"evaluate", "--checkpoint", (dir / "m.ckpt").string(), "--data",
                           (dir / "syn.csv").string(), "--split", "val"});
  REQUIRE_MESSAGE(eval.code == 0, eval.err);
  const json metrics = json::parse(eval.out);
  CHECK(metrics["mse"].get<double>() == val_mse);
  CHECK(metrics["horizon"] == 4);
  CHECK(metrics.contains("mae"));
  CHECK(metrics.contains("windows"));

  const Result fc = run({"forecast", "--checkpoint", (dir / "m.ckpt").string(), "--data",
                         (dir / "syn.csv").string(), "--last-window"});
  REQUIRE_MESSAGE(fc.code == 0, fc.err);
  std::istringstream csv(fc.out);
  const RawDataset parsed = parse_csv(csv, "forecast");
  CHECK(parsed.rows() == 4);
  CHECK(parsed.channel_names == std::vector<std::string>{"ch0", "ch1", "ch2"});

  // --out writes the same CSV to a file
  const Result fc_file = run({"forecast", "--checkpoint", (dir / "m.ckpt").string(), "--data",
                              (dir / "syn.csv").string(), "--out", (dir / "f.csv").string()});
  CHECK(fc_file.code == 0);
  CHECK(test::read_text(dir / "f.csv") == fc.out);
}

TEST_CASE("same config and seed give byte-identical checkpoints") {
  test::TempDir dir;
  test::write_text(dir / "syn.csv", test::synthetic_csv(160, 2));
  REQUIRE(run(train_args(dir, "a.ckpt")).code == 0);
  REQUIRE(run(train_args(dir, "b.ckpt")).code == 0);
  CHECK(test::read_text(dir / "a.ckpt") == test::read_text(dir / "b.ckpt"));
  CHECK(test::read_text(dir / "a.ckpt.history.jsonl") == test::read_text(dir / "b.ckpt.history.jsonl"));
}

TEST_CASE("config file with flag overrides") {
  test::TempDir dir;
  test::write_text(dir / "syn.csv", test::synthetic_csv(160, 2));
  test::write_text(dir / "run.json",
                   json{{"data", (dir / "syn.csv").string()},
                        {"lookback", 8},
                        {"horizon", 4},
                        {"hidden", 8},
                        {"core", 4},
                        {"epochs", 1},
                        {"pooling", "mean"}}
                       .dump());
  const Result r = run({"train", "--config", (dir / "run.json").string(), "--out",
                        (dir / "m.ckpt").string(), "--pooling", "max", "--no-revin"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const ModelConfig mc = load_checkpoint(dir / "m.ckpt").model.config();
  CHECK(mc.pooling == PoolingKind::max);
  CHECK_FALSE(mc.use_revin);
  CHECK(mc.hidden == 8);
}

TEST_CASE("error paths exit nonzero with one machine-readable line and no output file") {
  test::TempDir dir;
  test::write_text(dir / "syn.csv", test::synthetic_csv(160, 2));

  SUBCASE("unknown config key") {
    test::write_text(dir / "typo.json", R"({"leraning_rate": 0.1})");
    const Result r = run({"train", "--config", (dir / "typo.json").string(), "--data",
                          (dir / "syn.csv").string(), "--out", (dir / "m.ckpt").string()});
    CHECK(r.code != 0);
    CHECK(single_error_line(r.err, "E_CONFIG"));
    CHECK(r.err.find("leraning_rate") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "m.ckpt"));
  }
  SUBCASE("dataset too short for the split") {
    auto args = train_args(dir, "m.ckpt");
    *(std::find(args.begin(), args.end(), "--lookback") + 1) = "120";
    const Result r = run(args);
    CHECK(r.code != 0);
    CHECK(single_error_line(r.err, "E_DATA"));
    CHECK_FALSE(std::filesystem::exists(dir / "m.ckpt"));
  }
  SUBCASE("channel count mismatch") {
    auto args = train_args(dir, "m.ckpt");
    args.insert(args.end(), {"--channels", "5"});
    const Result r = run(args);
    CHECK(r.code != 0);
    CHECK(single_error_line(r.err, "E_DATA"));
  }
  SUBCASE("bad flag value") {
    const Result r = run({"train", "--pooling", "median"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(single_error_line(r.err, "E_USAGE"));
  }
  SUBCASE("missing subcommand") {
    CHECK(run({}).code == cli::kExitUsage);
  }
  SUBCASE("corrupted checkpoint") {
    REQUIRE(run(train_args(dir, "m.ckpt")).code == 0);
    std::string bytes = test::read_text(dir / "m.ckpt");
    bytes[bytes.find('\n') + 5] ^= 0x10;
    test::write_text(dir / "bad.ckpt", bytes);
    const Result r = run({"evaluate", "--checkpoint", (dir / "bad.ckpt").string(), "--data",
                          (dir / "syn.csv").string()});
    CHECK(r.code != 0);
    CHECK(single_error_line(r.err, "E_CORRUPTION"));
    CHECK(r.err.find("CRC") != std::string::npos);

    const Result f = run({"forecast", "--checkpoint", (dir / "bad.ckpt").string(), "--data",
                          (dir / "syn.csv").string(), "--out", (dir / "f.csv").string()});
    CHECK(f.code != 0);
    CHECK_FALSE(std::filesystem::exists(dir / "f.csv"));
  }
  SUBCASE("evaluate and forecast on data with other channels") {
    REQUIRE(run(train_args(dir, "m.ckpt")).code == 0);
    test::write_text(dir / "three.csv", test::synthetic_csv(160, 3));
    const Result e = run({"evaluate", "--checkpoint", (dir / "m.ckpt").string(), "--data",
                          (dir / "three.csv").string()});
    CHECK(e.code != 0);
    CHECK(single_error_line(e.err, "E_DATA"));
    const Result f = run({"forecast", "--checkpoint", (dir / "m.ckpt").string(), "--data",
                          (dir / "three.csv").string()});
    CHECK(f.code != 0);
  }
  SUBCASE("forecast needs a full window") {
    REQUIRE(run(train_args(dir, "m.ckpt")).code == 0);
    test::write_text(dir / "short.csv", test::synthetic_csv(5, 2));
    const Result f = run({"forecast", "--checkpoint", (dir / "m.ckpt").string(), "--data",
                          (dir / "short.csv").string()});
    CHECK(f.code != 0);
    CHECK(single_error_line(f.err, "E_DATA"));
  }
}

TEST_CASE("forecast from a zero-parameter model repeats the raw window mean") {
  test::TempDir dir;
  const std::string csv = test::synthetic_csv(40, 2);
  test::write_text(dir / "syn.csv", csv);
  ModelConfig mc;
  mc.lookback = 6;
  mc.horizon = 3;
  mc.channels = 2;
  mc.hidden = 4;
  mc.core = 2;
  SoftsModel<float> model(mc);
  for (auto& p : model.parameters())
    for (float& v : p.tensor->data()) v = 0.0f;
  std::istringstream in(csv);
  const RawDataset raw = parse_csv(in);
  save_checkpoint(dir / "zero.ckpt", model, {fit_scaler(raw, {0, 20}), std::nullopt});

  const Result r = run({"forecast", "--checkpoint", (dir / "zero.ckpt").string(), "--data",
                        (dir / "syn.csv").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream out(r.out);
  const RawDataset fc = parse_csv(out);
  REQUIRE(fc.rows() == 3);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t t = 34; t < 40; ++t) mean += raw.at(t, c) / 6.0;
    for (std::size_t h = 0; h < 3; ++h) CHECK(fc.at(h, c) == doctest::Approx(mean).epsilon(1e-5));
  }
}

TEST_CASE("bench prints one row per channel count and a linear fit") {
  test::TempDir dir;
  const Result r = run({"bench", "--channels", "4,8,16", "--repeat", "1", "--lookback", "8",
                        "--horizon", "8", "--hidden", "8", "--core", "4", "--batch", "2",
                        "--out", (dir / "bench.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json report = json::parse(r.out);
  REQUIRE(report["rows"].size() == 3);
  CHECK(report["rows"][2]["channels"] == 16);
  CHECK(report["rows"][0].contains("median_ms"));
  CHECK(report["rows"][0].contains("peak_rss_delta_kb"));
  CHECK(report["linear_fit"].contains("r2"));
  CHECK(report["doubling_ratios"].size() == 2);
  CHECK(json::parse(test::read_text(dir / "bench.json")) == report);

  CHECK(run({"bench", "--channels", "8,4,16"}).code != 0);
  CHECK(run({"bench", "--channels", "4,8"}).code != 0);
}

TEST_CASE("the installed binary runs end to end") {
  test::TempDir dir;
  test::write_text(dir / "syn.csv", test::synthetic_csv(120, 2));
  const std::string binary = SOFTS_CLI_BINARY;
  const std::string common = " --data " + (dir / "syn.csv").string() +
                             " --lookback 8 --horizon 4 --hidden 8 --core 4 --epochs 1";
  CHECK(std::system((binary + " train" + common + " --out " + (dir / "m.ckpt").string() +
                     " > /dev/null 2>&1")
                        .c_str()) == 0);
  CHECK(std::filesystem::exists(dir / "m.ckpt"));
  CHECK(std::system((binary + " evaluate --checkpoint " + (dir / "nope.ckpt").string() +
                     " --data " + (dir / "syn.csv").string() + " > /dev/null 2>&1")
                        .c_str()) != 0);
  CHECK(std::system((binary + " --help > /dev/null").c_str()) == 0);
}
