#include "softs/cli.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "softs/bench.hpp"
#include "softs/checkpoint.hpp"
#include "softs/config.hpp"
#include "softs/data.hpp"
#include "softs/error.hpp"
#include "softs/kernels.hpp"
#include "softs/model.hpp"
#include "softs/train.hpp"

namespace softs::cli {
namespace {

using nlohmann::json;

// Model and training flags shared by `train` (and partly `bench`). Each
// option records whether it was given so that flags override a --config file
// only when present.
struct RunFlags {
  std::string config, data, out;
  std::uint64_t seed = 0;
  std::size_t lookback = 0, horizon = 0, channels = 0, hidden = 0, core = 0, layers = 0;
  std::string pooling;
  bool revin = true, baseline = false;
  double learning_rate = 0;
  std::size_t epochs = 0, batch_size = 0, patience = 0;
  std::string split_counts, split_ratios;
  int threads = 0;

  CLI::App* app = nullptr;

  void attach(CLI::App* sub) {
    app = sub;
    sub->add_option("--config", config, "JSON run config; flags override its keys");
    sub->add_option("--data", data, "input CSV");
    sub->add_option("--out", out, "checkpoint path");
    sub->add_option("--seed", seed, "seed for init, shuffling and pooling");
    sub->add_option("--lookback", lookback, "lookback window L");
    sub->add_option("--horizon", horizon, "forecast horizon H");
    sub->add_option("--channels", channels, "expected channel count (default: from data)");
    sub->add_option("--hidden", hidden, "series embedding width d");
    sub->add_option("--core", core, "core width d'");
    sub->add_option("--layers", layers, "number of STAR blocks N");
    sub->add_option("--pooling", pooling, "core pooling")
        ->check(CLI::IsMember({"mean", "max", "weighted", "stochastic"}));
    sub->add_flag("--revin,!--no-revin", revin, "reversible instance normalization");
    sub->add_flag("--baseline,!--no-baseline", baseline, "replace STAR by a per-channel MLP");
    sub->add_option("--learning-rate,--learning_rate", learning_rate, "Adam learning rate");
    sub->add_option("--epochs", epochs, "maximum epochs");
    sub->add_option("--batch-size,--batch_size", batch_size, "batch size");
    sub->add_option("--patience", patience, "early stopping patience");
    sub->add_option("--split-counts,--split_counts", split_counts, "train,val,test point counts");
    sub->add_option("--split-ratios,--split_ratios", split_ratios, "train,val,test ratios");
    sub->add_option("--threads", threads, "worker threads (0 = OpenMP default)");
  }

  bool given(const std::string& name) const { return app->count(name) > 0; }

  void apply(RunConfig& cfg) const {
    if (given("--data")) cfg.data = data;
    if (given("--out")) cfg.out = out;
    if (given("--seed")) cfg.set_seed(seed);
    if (given("--lookback")) cfg.model.lookback = lookback;
    if (given("--horizon")) cfg.model.horizon = horizon;
    if (given("--channels")) cfg.channels = channels;
    if (given("--hidden")) cfg.model.hidden = hidden;
    if (given("--core")) cfg.model.core = core;
    if (given("--layers")) cfg.model.layers = layers;
    if (given("--pooling")) cfg.model.pooling = *parse_pooling(pooling);
    if (given("--revin")) cfg.model.use_revin = revin;
    if (given("--baseline")) cfg.model.baseline = baseline;
    if (given("--learning-rate")) cfg.train.learning_rate = learning_rate;
    if (given("--epochs")) cfg.train.epochs = epochs;
    if (given("--batch-size")) cfg.train.batch_size = batch_size;
    if (given("--patience")) cfg.train.patience = patience;
    if (given("--split-counts")) cfg.split = parse_split_counts(split_counts);
    if (given("--split-ratios")) cfg.split = parse_split_ratios(split_ratios);
    if (given("--threads")) cfg.threads = threads;
  }

  static SplitSpec parse_split_counts(const std::string& text) {
    const auto v = parse_number_list(text);
    if (v.size() != 3) throw Error(ErrorCode::config, "--split-counts needs three values");
    SplitSpec spec;
    std::array<std::size_t, 3> counts{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (v[i] < 0 || v[i] != std::floor(v[i])) {
        throw Error(ErrorCode::config, "--split-counts entries must be non-negative integers");
      }
      counts[i] = static_cast<std::size_t>(v[i]);
    }
    spec.counts = counts;
    return spec;
  }

  static SplitSpec parse_split_ratios(const std::string& text) {
    const auto v = parse_number_list(text);
    if (v.size() != 3) throw Error(ErrorCode::config, "--split-ratios needs three values");
    SplitSpec spec;
    spec.ratios = {v[0], v[1], v[2]};
    return spec;
  }
};

void apply_threads(int threads) {
  if (threads < 0) throw Error(ErrorCode::config, "threads must be >= 0");
  if (threads > 0) kernels::set_num_threads(threads);
}

void require_channels(std::size_t expected, const RawDataset& data, const std::string& source) {
  if (data.channels() != expected) {
    throw Error(ErrorCode::data, source + " has " + std::to_string(data.channels()) +
                                     " channels, expected " + std::to_string(expected));
  }
}

json metrics_json(const Metrics& m) {
  return json{{"mse", m.mse}, {"mae", m.mae}, {"windows", m.windows}};
}

int cmd_train(const RunFlags& flags, std::ostream& out, std::ostream& err) {
  RunConfig cfg = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
  flags.apply(cfg);
  if (cfg.data.empty()) throw Error(ErrorCode::config, "train: --data is required");
  if (cfg.out.empty()) throw Error(ErrorCode::config, "train: --out is required");
  apply_threads(cfg.threads);

  const RawDataset raw = load_csv(cfg.data);
  if (cfg.channels != 0) require_channels(cfg.channels, raw, cfg.data);
  cfg.model.channels = raw.channels();
  cfg.model.validate();
  cfg.train.validate();

  const PreparedData prepared = prepare(raw, cfg.split, cfg.model.lookback, cfg.model.horizon);
  SoftsModel<float> model(cfg.model);

  std::string history;
  const TrainResult result = fit(model, prepared, cfg.train, [&](const EpochRecord& r) {
    history += json{{"epoch", r.epoch},
                    {"lr", r.lr},
                    {"train_loss", r.train_loss},
                    {"val_mse", r.val_mse},
                    {"val_mae", r.val_mae}}
                   .dump();
    history += '\n';
    err << "epoch " << r.epoch << "  lr " << r.lr << "  train " << r.train_loss << "  val_mse "
        << r.val_mse << "  val_mae " << r.val_mae << '\n';
  });
  const Metrics val = evaluate(model, prepared.scaled, prepared.ranges.val);

  const std::string history_path = cfg.out + ".history.jsonl";
  write_file_atomic(history_path, history);
  save_checkpoint(cfg.out, model, CheckpointMeta{prepared.scaler, cfg.split});

  out << json{{"checkpoint", cfg.out},
              {"history", history_path},
              {"best_epoch", result.best_epoch},
              {"epochs_run", result.history.size()},
              {"stopped_early", result.stopped_early},
              {"parameters", model.count_params()},
              {"val", metrics_json(val)}}
             .dump()
      << '\n';
  return kExitOk;
}

struct EvalFlags {
  std::string checkpoint, data, split = "test", split_counts, split_ratios;
  std::size_t batch_size = 64;
  int threads = 0;
  CLI::App* app = nullptr;
};

// Standardizes `raw` with the checkpoint's stored statistics (or returns it
// unchanged for checkpoints that carry none).
RawDataset to_model_units(const RawDataset& raw, const CheckpointMeta& meta) {
  return meta.scaler ? apply_scaler(raw, *meta.scaler) : raw;
}

int cmd_evaluate(const EvalFlags& flags, std::ostream& out) {
  if (flags.checkpoint.empty()) throw Error(ErrorCode::config, "evaluate: --checkpoint is required");
  if (flags.data.empty()) throw Error(ErrorCode::config, "evaluate: --data is required");
  if (flags.batch_size == 0) throw Error(ErrorCode::config, "evaluate: --batch-size must be >= 1");
  apply_threads(flags.threads);

  const LoadedCheckpoint ckpt = load_checkpoint(flags.checkpoint);
  const ModelConfig& mc = ckpt.model.config();
  const RawDataset raw = load_csv(flags.data);
  require_channels(mc.channels, raw, flags.data);

  SplitSpec spec = ckpt.meta.split.value_or(SplitSpec{});
  if (flags.app->count("--split-counts")) spec = RunFlags::parse_split_counts(flags.split_counts);
  if (flags.app->count("--split-ratios")) spec = RunFlags::parse_split_ratios(flags.split_ratios);
  const SplitRanges ranges = split(raw.rows(), spec, mc.lookback, mc.horizon);
  const IndexRange range = flags.split == "train" ? ranges.train
                           : flags.split == "val" ? ranges.val
                                                  : ranges.test;

  const Metrics m = evaluate(ckpt.model, to_model_units(raw, ckpt.meta), range, flags.batch_size);
  json report = metrics_json(m);
  report["horizon"] = mc.horizon;
  report["split"] = flags.split;
  out << report.dump() << '\n';
  return kExitOk;
}

struct ForecastFlags {
  std::string checkpoint, data, out;
  bool raw_units = true;
  int threads = 0;
};

int cmd_forecast(const ForecastFlags& flags, std::ostream& out) {
  if (flags.checkpoint.empty()) throw Error(ErrorCode::config, "forecast: --checkpoint is required");
  if (flags.data.empty()) throw Error(ErrorCode::config, "forecast: --data is required");
  apply_threads(flags.threads);

  const LoadedCheckpoint ckpt = load_checkpoint(flags.checkpoint);
  const ModelConfig& mc = ckpt.model.config();
  const RawDataset raw = load_csv(flags.data);
  require_channels(mc.channels, raw, flags.data);
  if (raw.rows() < mc.lookback) {
    throw Error(ErrorCode::data, flags.data + " has " + std::to_string(raw.rows()) +
                                     " rows, the model needs a lookback of " +
                                     std::to_string(mc.lookback));
  }

  const RawDataset scaled = to_model_units(raw, ckpt.meta);
  const std::size_t c = mc.channels;
  const std::size_t first = raw.rows() - mc.lookback;
  Tensor x(Shape{1, mc.lookback, c});
  for (std::size_t t = 0; t < mc.lookback; ++t)
    for (std::size_t j = 0; j < c; ++j) x.at(0, t, j) = scaled.at(first + t, j);
  const Tensor y = ckpt.model.forward(x, false, nullptr);

  std::ostringstream csv;
  csv << std::setprecision(9) << "date";
  for (const auto& name : raw.channel_names) csv << ',' << name;
  csv << '\n';
  for (std::size_t h = 0; h < mc.horizon; ++h) {
    csv << '+' << (h + 1);
    for (std::size_t j = 0; j < c; ++j) {
      float v = y.at(0, h, j);
      if (flags.raw_units && ckpt.meta.scaler) v = ckpt.meta.scaler->inverse(v, j);
      csv << ',' << v;
    }
    csv << '\n';
  }
  if (flags.out.empty()) {
    out << csv.str();
  } else {
    write_file_atomic(flags.out, csv.str());
  }
  return kExitOk;
}

struct BenchFlags {
  std::string channels, pooling = "stochastic", out;
  std::size_t repeat = 7, batch = 16, lookback = 96, horizon = 720, hidden = 256, core = 128,
              layers = 2;
  std::uint64_t seed = 2024;
  int threads = 0;
  CLI::App* app = nullptr;
};

int cmd_bench(const BenchFlags& flags, std::ostream& out) {
  apply_threads(flags.threads);
  BenchOptions options;
  if (flags.app->count("--channels")) {
    options.channels.clear();
    for (double v : parse_number_list(flags.channels)) {
      if (v < 1 || v != std::floor(v)) {
        throw Error(ErrorCode::config, "bench: channel counts must be positive integers");
      }
      options.channels.push_back(static_cast<std::size_t>(v));
    }
  }
  options.repeat = flags.repeat;
  options.batch = flags.batch;
  options.lookback = flags.lookback;
  options.horizon = flags.horizon;
  options.hidden = flags.hidden;
  options.core = flags.core;
  options.layers = flags.layers;
  options.pooling = *parse_pooling(flags.pooling);
  options.seed = flags.seed;

  const std::string report = to_json(run_scaling_bench(options)).dump(2) + "\n";
  if (!flags.out.empty()) write_file_atomic(flags.out, report);
  out << report;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SOFTS multivariate time-series forecaster", "softs"};
  app.require_subcommand(1);

  RunFlags train;
  train.attach(app.add_subcommand("train", "fit a model and write a checkpoint"));

  EvalFlags eval;
  eval.app = app.add_subcommand("evaluate", "MSE/MAE of a checkpoint on one split (standardized units)");
  eval.app->add_option("--checkpoint,--model", eval.checkpoint, "checkpoint file");
  eval.app->add_option("--data", eval.data, "input CSV");
  eval.app->add_option("--split", eval.split, "which split to score")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval.app->add_option("--split-counts,--split_counts", eval.split_counts,
                       "override the stored split with point counts");
  eval.app->add_option("--split-ratios,--split_ratios", eval.split_ratios,
                       "override the stored split with ratios");
  eval.app->add_option("--batch-size,--batch_size", eval.batch_size, "evaluation batch size");
  eval.app->add_option("--threads", eval.threads, "worker threads (0 = OpenMP default)");

  ForecastFlags fc;
  CLI::App* fc_app = app.add_subcommand("forecast", "predict the H steps after the last window");
  fc_app->add_option("--checkpoint,--model", fc.checkpoint, "checkpoint file");
  fc_app->add_option("--data", fc.data, "input CSV (at least L rows)");
  fc_app->add_option("--out", fc.out, "output CSV (default: stdout)");
  fc_app->add_flag("--last-window", "forecast from the final L rows (the default)");
  fc_app->add_flag("--raw-units,!--standardized", fc.raw_units,
                   "undo the dataset standardization (default on)");
  fc_app->add_option("--threads", fc.threads, "worker threads (0 = OpenMP default)");

  BenchFlags bench;
  bench.app = app.add_subcommand("bench", "time forward+backward passes against channel count");
  bench.app->add_option("--channels", bench.channels, "ascending channel counts, e.g. 64,128,256");
  bench.app->add_option("--repeat", bench.repeat, "timed passes per channel count");
  bench.app->add_option("--batch", bench.batch, "batch size");
  bench.app->add_option("--lookback", bench.lookback, "lookback window L");
  bench.app->add_option("--horizon", bench.horizon, "forecast horizon H");
  bench.app->add_option("--hidden", bench.hidden, "series embedding width d");
  bench.app->add_option("--core", bench.core, "core width d'");
  bench.app->add_option("--layers", bench.layers, "number of STAR blocks N");
  bench.app->add_option("--pooling", bench.pooling, "core pooling")
      ->check(CLI::IsMember({"mean", "max", "weighted", "stochastic"}));
  bench.app->add_option("--seed", bench.seed, "seed for the synthetic model and data");
  bench.app->add_option("--threads", bench.threads, "worker threads (0 = OpenMP default)");
  bench.app->add_option("--out", bench.out, "also write the JSON report here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: E_USAGE: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train, out, err);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(eval, out);
    if (app.got_subcommand("forecast")) return cmd_forecast(fc, out);
    return cmd_bench(bench, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
  } catch (const std::bad_alloc&) {
    err << "error: E_ALLOC: out of memory\n";
  } catch (const std::exception& e) {
    err << "error: E_INTERNAL: " << e.what() << '\n';
  }
  return kExitFailure;
}

}  // namespace softs::cli
