#include "softs/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <string>

#include "softs/kernels.hpp"
#include "softs/model.hpp"
#include "softs/train.hpp"

namespace softs {
namespace {

// Reads a "Key:   123 kB" line from /proc/self/status; -1 when unavailable.
long proc_status_kb(const std::string& key) {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + ":", 0) == 0) {
      std::istringstream fields(line.substr(key.size() + 1));
      long kb = -1;
      fields >> kb;
      return kb;
    }
  }
  return -1;
}

// Resets the kernel's peak-RSS watermark to the current RSS (Linux >= 4.0).
void reset_peak_rss() {
  std::ofstream out("/proc/self/clear_refs");
  if (out) out << "5";
}

// One training-mode forward, MSE and backward pass; returns wall-clock ms.
double time_pass(SoftsModel<float>& model, const Tensor& x, const Tensor& y, Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  SoftsModel<float>::Cache cache;
  model.zero_grad();
  const Tensor pred = model.forward(x, true, &rng, &cache);
  Tensor grad;
  mse_loss(pred, y, &grad);
  model.backward(cache, grad);
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  fit.slope = sxx > 0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

BenchReport run_scaling_bench(const BenchOptions& options) {
  if (options.channels.size() < 3) {
    throw Error(ErrorCode::config, "bench: need at least 3 channel counts");
  }
  if (!std::is_sorted(options.channels.begin(), options.channels.end()) ||
      std::adjacent_find(options.channels.begin(), options.channels.end()) !=
          options.channels.end()) {
    throw Error(ErrorCode::config, "bench: channel counts must be strictly ascending");
  }
  if (options.repeat < 1) throw Error(ErrorCode::config, "bench: repeat must be >= 1");

  struct Case {
    SoftsModel<float> model;
    Tensor x, y;
    Rng rng;
    std::vector<double> times;
  };
  std::vector<Case> cases;
  cases.reserve(options.channels.size());

  BenchReport report;
  report.options = options;
  for (const std::size_t channels : options.channels) {
    ModelConfig cfg;
    cfg.lookback = options.lookback;
    cfg.horizon = options.horizon;
    cfg.channels = channels;
    cfg.hidden = options.hidden;
    cfg.core = options.core;
    cfg.layers = options.layers;
    cfg.pooling = options.pooling;
    cfg.seed = options.seed;

    const long rss_before = proc_status_kb("VmRSS");
    reset_peak_rss();
    Case& c = cases.emplace_back(Case{SoftsModel<float>(cfg), Tensor(Shape{options.batch, cfg.lookback, channels}),
                                      Tensor(Shape{options.batch, cfg.horizon, channels}),
                                      Rng(mix_seed(options.seed, channels)), {}});
    for (float& v : c.x.data()) v = static_cast<float>(c.rng.uniform(-1, 1));
    for (float& v : c.y.data()) v = static_cast<float>(c.rng.uniform(-1, 1));
    time_pass(c.model, c.x, c.y, c.rng);  // warm-up: page in buffers and pack paths
    const long peak = proc_status_kb("VmHWM");
    report.rows.push_back({channels, 0.0, (peak >= 0 && rss_before >= 0) ? peak - rss_before : -1});
  }

  // Round-robin over channel counts so slow stretches of a shared machine
  // land on every point rather than on one.
  for (std::size_t r = 0; r < options.repeat; ++r)
    for (Case& c : cases) c.times.push_back(time_pass(c.model, c.x, c.y, c.rng));

  for (std::size_t i = 0; i < cases.size(); ++i) {
    std::vector<double>& times = cases[i].times;
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    report.rows[i].median_ms = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  }

  std::vector<double> xs, ys;
  for (const auto& row : report.rows) {
    xs.push_back(static_cast<double>(row.channels));
    ys.push_back(row.median_ms);
  }
  report.fit = fit_line(xs, ys);
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    report.ratios.push_back(report.rows[i].median_ms / report.rows[i - 1].median_ms);
  return report;
}

nlohmann::json to_json(const BenchReport& report) {
  using nlohmann::json;
  const BenchOptions& o = report.options;
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back(json{{"channels", r.channels},
                        {"median_ms", r.median_ms},
                        {"peak_rss_delta_kb", r.peak_rss_delta_kb}});
  }
  return json{{"config",
               {{"batch", o.batch},
                {"lookback", o.lookback},
                {"horizon", o.horizon},
                {"hidden", o.hidden},
                {"core", o.core},
                {"layers", o.layers},
                {"pooling", std::string(to_string(o.pooling))},
                {"repeat", o.repeat},
                {"threads", kernels::num_threads()}}},
              {"rows", rows},
              {"linear_fit",
               {{"slope_ms_per_channel", report.fit.slope},
                {"intercept_ms", report.fit.intercept},
                {"r2", report.fit.r2}}},
              {"doubling_ratios", report.ratios}};
}

}  // namespace softs
