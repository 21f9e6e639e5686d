#include "softs/config.hpp"

#include <charconv>
#include <fstream>
#include <set>

namespace softs {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::config, "config key \"" + key + "\": " + what);
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) bad(key, "expected a non-negative integer");
  return v.get<std::size_t>();
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

PoolingKind get_pooling(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, "expected one of mean, max, weighted, stochastic");
  const auto kind = parse_pooling(v.get<std::string>());
  if (!kind) bad(key, "unknown pooling \"" + v.get<std::string>() + "\"");
  return *kind;
}

template <typename Fn>
void for_each_known(const json& doc, const std::set<std::string>& known, const char* what, Fn&& fn) {
  if (!doc.is_object()) throw Error(ErrorCode::config, std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorCode::config, std::string("unknown ") + what + " key \"" + key + "\"");
    }
    fn(key, value);
  }
}

}  // namespace

void RunConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
}

json to_json(const ModelConfig& cfg) {
  return json{{"lookback", cfg.lookback}, {"horizon", cfg.horizon},
              {"channels", cfg.channels}, {"hidden", cfg.hidden},
              {"core", cfg.core},         {"layers", cfg.layers},
              {"pooling", std::string(to_string(cfg.pooling))},
              {"revin", cfg.use_revin},   {"baseline", cfg.baseline},
              {"seed", cfg.seed}};
}

ModelConfig model_config_from_json(const json& doc) {
  static const std::set<std::string> known = {"lookback", "horizon", "channels", "hidden",
                                              "core",     "layers",  "pooling",  "revin",
                                              "baseline", "seed"};
  ModelConfig cfg;
  for_each_known(doc, known, "model config", [&](const std::string& key, const json& v) {
    if (key == "lookback") cfg.lookback = get_count(v, key);
    else if (key == "horizon") cfg.horizon = get_count(v, key);
    else if (key == "channels") cfg.channels = get_count(v, key);
    else if (key == "hidden") cfg.hidden = get_count(v, key);
    else if (key == "core") cfg.core = get_count(v, key);
    else if (key == "layers") cfg.layers = get_count(v, key);
    else if (key == "pooling") cfg.pooling = get_pooling(v, key);
    else if (key == "revin") cfg.use_revin = get_bool(v, key);
    else if (key == "baseline") cfg.baseline = get_bool(v, key);
    else if (key == "seed") cfg.seed = get_count(v, key);
  });
  cfg.validate();
  return cfg;
}

json to_json(const SplitSpec& spec) {
  json out = json::object();
  if (spec.counts) {
    out["counts"] = *spec.counts;
  } else {
    out["ratios"] = spec.ratios;
  }
  return out;
}

SplitSpec split_spec_from_json(const json& doc) {
  SplitSpec spec;
  for_each_known(doc, {"counts", "ratios"}, "split", [&](const std::string& key, const json& v) {
    if (!v.is_array() || v.size() != 3) bad(key, "expected an array of three numbers");
    if (key == "counts") {
      std::array<std::size_t, 3> counts{};
      for (std::size_t i = 0; i < 3; ++i) counts[i] = get_count(v[i], key);
      spec.counts = counts;
    } else {
      for (std::size_t i = 0; i < 3; ++i) spec.ratios[i] = get_real(v[i], key);
    }
  });
  return spec;
}

RunConfig run_config_from_json(const json& doc) {
  static const std::set<std::string> known = {
      "data",    "out",     "seed",          "lookback", "horizon",    "channels",
      "hidden",  "core",    "layers",        "pooling",  "revin",      "baseline",
      "learning_rate", "epochs", "batch_size", "patience", "split_counts", "split_ratios",
      "threads"};
  RunConfig cfg;
  for_each_known(doc, known, "config", [&](const std::string& key, const json& v) {
    if (key == "data") {
      if (!v.is_string()) bad(key, "expected a path string");
      cfg.data = v.get<std::string>();
    } else if (key == "out") {
      if (!v.is_string()) bad(key, "expected a path string");
      cfg.out = v.get<std::string>();
    } else if (key == "seed") {
      cfg.set_seed(get_count(v, key));
    } else if (key == "lookback") {
      cfg.model.lookback = get_count(v, key);
    } else if (key == "horizon") {
      cfg.model.horizon = get_count(v, key);
    } else if (key == "channels") {
      cfg.channels = get_count(v, key);
    } else if (key == "hidden") {
      cfg.model.hidden = get_count(v, key);
    } else if (key == "core") {
      cfg.model.core = get_count(v, key);
    } else if (key == "layers") {
      cfg.model.layers = get_count(v, key);
    } else if (key == "pooling") {
      cfg.model.pooling = get_pooling(v, key);
    } else if (key == "revin") {
      cfg.model.use_revin = get_bool(v, key);
    } else if (key == "baseline") {
      cfg.model.baseline = get_bool(v, key);
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = get_real(v, key);
    } else if (key == "epochs") {
      cfg.train.epochs = get_count(v, key);
    } else if (key == "batch_size") {
      cfg.train.batch_size = get_count(v, key);
    } else if (key == "patience") {
      cfg.train.patience = get_count(v, key);
    } else if (key == "split_counts" || key == "split_ratios") {
      if (!v.is_array() || v.size() != 3) bad(key, "expected an array of three numbers");
      cfg.split = split_spec_from_json(
          json{{key == "split_counts" ? "counts" : "ratios", v}});
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(get_count(v, key));
    }
  });
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::config, "config " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    const std::string_view item(text.data() + start, comma - start);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw Error(ErrorCode::config, "cannot parse \"" + std::string(item) + "\" in list \"" +
                                         text + "\"");
    }
    out.push_back(v);
    start = comma + 1;
  }
  return out;
}

}  // namespace softs
