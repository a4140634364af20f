// SPDX-License-Identifier: Apache-2.0
#include "locatt/serialize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "locatt/error.hpp"

namespace locatt {

using json = nlohmann::json;

std::string kind_name(WindowKind kind) {
  switch (kind) {
    case WindowKind::fixed: return "fixed";
    case WindowKind::layer_specific: return "layer_specific";
    case WindowKind::query_specific: return "query_specific";
    case WindowKind::head_specific: return "head_specific";
  }
  throw contract_error("kind_name: unknown window kind");
}

WindowKind kind_from_name(const std::string& name) {
  if (name == "fixed") return WindowKind::fixed;
  if (name == "layer_specific") return WindowKind::layer_specific;
  if (name == "query_specific") return WindowKind::query_specific;
  if (name == "head_specific") return WindowKind::head_specific;
  throw config_error("unknown window strategy '" + name + "'");
}

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::local_pattern: return "local_pattern";
  }
  throw contract_error("task_name: unknown task kind");
}

TaskKind task_from_name(const std::string& name) {
  if (name == "copy") return TaskKind::copy;
  if (name == "reverse") return TaskKind::reverse;
  if (name == "local_pattern") return TaskKind::local_pattern;
  throw config_error("unknown task kind '" + name + "'");
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!allowed.contains(item.key())) {
      throw config_error("unknown key '" + where + "." + item.key() + "'");
    }
  }
}

const json& require_object(const json& parent, const std::string& key) {
  if (!parent.contains(key)) {
    throw config_error("missing section '" + key + "'");
  }
  const json& v = parent.at(key);
  if (!v.is_object()) {
    throw config_error("section '" + key + "' must be an object");
  }
  return v;
}

std::size_t size_field(const json& obj, const std::string& section, const std::string& key,
                       std::size_t fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) {
      throw config_error("missing field '" + section + "." + key + "'");
    }
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw config_error("field '" + section + "." + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t seed_field(const json& obj, const std::string& section, std::uint64_t fallback) {
  if (!obj.contains("seed")) {
    return fallback;
  }
  const json& v = obj.at("seed");
  if (!v.is_number_unsigned()) {
    throw config_error("field '" + section + ".seed' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double double_field(const json& obj, const std::string& section, const std::string& key,
                    double fallback) {
  if (!obj.contains(key)) {
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw config_error("field '" + section + "." + key + "' must be a number");
  }
  return v.get<double>();
}

EncoderConfig parse_model(const json& obj, const std::string& section) {
  reject_unknown_keys(obj,
                      {"vocab_size", "d_model", "d_ff", "heads", "layers", "localness_layers",
                       "strategy", "fixed_window", "head_cap", "max_len", "seed"},
                      section);
  EncoderConfig config;
  config.vocab_size = size_field(obj, section, "vocab_size", 0, true);
  config.d_model = size_field(obj, section, "d_model", config.d_model);
  config.d_ff = size_field(obj, section, "d_ff", config.d_ff);
  config.heads = size_field(obj, section, "heads", config.heads);
  config.layers = size_field(obj, section, "layers", config.layers);
  config.max_len = size_field(obj, section, "max_len", config.max_len);
  config.seed = seed_field(obj, section, config.seed);
  if (obj.contains("localness_layers")) {
    const json& arr = obj.at("localness_layers");
    if (!arr.is_array()) {
      throw config_error("field '" + section + ".localness_layers' must be an array");
    }
    config.localness_layers.clear();
    for (const json& v : arr) {
      if (!v.is_number_unsigned()) {
        throw config_error("field '" + section +
                           ".localness_layers' must hold non-negative integers");
      }
      config.localness_layers.push_back(v.get<std::size_t>());
    }
  } else {
    // Keep only the part of the default that exists in this model.
    std::erase_if(config.localness_layers,
                  [&](std::size_t layer) { return layer > config.layers; });
  }
  if (obj.contains("strategy")) {
    const json& v = obj.at("strategy");
    if (!v.is_string()) {
      throw config_error("field '" + section + ".strategy' must be a string");
    }
    config.strategy.kind = kind_from_name(v.get<std::string>());
  }
  config.strategy.fixed_window =
      double_field(obj, section, "fixed_window", config.strategy.fixed_window);
  config.strategy.head_cap = double_field(obj, section, "head_cap", config.strategy.head_cap);
  return config;
}

TaskSpec parse_task(const json& obj, const std::string& section) {
  reject_unknown_keys(obj, {"kind", "vocab_size", "min_len", "max_len", "window_radius", "seed"},
                      section);
  TaskSpec spec;
  if (!obj.contains("kind")) {
    throw config_error("missing field '" + section + ".kind'");
  }
  if (!obj.at("kind").is_string()) {
    throw config_error("field '" + section + ".kind' must be a string");
  }
  spec.kind = task_from_name(obj.at("kind").get<std::string>());
  spec.vocab_size = size_field(obj, section, "vocab_size", 0, true);
  spec.min_len = size_field(obj, section, "min_len", 0, true);
  spec.max_len = size_field(obj, section, "max_len", 0, true);
  spec.window_radius = size_field(obj, section, "window_radius", spec.window_radius);
  spec.seed = seed_field(obj, section, spec.seed);
  return spec;
}

json model_to_json(const EncoderConfig& config) {
  json obj;
  obj["vocab_size"] = config.vocab_size;
  obj["d_model"] = config.d_model;
  obj["d_ff"] = config.d_ff;
  obj["heads"] = config.heads;
  obj["layers"] = config.layers;
  obj["localness_layers"] = config.localness_layers;
  obj["strategy"] = kind_name(config.strategy.kind);
  obj["fixed_window"] = config.strategy.fixed_window;
  obj["head_cap"] = config.strategy.head_cap;
  obj["max_len"] = config.max_len;
  obj["seed"] = config.seed;
  return obj;
}

json parse_text(const std::string& text, const std::string& what) {
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) {
    throw config_error(what + " is not valid JSON");
  }
  return parsed;
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  const json root = parse_text(text, "config");
  if (!root.is_object()) {
    throw config_error("config root must be an object");
  }
  reject_unknown_keys(root, {"model", "task", "train"}, "config");
  RunConfig config;
  config.model = parse_model(require_object(root, "model"), "model");
  config.task = parse_task(require_object(root, "task"), "task");
  if (root.contains("train")) {
    const json& tr = root.at("train");
    if (!tr.is_object()) {
      throw config_error("section 'train' must be an object");
    }
    reject_unknown_keys(tr, {"steps", "batch_size", "warmup_steps", "lr_scale"}, "train");
    config.steps = size_field(tr, "train", "steps", config.steps);
    config.batch_size = size_field(tr, "train", "batch_size", config.batch_size);
    config.warmup_steps = size_field(tr, "train", "warmup_steps", config.warmup_steps);
    config.lr_scale = double_field(tr, "train", "lr_scale", config.lr_scale);
  }
  validate(config.model);
  validate(config.task);
  if (config.task.vocab_size != config.model.vocab_size) {
    throw config_error("task.vocab_size must equal model.vocab_size");
  }
  if (config.task.max_len > config.model.max_len) {
    throw config_error("task.max_len must not exceed model.max_len");
  }
  return config;
}

std::string checkpoint_to_json(const EncoderState& state, std::size_t step,
                               std::uint64_t rng_state) {
  json root;
  root["format_version"] = kCheckpointFormatVersion;
  root["step"] = step;
  root["rng_state"] = rng_state;
  root["config"] = model_to_json(state.config);
  json params = json::object();
  for (const auto& [name, param] : state.named) {
    const Tensor& p = param;
    for (const double v : p.data()) {
      if (!std::isfinite(v)) {
        throw contract_error("checkpoint: parameter '" + name + "' contains a non-finite value");
      }
    }
    json entry;
    entry["shape"] = p.shape();
    entry["data"] = p.data();
    params[name] = std::move(entry);
  }
  root["params"] = std::move(params);
  return root.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json root = parse_text(text, "checkpoint");
  if (!root.is_object()) {
    throw config_error("checkpoint root must be an object");
  }
  if (!root.contains("format_version") || !root.at("format_version").is_number_unsigned() ||
      root.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw config_error("unsupported checkpoint format_version (expected " +
                       std::to_string(kCheckpointFormatVersion) + ")");
  }
  reject_unknown_keys(root, {"format_version", "step", "rng_state", "config", "params"},
                      "checkpoint");
  Checkpoint out;
  out.step = size_field(root, "checkpoint", "step", 0, true);
  if (!root.contains("rng_state") || !root.at("rng_state").is_number_unsigned()) {
    throw config_error("missing field 'checkpoint.rng_state'");
  }
  out.rng_state = root.at("rng_state").get<std::uint64_t>();
  out.state = make_encoder(parse_model(require_object(root, "config"), "config"));
  const json& params = require_object(root, "params");
  std::size_t matched = 0;
  for (auto& [name, param] : out.state.named) {
    if (!params.contains(name)) {
      throw config_error("checkpoint is missing parameter '" + name + "'");
    }
    const json& entry = params.at(name);
    if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data")) {
      throw config_error("checkpoint parameter '" + name + "' must hold shape and data");
    }
    reject_unknown_keys(entry, {"shape", "data"}, "params." + name);
    Tensor p = param;
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != p.shape()) {
      throw config_error("checkpoint parameter '" + name + "' has shape " + shape_str(shape) +
                         ", expected " + shape_str(p.shape()));
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != p.size()) {
      throw config_error("checkpoint parameter '" + name + "' has the wrong element count");
    }
    p.data() = data;
    matched += 1;
  }
  if (matched != params.size()) {
    for (const auto& item : params.items()) {
      const bool known =
          std::any_of(out.state.named.begin(), out.state.named.end(),
                      [&](const auto& np) { return np.first == item.key(); });
      if (!known) {
        throw config_error("checkpoint holds unknown parameter '" + item.key() + "'");
      }
    }
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw config_error("cannot read file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw config_error("cannot write file '" + path + "'");
  }
  out << text;
  if (!out) {
    throw config_error("failed while writing file '" + path + "'");
  }
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_double(losses[i]) + "\n";
  }
  return out;
}

std::string windows_csv(const std::vector<WindowRecord>& records) {
  std::string out = "layer,head,seq,pos,center,window\n";
  for (const WindowRecord& r : records) {
    out += std::to_string(r.layer) + "," + std::to_string(r.head) + "," + std::to_string(r.seq) +
           "," + std::to_string(r.pos) + "," + format_double(r.center) + "," +
           format_double(r.window) + "\n";
  }
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw contract_error("quantile: empty sample");
  }
  std::sort(values.begin(), values.end());
  const double idx = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::string summary_csv(const std::vector<WindowRecord>& records) {
  std::map<std::size_t, std::vector<double>> by_layer;
  for (const WindowRecord& r : records) {
    by_layer[r.layer].push_back(r.window);
  }
  std::string out = "layer,mean_window,q1,median,q3\n";
  for (const auto& [layer, windows] : by_layer) {
    double mean = 0.0;
    for (const double w : windows) {
      mean += w;
    }
    mean /= static_cast<double>(windows.size());
    out += std::to_string(layer) + "," + format_double(mean) + "," +
           format_double(quantile(windows, 0.25)) + "," + format_double(quantile(windows, 0.5)) +
           "," + format_double(quantile(windows, 0.75)) + "\n";
  }
  return out;
}

std::string ngram_csv(const std::array<double, 8>& rates) {
  std::string out = "n,rate\n";
  for (std::size_t n = 1; n <= 8; ++n) {
    out += std::to_string(n) + "," + format_double(rates[n - 1]) + "\n";
  }
  return out;
}

std::string traces_json(const std::vector<AttentionTrace>& traces) {
  json arr = json::array();
  for (const AttentionTrace& trace : traces) {
    const std::size_t len = trace.centers.size();
    json rows = json::array();
    for (std::size_t i = 0; i < len; ++i) {
      rows.push_back(std::vector<double>(trace.weights.begin() + static_cast<std::ptrdiff_t>(i * len),
                                         trace.weights.begin() + static_cast<std::ptrdiff_t>((i + 1) * len)));
    }
    json obj;
    obj["layer"] = trace.layer;
    obj["head"] = trace.head;
    obj["centers"] = trace.centers;
    obj["windows"] = trace.windows;
    obj["weights"] = std::move(rows);
    arr.push_back(std::move(obj));
  }
  return arr.dump(2) + "\n";
}

std::string eval_csv(const EvalResult& result) {
  std::string out = "metric,value\n";
  out += "token_accuracy," + format_double(result.token_accuracy) + "\n";
  for (std::size_t n = 1; n <= 8; ++n) {
    out += "ngram_" + std::to_string(n) + "," + format_double(result.ngram_rates[n - 1]) + "\n";
  }
  return out;
}

std::string eval_text(const EvalResult& result) {
  std::string out = "token accuracy: " + format_double(result.token_accuracy) + " (" +
                    std::to_string(result.tokens) + " tokens, " +
                    std::to_string(result.sequences) + " sequences)\n";
  out += "n-gram exact-match rates:\n";
  for (std::size_t n = 1; n <= 8; ++n) {
    out += "  n=" + std::to_string(n) + "  " + format_double(result.ngram_rates[n - 1]) + "\n";
  }
  return out;
}

}  // namespace locatt
