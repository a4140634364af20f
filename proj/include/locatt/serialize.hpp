// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "locatt/encoder.hpp"
#include "locatt/localness.hpp"
#include "locatt/tasks.hpp"

namespace locatt {

// Enum names as they appear in config and checkpoint files.
std::string kind_name(WindowKind kind);
WindowKind kind_from_name(const std::string& name);  // throws config_error
std::string task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);    // throws config_error

// Shortest decimal form that parses back to the same 64-bit value.
std::string format_double(double value);

struct RunConfig {
  EncoderConfig model;
  TaskSpec task;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  std::size_t warmup_steps = 400;
  double lr_scale = 1.0;
};

// Strict parse of a {model, task, train} JSON document: unknown keys,
// wrong types, missing required fields and cross-section mismatches all
// raise config_error naming the field.
RunConfig run_config_from_json(const std::string& text);

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  EncoderState state;
  std::size_t step = 0;
  std::uint64_t rng_state = 0;
};

// Single JSON document: format_version, config, params (sorted by name,
// each {shape, data}), rng_state, step. Save, load, save again is
// byte-identical. Throws contract_error on non-finite parameters.
std::string checkpoint_to_json(const EncoderState& state, std::size_t step,
                               std::uint64_t rng_state);
Checkpoint checkpoint_from_json(const std::string& text);  // throws config_error

// Whole-file helpers; failures raise config_error naming the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

struct WindowRecord {
  std::size_t layer = 0;  // 1-based
  std::size_t head = 0;   // 0-based
  std::size_t seq = 0;
  std::size_t pos = 0;
  double center = 0.0;
  double window = 0.0;
};

std::string loss_csv(const std::vector<double>& losses);
std::string windows_csv(const std::vector<WindowRecord>& records);
std::string summary_csv(const std::vector<WindowRecord>& records);
std::string ngram_csv(const std::array<double, 8>& rates);
std::string traces_json(const std::vector<AttentionTrace>& traces);
std::string eval_csv(const EvalResult& result);
std::string eval_text(const EvalResult& result);

// Linear-interpolation quantile of a sample (the common spreadsheet
// definition); sorts a copy. Throws contract_error on an empty sample.
double quantile(std::vector<double> values, double p);

}  // namespace locatt
