// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "locatt/encoder.hpp"
#include "locatt/tensor.hpp"

namespace locatt {

enum class TaskKind { copy, reverse, local_pattern };

struct TaskSpec {
  TaskKind kind = TaskKind::copy;
  std::size_t vocab_size = 0;
  std::size_t min_len = 1;
  std::size_t max_len = 1;
  std::size_t window_radius = 1;  // local_pattern only
  std::uint64_t seed = 1;
};

// Throws config_error (vocab_size < 4, empty length range, ...).
void validate(const TaskSpec& spec);

// Per-position labels for a token sequence. local_pattern maps position
// i to the sum of tokens in [i-r, i+r], clipped to the sequence, modulo
// vocab_size; boundary positions simply see a smaller window.
std::vector<int> task_targets(TaskKind kind, const std::vector<int>& tokens,
                              std::size_t vocab_size, std::size_t window_radius);

struct Batch {
  std::size_t batch = 0;               // sequence count B
  std::size_t width = 0;               // matrix width = longest length
  std::vector<int> tokens;             // B x width row-major, zero-padded
  std::vector<int> targets;            // B x width, zero-padded
  std::vector<std::size_t> lengths;    // true length per sequence
};

// Pure function of (spec.seed, batch_index): batches form a random-access
// stream, so training and evaluation never share mutable generator state.
Batch generate_batch(const TaskSpec& spec, std::size_t batch_size, std::uint64_t batch_index);

// Evaluation reads from a far-offset region of the batch stream so it
// never replays training batches.
inline constexpr std::uint64_t kEvalBatchOffset = std::uint64_t{1} << 40;

// Mean over the first valid_len rows of -log softmax(logits_row)[target].
// Differentiable; throws contract_error when valid_len is 0 and
// input_error on a target outside [0, vocab).
Tensor cross_entropy(Tape& tape, Tensor logits, const std::vector<int>& targets,
                     std::size_t valid_len);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double lr = 0.0;       // learning rate applied by the latest step
  std::size_t step = 0;  // completed updates
  // first and second moment per parameter name
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

// One bias-corrected Adam update from each parameter's accumulated
// gradient (absent gradient reads as zero). Throws train_error naming
// the parameter on a non-finite gradient.
void adam_step(AdamState& state, std::span<const std::pair<std::string, Tensor>> params,
               double lr);

// Inverse-square-root warmup: d_model^-0.5 * min(t^-0.5, t * warmup^-1.5).
double lr_at(std::size_t step, std::size_t d_model, std::size_t warmup);

struct TrainOptions {
  std::size_t steps = 1;
  std::size_t batch_size = 32;
  std::size_t warmup_steps = 400;
  double lr_scale = 1.0;
  // Called after each step with (step, loss); return false to stop early.
  std::function<bool(std::size_t, double)> on_step;
};

struct TrainResult {
  std::vector<double> losses;  // batch loss before the update, per step
  std::size_t steps_run = 0;
  AdamState adam;
};

// Optimizes state in place on batches 0..steps-1 of the task stream.
// Throws train_error with the step index when the loss goes non-finite.
TrainResult train(EncoderState& state, const TaskSpec& task, const TrainOptions& options);

struct EvalResult {
  double token_accuracy = 0.0;
  std::array<double, 8> ngram_rates{};      // exact-match rate for n = 1..8
  std::array<std::size_t, 8> ngram_spans{}; // denominator per n
  std::size_t sequences = 0;
  std::size_t tokens = 0;
};

// Accuracy and n-gram aggregation over (prediction, target) sequence
// pairs. A span counts as correct when every position in it is correct;
// rates with no spans of that length are reported as 0.
EvalResult score_predictions(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pred_target_pairs);

// Greedy per-token argmax of one logits row; ties go to the lowest id.
std::size_t argmax_row(const Tensor& logits, std::size_t row);

// Runs the model over num_batches held-out batches and scores it.
EvalResult evaluate(const EncoderState& state, const TaskSpec& task, std::size_t num_batches,
                    std::size_t batch_size = 32);

}  // namespace locatt
