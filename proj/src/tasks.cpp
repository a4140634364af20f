// SPDX-License-Identifier: Apache-2.0
#include "locatt/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "locatt/error.hpp"
#include "locatt/rng.hpp"

namespace locatt {

void validate(const TaskSpec& spec) {
  if (spec.vocab_size < 4) {
    throw config_error("task vocab_size must be at least 4");
  }
  if (spec.min_len < 1) {
    throw config_error("task min_len must be at least 1");
  }
  if (spec.max_len < spec.min_len) {
    throw config_error("task max_len must be at least min_len");
  }
}

std::vector<int> task_targets(TaskKind kind, const std::vector<int>& tokens,
                              std::size_t vocab_size, std::size_t window_radius) {
  const std::size_t len = tokens.size();
  std::vector<int> targets(len, 0);
  switch (kind) {
    case TaskKind::copy:
      targets = tokens;
      break;
    case TaskKind::reverse:
      for (std::size_t i = 0; i < len; ++i) {
        targets[i] = tokens[len - 1 - i];
      }
      break;
    case TaskKind::local_pattern:
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t lo = i > window_radius ? i - window_radius : 0;
        const std::size_t hi = std::min(len - 1, i + window_radius);
        std::size_t sum = 0;
        for (std::size_t j = lo; j <= hi; ++j) {
          sum += static_cast<std::size_t>(tokens[j]);
        }
        targets[i] = static_cast<int>(sum % vocab_size);
      }
      break;
  }
  return targets;
}

Batch generate_batch(const TaskSpec& spec, std::size_t batch_size, std::uint64_t batch_index) {
  validate(spec);
  if (batch_size == 0) {
    throw contract_error("generate_batch: batch_size must be positive");
  }
  SplitMix64 rng = SplitMix64(spec.seed).split(batch_index);
  Batch out;
  out.batch = batch_size;
  out.lengths.resize(batch_size);
  std::vector<std::vector<int>> rows(batch_size);
  const std::uint64_t span = static_cast<std::uint64_t>(spec.max_len - spec.min_len) + 1;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t len = spec.min_len + static_cast<std::size_t>(rng.next_int(span));
    out.lengths[b] = len;
    out.width = std::max(out.width, len);
    rows[b].resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      rows[b][i] = static_cast<int>(rng.next_int(spec.vocab_size));
    }
  }
  out.tokens.assign(batch_size * out.width, 0);
  out.targets.assign(batch_size * out.width, 0);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::vector<int> targets =
        task_targets(spec.kind, rows[b], spec.vocab_size, spec.window_radius);
    for (std::size_t i = 0; i < rows[b].size(); ++i) {
      out.tokens[b * out.width + i] = rows[b][i];
      out.targets[b * out.width + i] = targets[i];
    }
  }
  return out;
}

Tensor cross_entropy(Tape& tape, Tensor logits, const std::vector<int>& targets,
                     std::size_t valid_len) {
  if (logits.rank() != 2) {
    throw dim_error("cross_entropy: logits must be a matrix, got " + shape_str(logits.shape()));
  }
  if (valid_len == 0) {
    throw contract_error("cross_entropy: valid_len must be positive");
  }
  if (valid_len > logits.rows() || valid_len > targets.size()) {
    throw contract_error("cross_entropy: valid_len exceeds logits rows or targets");
  }
  const std::size_t vocab = logits.cols();
  for (std::size_t i = 0; i < valid_len; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw input_error("cross_entropy: target " + std::to_string(targets[i]) +
                        " at position " + std::to_string(i) + " outside vocabulary of " +
                        std::to_string(vocab));
    }
  }
  Tensor probs = Tensor::zeros({valid_len, vocab});
  double total = 0.0;
  for (std::size_t i = 0; i < valid_len; ++i) {
    const double* row = logits.data().data() + i * vocab;
    double mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) {
      mx = std::max(mx, row[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) {
      denom += std::exp(row[j] - mx);
    }
    for (std::size_t j = 0; j < vocab; ++j) {
      probs.at(i, j) = std::exp(row[j] - mx) / denom;
    }
    const std::size_t y = static_cast<std::size_t>(targets[i]);
    total += -(row[y] - mx - std::log(denom));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(valid_len));
  if (logits.requires_grad()) {
    out.mark_output();
    std::vector<int> ys(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(valid_len));
    tape.record(out, [logits, probs, out, ys, valid_len, vocab]() mutable {
      const double g = out.grad()[0] / static_cast<double>(valid_len);
      std::vector<double>& lg = logits.ensure_grad();
      for (std::size_t i = 0; i < valid_len; ++i) {
        for (std::size_t j = 0; j < vocab; ++j) {
          const double onehot = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
          lg[i * vocab + j] += g * (probs.at(i, j) - onehot);
        }
      }
    });
  }
  return out;
}

void adam_step(AdamState& state, std::span<const std::pair<std::string, Tensor>> params,
               double lr) {
  state.step += 1;
  state.lr = lr;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, param] : params) {
    Tensor p = param;
    const std::size_t n = p.size();
    auto& [m, v] = state.moments[name];
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    const std::vector<double>* g = p.has_grad() ? &p.grad() : nullptr;
    std::vector<double>& w = p.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      if (!std::isfinite(gi)) {
        throw train_error("non-finite gradient in parameter '" + name + "'");
      }
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_at(std::size_t step, std::size_t d_model, std::size_t warmup) {
  if (step == 0 || d_model == 0 || warmup == 0) {
    throw contract_error("lr_at: step, d_model and warmup must be positive");
  }
  const double t = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(t, -0.5), t * std::pow(w, -1.5));
}

namespace {

void check_task_fits_model(const EncoderState& state, const TaskSpec& task) {
  if (task.vocab_size != state.config.vocab_size) {
    throw config_error("task vocab_size must equal model vocab_size");
  }
  if (task.max_len > state.config.max_len) {
    throw config_error("task max_len must not exceed model max_len");
  }
}

}  // namespace

TrainResult train(EncoderState& state, const TaskSpec& task, const TrainOptions& options) {
  validate(task);
  check_task_fits_model(state, task);
  if (options.steps == 0) {
    throw config_error("train steps must be positive");
  }
  if (options.batch_size == 0) {
    throw config_error("train batch_size must be positive");
  }
  TrainResult result;
  const std::size_t b_count = options.batch_size;
  for (std::size_t step = 1; step <= options.steps; ++step) {
    const Batch batch = generate_batch(task, b_count, step - 1);
    Tape tape;
    Tensor total;
    for (std::size_t b = 0; b < b_count; ++b) {
      const std::size_t len = batch.lengths[b];
      const auto* tok_row = batch.tokens.data() + b * batch.width;
      const auto* tgt_row = batch.targets.data() + b * batch.width;
      std::vector<int> tokens(tok_row, tok_row + len);
      std::vector<int> targets(tgt_row, tgt_row + len);
      Tensor logits = encode(tape, state, tokens, {});
      Tensor loss = cross_entropy(tape, logits, targets, len);
      total = total ? add(tape, total, loss) : loss;
    }
    Tensor mean_loss = scale(tape, total, 1.0 / static_cast<double>(b_count));
    const double loss_value = mean_loss.value();
    if (!std::isfinite(loss_value)) {
      throw train_error("training diverged at step " + std::to_string(step) +
                        ": loss is not finite");
    }
    for (const auto& [name, param] : state.named) {
      Tensor(param).clear_grad();
    }
    tape.backward(mean_loss);
    const double lr = options.lr_scale * lr_at(step, state.config.d_model, options.warmup_steps);
    adam_step(result.adam, state.named, lr);
    result.losses.push_back(loss_value);
    result.steps_run = step;
    if (options.on_step && !options.on_step(step, loss_value)) {
      break;
    }
  }
  return result;
}

EvalResult score_predictions(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pred_target_pairs) {
  EvalResult out;
  std::size_t correct_tokens = 0;
  std::array<std::size_t, 8> good{};
  for (const auto& [pred, target] : pred_target_pairs) {
    if (pred.size() != target.size()) {
      throw contract_error("score_predictions: prediction and target lengths differ");
    }
    const std::size_t len = pred.size();
    std::vector<char> hit(len, 0);
    for (std::size_t i = 0; i < len; ++i) {
      hit[i] = pred[i] == target[i] ? 1 : 0;
      correct_tokens += hit[i];
    }
    out.sequences += 1;
    out.tokens += len;
    for (std::size_t n = 1; n <= 8; ++n) {
      if (len < n) {
        break;
      }
      for (std::size_t i = 0; i + n <= len; ++i) {
        out.ngram_spans[n - 1] += 1;
        bool all = true;
        for (std::size_t j = i; j < i + n; ++j) {
          all = all && hit[j] != 0;
        }
        good[n - 1] += all ? 1 : 0;
      }
    }
  }
  if (out.tokens == 0) {
    throw contract_error("score_predictions: no tokens to score");
  }
  out.token_accuracy = static_cast<double>(correct_tokens) / static_cast<double>(out.tokens);
  for (std::size_t n = 1; n <= 8; ++n) {
    out.ngram_rates[n - 1] =
        out.ngram_spans[n - 1] == 0
            ? 0.0
            : static_cast<double>(good[n - 1]) / static_cast<double>(out.ngram_spans[n - 1]);
  }
  return out;
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  if (logits.rank() != 2 || row >= logits.rows()) {
    throw contract_error("argmax_row: row outside matrix");
  }
  const double* r = logits.data().data() + row * logits.cols();
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.cols(); ++j) {
    if (r[j] > r[best]) {
      best = j;
    }
  }
  return best;
}

EvalResult evaluate(const EncoderState& state, const TaskSpec& task, std::size_t num_batches,
                    std::size_t batch_size) {
  validate(task);
  check_task_fits_model(state, task);
  if (num_batches == 0) {
    throw config_error("eval batches must be positive");
  }
  if (batch_size == 0) {
    throw config_error("eval batch_size must be positive");
  }
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  pairs.reserve(num_batches * batch_size);
  for (std::size_t i = 0; i < num_batches; ++i) {
    const Batch batch = generate_batch(task, batch_size, kEvalBatchOffset + i);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const std::size_t len = batch.lengths[b];
      const auto* tok_row = batch.tokens.data() + b * batch.width;
      const auto* tgt_row = batch.targets.data() + b * batch.width;
      std::vector<int> tokens(tok_row, tok_row + len);
      Tape tape;
      Tensor logits = encode(tape, state, tokens, {});
      std::vector<int> pred(len);
      for (std::size_t p = 0; p < len; ++p) {
        pred[p] = static_cast<int>(argmax_row(logits, p));
      }
      pairs.emplace_back(std::move(pred), std::vector<int>(tgt_row, tgt_row + len));
    }
  }
  return score_predictions(pairs);
}

}  // namespace locatt
