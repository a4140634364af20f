// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "locatt/encoder.hpp"
#include "locatt/error.hpp"
#include "locatt/gradcheck.hpp"
#include "locatt/serialize.hpp"
#include "locatt/tasks.hpp"
#include "locatt/tensor.hpp"

namespace {

using namespace locatt;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const train_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
}

int cmd_train(const std::string& config_path, const std::string& out_path, std::uint64_t seed,
              bool seed_given, std::size_t steps, bool steps_given) {
  RunConfig config = run_config_from_json(read_file(config_path));
  if (seed_given) {
    config.model.seed = seed;
    config.task.seed = seed;
  }
  if (steps_given) {
    config.steps = steps;
  }
  EncoderState state = make_encoder(config.model);
  TrainOptions options;
  options.steps = config.steps;
  options.batch_size = config.batch_size;
  options.warmup_steps = config.warmup_steps;
  options.lr_scale = config.lr_scale;
  const TrainResult result = train(state, config.task, options);
  // Batches are a pure function of (task seed, batch index), so the data
  // generator state never advances; together with `step` it pins the
  // stream position.
  write_file(out_path, checkpoint_to_json(state, result.steps_run, config.task.seed));
  const std::filesystem::path loss_path =
      std::filesystem::path(out_path).parent_path() / "loss.csv";
  write_file(loss_path.string(), loss_csv(result.losses));
  std::cout << "trained " << result.steps_run << " steps, final loss "
            << format_double(result.losses.back()) << "\n";
  std::cout << "wrote " << out_path << " and " << loss_path.string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& task_path, std::size_t batches,
             const std::string& format) {
  const Checkpoint ckpt = checkpoint_from_json(read_file(ckpt_path));
  const RunConfig config = run_config_from_json(read_file(task_path));
  const EvalResult result = evaluate(ckpt.state, config.task, batches);
  std::cout << (format == "csv" ? eval_csv(result) : eval_text(result));
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, double tolerance) {
  const RunConfig config = run_config_from_json(read_file(config_path));
  EncoderState state = make_encoder(config.model);
  const Batch batch = generate_batch(config.task, 1, 0);
  const std::size_t len = batch.lengths[0];
  const std::vector<int> tokens(batch.tokens.begin(),
                                batch.tokens.begin() + static_cast<std::ptrdiff_t>(len));
  const std::vector<int> targets(batch.targets.begin(),
                                 batch.targets.begin() + static_cast<std::ptrdiff_t>(len));
  const GradCheckReport report = grad_check(
      state.named,
      [&](Tape& tape) {
        Tensor logits = encode(tape, state, tokens, {});
        return cross_entropy(tape, logits, targets, len);
      },
      1e-5);
  std::vector<std::string> offenders;
  for (const GradCheckEntry& entry : report.params) {
    std::cout << entry.name << " " << format_double(entry.max_rel_err) << "\n";
    if (!(entry.max_rel_err < tolerance)) {
      offenders.push_back(entry.name);
    }
  }
  std::cout << "max relative error " << format_double(report.max_rel_err) << " over "
            << report.params.size() << " parameters\n";
  if (!offenders.empty()) {
    std::cerr << "parameters at or above tolerance " << format_double(tolerance) << ":\n";
    for (const std::string& name : offenders) {
      std::cerr << "  " << name << "\n";
    }
    return kExitCheckFailure;
  }
  return kExitOk;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& task_path,
                const std::string& out_dir) {
  const Checkpoint ckpt = checkpoint_from_json(read_file(ckpt_path));
  const RunConfig config = run_config_from_json(read_file(task_path));
  const TaskSpec& task = config.task;
  validate(task);
  if (task.vocab_size != ckpt.state.config.vocab_size) {
    throw config_error("task.vocab_size must equal the checkpoint's vocab_size");
  }
  if (task.max_len > ckpt.state.config.max_len) {
    throw config_error("task.max_len must not exceed the checkpoint's max_len");
  }
  std::filesystem::create_directories(out_dir);

  constexpr std::size_t kBatches = 4;
  constexpr std::size_t kBatchSize = 32;
  constexpr std::size_t kTraceSequences = 8;
  std::vector<WindowRecord> records;
  std::vector<AttentionTrace> sampled_traces;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  std::size_t seq_id = 0;
  for (std::size_t i = 0; i < kBatches; ++i) {
    const Batch batch = generate_batch(task, kBatchSize, kEvalBatchOffset + i);
    for (std::size_t b = 0; b < kBatchSize; ++b, ++seq_id) {
      const std::size_t len = batch.lengths[b];
      const auto* tok_row = batch.tokens.data() + b * batch.width;
      const auto* tgt_row = batch.targets.data() + b * batch.width;
      const std::vector<int> tokens(tok_row, tok_row + len);
      Tape tape;
      std::vector<AttentionTrace> traces;
      EncodeOptions options;
      options.traces = &traces;
      Tensor logits = encode(tape, ckpt.state, tokens, options);
      std::vector<int> pred(len);
      for (std::size_t p = 0; p < len; ++p) {
        pred[p] = static_cast<int>(argmax_row(logits, p));
      }
      pairs.emplace_back(std::move(pred), std::vector<int>(tgt_row, tgt_row + len));
      for (const AttentionTrace& trace : traces) {
        for (std::size_t p = 0; p < len; ++p) {
          records.push_back({trace.layer, trace.head, seq_id, p, trace.centers[p],
                             trace.windows[p]});
        }
      }
      if (seq_id < kTraceSequences) {
        sampled_traces.insert(sampled_traces.end(), traces.begin(), traces.end());
      }
    }
  }
  const EvalResult scored = score_predictions(pairs);
  const std::filesystem::path dir(out_dir);
  write_file((dir / "windows.csv").string(), windows_csv(records));
  write_file((dir / "summary.csv").string(), summary_csv(records));
  write_file((dir / "ngram.csv").string(), ngram_csv(scored.ngram_rates));
  write_file((dir / "traces.json").string(), traces_json(sampled_traces));
  std::cout << "wrote windows.csv, summary.csv, ngram.csv, traces.json to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer encoder with learnable Gaussian locality bias"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt_path, task_path, out_dir;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t batches = 100;
  double tolerance = 1e-4;
  std::string format = "text";

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", config_path, "JSON config path")->required();
  train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
  CLI::Option* seed_opt = train_cmd->add_option("--seed", seed, "override model and task seeds");
  CLI::Option* steps_opt = train_cmd->add_option("--steps", steps, "override train.steps");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a task");
  eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval_cmd->add_option("--task", task_path, "JSON config path providing the task")->required();
  eval_cmd->add_option("--batches", batches, "number of held-out batches");
  eval_cmd->add_option("--format", format, "text or csv")
      ->check(CLI::IsMember({"text", "csv"}));

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Compare gradients to central differences");
  grad_cmd->add_option("--config", config_path, "JSON config path")->required();
  grad_cmd->add_option("--tolerance", tolerance, "max relative error allowed");

  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "Export locality diagnostics for a checkpoint");
  analyze_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  analyze_cmd->add_option("--task", task_path, "JSON config path providing the task")->required();
  analyze_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (train_cmd->parsed()) {
    return run_guarded([&] {
      return cmd_train(config_path, out_path, seed, seed_opt->count() > 0, steps,
                       steps_opt->count() > 0);
    });
  }
  if (eval_cmd->parsed()) {
    return run_guarded([&] { return cmd_eval(ckpt_path, task_path, batches, format); });
  }
  if (grad_cmd->parsed()) {
    return run_guarded([&] { return cmd_gradcheck(config_path, tolerance); });
  }
  return run_guarded([&] { return cmd_analyze(ckpt_path, task_path, out_dir); });
}
