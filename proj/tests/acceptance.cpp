// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Each criterion prints one [PASS]/[FAIL]
// line; the exit code is the number of failures. Tolerances and budgets
// are pinned below, next to the criterion they govern.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "locatt/encoder.hpp"
#include "locatt/gradcheck.hpp"
#include "locatt/localness.hpp"
#include "locatt/rng.hpp"
#include "locatt/serialize.hpp"
#include "locatt/tasks.hpp"
#include "locatt/tensor.hpp"

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

// 1: softmax reweighting identity.
constexpr int kReweightCases = 1000;
constexpr double kReweightTol = 1e-10;
constexpr double kReweightSeconds = 5.0;
// 2: Gaussian bias hand cases.
constexpr double kBiasTol = 1e-12;
// 3: center/window range invariant.
constexpr int kRangeCases = 1000;
// 4: full-model gradient check.
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradSeconds = 60.0;
// 5: flat-bias limit.
constexpr int kFlatCases = 100;
constexpr double kFlatSigma = 1e6;
constexpr double kFlatTol = 1e-3;
// 6: learnability run. The step budget comes from the reference run of
// the default experiment config (see README); the wall bound is fixed.
constexpr std::size_t kLearnSteps = 3000;
constexpr double kLearnAccuracy = 0.95;
constexpr double kLearnSeconds = 600.0;
constexpr std::size_t kLearnProbeEvery = 250;
// 7: localness vs disabled baseline, 3 seeds.
constexpr std::size_t kCompareSteps = 600;
constexpr std::array<std::uint64_t, 3> kCompareSeeds = {1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

void report(int id, const char* label, const Outcome& result, int& failures) {
  std::cout << (result.pass ? "[PASS] " : "[FAIL] ") << id << " " << label;
  if (!result.detail.empty()) std::cout << ": " << result.detail;
  std::cout << "\n" << std::flush;
  if (!result.pass) failures += 1;
}

std::string format_seconds(double s) {
  std::ostringstream out;
  out.precision(2);
  out << std::fixed << s << "s";
  return out.str();
}

// The default experiment configuration every training criterion uses.
locatt::EncoderConfig experiment_model(locatt::WindowKind kind, std::uint64_t seed) {
  locatt::EncoderConfig config;
  config.vocab_size = 16;
  config.d_model = 64;
  config.d_ff = 128;
  config.heads = 4;
  config.layers = 4;
  config.localness_layers = {1, 2};
  config.strategy.kind = kind;
  config.max_len = 50;
  config.seed = seed;
  return config;
}

locatt::TaskSpec experiment_task(std::uint64_t seed) {
  locatt::TaskSpec task;
  task.kind = locatt::TaskKind::local_pattern;
  task.vocab_size = 16;
  task.min_len = 8;
  task.max_len = 20;
  task.window_radius = 1;
  task.seed = seed;
  return task;
}

Outcome check_reweighting_identity() {
  const auto start = clock_type::now();
  locatt::SplitMix64 rng(2024);
  double worst = 0.0;
  for (int c = 0; c < kReweightCases; ++c) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next_int(15));
    std::vector<double> energy(n * n), centers(n), windows(n);
    for (double& e : energy) e = rng.uniform(-5.0, 5.0);
    for (std::size_t i = 0; i < n; ++i) {
      centers[i] = rng.uniform(0.01, static_cast<double>(n) - 0.01);
      windows[i] = rng.uniform(0.25, static_cast<double>(n) + 2.0);
    }
    locatt::Tape tape;
    locatt::Tensor e = locatt::Tensor::from_data({n, n}, energy);
    locatt::GaussianBias bias = locatt::gaussian_bias(
        tape, locatt::Tensor::from_data({n}, centers), locatt::Tensor::from_data({n}, windows),
        n);
    locatt::Tensor v = locatt::Tensor::zeros({n, 1});
    const locatt::Tensor got =
        locatt::attention_with_bias(tape, e, &bias.g, v).weights;
    for (std::size_t i = 0; i < n; ++i) {
      // Plain softmax of the energy row, then reweight by exp(G) and
      // renormalize; the shared max factor cancels exactly.
      double emax = energy[i * n];
      for (std::size_t j = 1; j < n; ++j) emax = std::max(emax, energy[i * n + j]);
      std::vector<double> soft(n);
      double esum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        soft[j] = std::exp(energy[i * n + j] - emax);
        esum += soft[j];
      }
      double gmax = bias.g.at(i, 0);
      for (std::size_t j = 1; j < n; ++j) gmax = std::max(gmax, bias.g.at(i, j));
      double wsum = 0.0;
      std::vector<double> rew(n);
      for (std::size_t j = 0; j < n; ++j) {
        rew[j] = (soft[j] / esum) * std::exp(bias.g.at(i, j) - gmax);
        wsum += rew[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        worst = std::max(worst, std::abs(got.at(i, j) - rew[j] / wsum));
      }
    }
  }
  const double took =
      std::chrono::duration<double>(clock_type::now() - start).count();
  Outcome result;
  result.pass = worst < kReweightTol && took < kReweightSeconds;
  std::ostringstream detail;
  detail << "max |diff| " << worst << " over " << kReweightCases << " cases, "
         << format_seconds(took);
  result.detail = detail.str();
  return result;
}

Outcome check_gaussian_hand_cases() {
  locatt::Tape tape;
  const std::size_t rows = 3, cols = 6;
  locatt::Tensor centers = locatt::Tensor::full({rows}, 2.0);
  locatt::Tensor windows = locatt::Tensor::full({rows}, 2.0);
  const locatt::GaussianBias bias = locatt::gaussian_bias(tape, centers, windows, cols);
  double worst = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    worst = std::max(worst, std::abs(bias.g.at(i, 4) - (-2.0)));
    worst = std::max(worst, std::abs(bias.g.at(i, 2)));
    worst = std::max(worst, std::abs(bias.g.at(i, 1) - bias.g.at(i, 3)));
    worst = std::max(worst, std::abs(bias.g.at(i, 0) - bias.g.at(i, 4)));
  }
  Outcome result;
  result.pass = worst <= kBiasTol;
  std::ostringstream detail;
  detail << "max |diff| " << worst << " on offset/center/symmetry values";
  result.detail = detail.str();
  return result;
}

locatt::LocalnessParams random_localness(locatt::WindowKind kind, std::size_t d,
                                         locatt::SplitMix64& rng) {
  locatt::LocalnessParams params =
      locatt::make_localness_params(kind, d, rng.split(rng.next_u64()));
  for (locatt::Tensor* t : {&params.w_center, &params.u_center, &params.u_window,
                            &params.w_window, &params.z_window}) {
    if (!*t) continue;
    for (double& x : t->data()) x = rng.uniform(-2.0, 2.0);
  }
  return params;
}

Outcome check_range_invariant() {
  locatt::SplitMix64 rng(7);
  locatt::WindowStrategy fixed{locatt::WindowKind::fixed};
  locatt::WindowStrategy layer{locatt::WindowKind::layer_specific};
  locatt::WindowStrategy query{locatt::WindowKind::query_specific};
  locatt::WindowStrategy head{locatt::WindowKind::head_specific};
  bool ok = true;
  std::string reason;
  for (int c = 0; c < kRangeCases && ok; ++c) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.next_int(16));
    const std::size_t d = (c % 2 == 0) ? 4 : 8;
    std::vector<double> qdata(n * d), kdata(n * d);
    for (double& x : qdata) x = rng.uniform(-3.0, 3.0);
    for (double& x : kdata) x = rng.uniform(-3.0, 3.0);
    locatt::Tape tape;
    locatt::Tensor q = locatt::Tensor::from_data({n, d}, qdata);
    locatt::Tensor k = locatt::Tensor::from_data({n, d}, kdata);
    const double len = static_cast<double>(n);
    for (const auto& strategy : {layer, query, head}) {
      locatt::LocalnessParams params = random_localness(strategy.kind, d, rng);
      locatt::Tensor centers = locatt::predict_center(tape, q, params, n);
      locatt::Tensor windows = locatt::predict_window(tape, q, k, params, strategy, n);
      for (double p : centers.data()) {
        if (!(p > 0.0 && p < len)) {
          ok = false;
          reason = "center " + std::to_string(p) + " outside (0, " + std::to_string(n) + ")";
        }
      }
      const double hi = strategy.kind == locatt::WindowKind::head_specific ? 50.0 : len;
      for (double w : windows.data()) {
        if (!(w > 0.0 && w < hi)) {
          ok = false;
          reason = "window " + std::to_string(w) + " outside (0, " + std::to_string(hi) + ")";
        }
      }
    }
    // Pinned widths: the fixed strategy and a zeroed head-specific scalar.
    locatt::LocalnessParams fparams = random_localness(locatt::WindowKind::fixed, d, rng);
    const locatt::Tensor fixed_w = locatt::predict_window(tape, q, k, fparams, fixed, n);
    for (double w : fixed_w.data()) {
      if (w != 10.0) {
        ok = false;
        reason = "fixed window " + std::to_string(w) + " != 10";
      }
    }
    locatt::LocalnessParams hparams = random_localness(locatt::WindowKind::head_specific, d, rng);
    hparams.z_window.data()[0] = 0.0;
    const locatt::Tensor head_w = locatt::predict_window(tape, q, k, hparams, head, n);
    for (double w : head_w.data()) {
      if (w != 25.0) {
        ok = false;
        reason = "head window at z=0 " + std::to_string(w) + " != 25";
      }
    }
  }
  Outcome result;
  result.pass = ok;
  result.detail = ok ? "centers in (0, I), windows in range, pinned widths exact over " +
                           std::to_string(kRangeCases) + " passes per strategy"
                     : reason;
  return result;
}

Outcome check_full_gradients() {
  const auto start = clock_type::now();
  locatt::TaskSpec task;
  task.kind = locatt::TaskKind::local_pattern;
  task.vocab_size = 11;
  task.min_len = 5;
  task.max_len = 5;
  task.window_radius = 1;
  task.seed = 1;
  const locatt::Batch batch = locatt::generate_batch(task, 1, 0);
  const std::vector<int> tokens(batch.tokens.begin(), batch.tokens.begin() + 5);
  const std::vector<int> targets(batch.targets.begin(), batch.targets.begin() + 5);
  double worst = 0.0;
  std::string worst_name;
  bool ok = true;
  for (locatt::WindowKind kind :
       {locatt::WindowKind::query_specific, locatt::WindowKind::layer_specific,
        locatt::WindowKind::head_specific}) {
    locatt::EncoderConfig config;
    config.vocab_size = 11;
    config.d_model = 8;
    config.d_ff = 16;
    config.heads = 2;
    config.layers = 2;
    config.localness_layers = {1, 2};
    config.strategy.kind = kind;
    config.max_len = 50;
    config.seed = 1;
    locatt::EncoderState state = locatt::make_encoder(config);
    const auto report = locatt::grad_check(
        state.named,
        [&](locatt::Tape& tape) {
          locatt::Tensor logits = locatt::encode(tape, state, tokens);
          return locatt::cross_entropy(tape, logits, targets, targets.size());
        },
        kGradStep);
    for (const auto& entry : report.params) {
      if (entry.max_rel_err > worst) {
        worst = entry.max_rel_err;
        worst_name = entry.name;
      }
      if (!(entry.max_rel_err < kGradTol)) ok = false;
    }
  }
  const double took =
      std::chrono::duration<double>(clock_type::now() - start).count();
  Outcome result;
  result.pass = ok && took < kGradSeconds;
  std::ostringstream detail;
  detail << "max rel err " << worst << " (" << worst_name
         << ") across 3 window strategies, " << format_seconds(took);
  result.detail = detail.str();
  return result;
}

Outcome check_flat_bias_limit() {
  locatt::SplitMix64 rng(99);
  double worst = 0.0;
  for (int c = 0; c < kFlatCases; ++c) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next_int(15));
    const std::size_t d = 4;
    std::vector<double> qdata(n * d), kdata(n * d), vdata(n * d), centers(n);
    for (double& x : qdata) x = rng.uniform(-3.0, 3.0);
    for (double& x : kdata) x = rng.uniform(-3.0, 3.0);
    for (double& x : vdata) x = rng.uniform(-3.0, 3.0);
    for (double& x : centers) x = rng.uniform(0.1, static_cast<double>(n) - 0.1);
    locatt::Tape tape;
    locatt::Tensor q = locatt::Tensor::from_data({n, d}, qdata);
    locatt::Tensor k = locatt::Tensor::from_data({n, d}, kdata);
    locatt::Tensor v = locatt::Tensor::from_data({n, d}, vdata);
    locatt::Tensor energy = locatt::attention_energy(tape, q, k);
    // sigma = max(D / 2, floor), so D = 2 sigma pins sigma directly.
    locatt::Tensor wide = locatt::Tensor::full({n}, 2.0 * kFlatSigma);
    const locatt::GaussianBias bias =
        locatt::gaussian_bias(tape, locatt::Tensor::from_data({n}, centers), wide, n);
    const locatt::Tensor biased = locatt::attention_with_bias(tape, energy, &bias.g, v).weights;
    const locatt::Tensor plain = locatt::attention_with_bias(tape, energy, nullptr, v).weights;
    for (std::size_t i = 0; i < n * n; ++i) {
      worst = std::max(worst, std::abs(biased.at(i) - plain.at(i)));
    }
  }
  Outcome result;
  result.pass = worst < kFlatTol;
  std::ostringstream detail;
  detail << "max |weight diff| " << worst << " at sigma " << kFlatSigma << " over "
         << kFlatCases << " cases";
  result.detail = detail.str();
  return result;
}

Outcome check_learnability() {
  const auto start = clock_type::now();
  locatt::EncoderState state =
      locatt::make_encoder(experiment_model(locatt::WindowKind::query_specific, 1));
  const locatt::TaskSpec task = experiment_task(1);
  double best = 0.0;
  std::size_t hit_step = 0;
  locatt::TrainOptions options;
  options.steps = kLearnSteps;
  options.batch_size = 32;
  options.warmup_steps = 400;
  options.on_step = [&](std::size_t step, double) {
    if (step % kLearnProbeEvery != 0 && step != kLearnSteps) return true;
    const locatt::EvalResult eval = locatt::evaluate(state, task, 5);
    if (eval.token_accuracy > best) best = eval.token_accuracy;
    if (eval.token_accuracy >= kLearnAccuracy) {
      hit_step = step;
      return false;
    }
    const double elapsed =
        std::chrono::duration<double>(clock_type::now() - start).count();
    return elapsed < kLearnSeconds;
  };
  locatt::train(state, task, options);
  const double took =
      std::chrono::duration<double>(clock_type::now() - start).count();
  Outcome result;
  result.pass = hit_step != 0 && took < kLearnSeconds;
  std::ostringstream detail;
  if (hit_step != 0) {
    detail << "token accuracy reached " << best << " at step " << hit_step;
  } else {
    detail << "best token accuracy " << best << " within " << kLearnSteps << " steps";
  }
  detail << ", " << format_seconds(took);
  result.detail = detail.str();
  return result;
}

struct SeedComparison {
  double local_3gram = 0.0;
  double baseline_3gram = 0.0;
  double layer1_window = 0.0;
  double layer2_window = 0.0;
};

SeedComparison compare_one_seed(std::uint64_t seed) {
  SeedComparison out;
  const locatt::TaskSpec task = experiment_task(seed);
  locatt::TrainOptions options;
  options.steps = kCompareSteps;
  options.batch_size = 32;
  options.warmup_steps = 400;

  locatt::EncoderState local =
      locatt::make_encoder(experiment_model(locatt::WindowKind::query_specific, seed));
  locatt::train(local, task, options);
  out.local_3gram = locatt::evaluate(local, task, 10).ngram_rates[2];

  locatt::EncoderConfig base_config =
      experiment_model(locatt::WindowKind::query_specific, seed);
  base_config.localness_layers.clear();
  locatt::EncoderState baseline = locatt::make_encoder(base_config);
  locatt::train(baseline, task, options);
  out.baseline_3gram = locatt::evaluate(baseline, task, 10).ngram_rates[2];

  // Mean learned window per layer, over eval sequences, heads, positions.
  double sums[2] = {0.0, 0.0};
  std::size_t counts[2] = {0, 0};
  const locatt::Batch batch = locatt::generate_batch(task, 8, locatt::kEvalBatchOffset);
  for (std::size_t s = 0; s < batch.batch; ++s) {
    const std::size_t len = batch.lengths[s];
    std::vector<int> tokens(batch.tokens.begin() + s * batch.width,
                            batch.tokens.begin() + s * batch.width + len);
    std::vector<locatt::AttentionTrace> traces;
    locatt::Tape tape;
    locatt::EncodeOptions encode_options;
    encode_options.traces = &traces;
    locatt::encode(tape, local, tokens, encode_options);
    for (const auto& trace : traces) {
      if (trace.layer < 1 || trace.layer > 2) continue;
      for (double w : trace.windows) {
        sums[trace.layer - 1] += w;
        counts[trace.layer - 1] += 1;
      }
    }
  }
  out.layer1_window = counts[0] ? sums[0] / static_cast<double>(counts[0]) : 0.0;
  out.layer2_window = counts[1] ? sums[1] / static_cast<double>(counts[1]) : 0.0;
  return out;
}

Outcome check_localness_vs_baseline() {
  const auto start = clock_type::now();
  int rate_wins = 0;
  int rate_ties = 0;
  int window_wins = 0;
  std::ostringstream detail;
  detail << kCompareSteps << " steps;";
  for (std::uint64_t seed : kCompareSeeds) {
    const SeedComparison c = compare_one_seed(seed);
    if (c.local_3gram >= c.baseline_3gram) rate_wins += 1;
    if (c.local_3gram == c.baseline_3gram) rate_ties += 1;
    if (c.layer2_window > c.layer1_window) window_wins += 1;
    detail << " seed " << seed << ": 3-gram " << c.local_3gram << " vs "
           << c.baseline_3gram << ", windows L1 " << c.layer1_window << " L2 "
           << c.layer2_window << ";";
  }
  const double took =
      std::chrono::duration<double>(clock_type::now() - start).count();
  Outcome result;
  const bool primary = rate_wins >= 2;
  const bool degraded = window_wins >= 2;
  result.pass = primary || degraded;
  detail << (primary ? " primary: 3-gram majority"
                     : degraded ? " degraded: layer-2 window majority" : " neither form held");
  detail << " (" << rate_ties << " exact ties), " << format_seconds(took);
  result.detail = detail.str();
  return result;
}

const char* kDeterminismConfig = R"({
  "model": {
    "vocab_size": 16, "d_model": 16, "d_ff": 32, "heads": 2, "layers": 2,
    "localness_layers": [1, 2], "strategy": "query_specific", "max_len": 50, "seed": 1
  },
  "task": {
    "kind": "local_pattern", "vocab_size": 16, "min_len": 4, "max_len": 9,
    "window_radius": 1, "seed": 1
  },
  "train": { "steps": 30, "batch_size": 8, "warmup_steps": 400, "lr_scale": 1.0 }
})";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LOCATT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome check_determinism(const fs::path& dir) {
  const fs::path config = dir / "config.json";
  locatt::write_file(config.string(), kDeterminismConfig);
  const fs::path a = dir / "a";
  const fs::path b = dir / "b";
  fs::create_directories(a);
  fs::create_directories(b);
  Outcome result;
  if (run_cli("train --config " + config.string() + " --out " + (a / "ckpt.json").string()) != 0 ||
      run_cli("train --config " + config.string() + " --out " + (b / "ckpt.json").string()) != 0) {
    result.detail = "train run failed";
    return result;
  }
  const bool ckpt_same = locatt::read_file((a / "ckpt.json").string()) ==
                         locatt::read_file((b / "ckpt.json").string());
  const bool loss_same = locatt::read_file((a / "loss.csv").string()) ==
                         locatt::read_file((b / "loss.csv").string());
  result.pass = ckpt_same && loss_same;
  result.detail = std::string("checkpoint ") + (ckpt_same ? "identical" : "differs") +
                  ", loss curve " + (loss_same ? "identical" : "differs");
  return result;
}

Outcome check_serialization(const fs::path& dir) {
  Outcome result;
  const fs::path ckpt = dir / "a" / "ckpt.json";
  if (!fs::exists(ckpt)) {
    result.detail = "no checkpoint from the determinism run";
    return result;
  }
  const std::string first = locatt::read_file(ckpt.string());
  const locatt::Checkpoint loaded = locatt::checkpoint_from_json(first);
  const std::string second = locatt::checkpoint_to_json(loaded.state, loaded.step, loaded.rng_state);
  const bool round_trip = first == second;

  const fs::path out = dir / "diag";
  const fs::path config = dir / "config.json";
  const int code = run_cli("analyze --ckpt " + ckpt.string() + " --task " + config.string() +
                           " --out " + out.string());
  auto header = [&](const char* name) {
    const std::string text = locatt::read_file((out / name).string());
    return text.substr(0, text.find('\n'));
  };
  const bool headers_ok = code == 0 && header("windows.csv") == "layer,head,seq,pos,center,window" &&
                          header("summary.csv") == "layer,mean_window,q1,median,q3" &&
                          header("ngram.csv") == "n,rate";
  const std::string loss = locatt::read_file((dir / "a" / "loss.csv").string());
  const bool loss_ok = loss.substr(0, loss.find('\n')) == "step,loss";
  result.pass = round_trip && headers_ok && loss_ok;
  result.detail = std::string("save/load/save ") + (round_trip ? "byte-identical" : "differs") +
                  ", csv headers " + (headers_ok && loss_ok ? "verbatim" : "wrong");
  return result;
}

}  // namespace

// With no arguments every criterion runs; listing ids (e.g. "1 4 9")
// runs a subset. Criterion 9 reuses criterion 8's outputs and runs it
// first when selected alone.
int main(int argc, char** argv) {
  std::array<bool, 10> wanted{};
  if (argc <= 1) {
    wanted.fill(true);
  } else {
    for (int i = 1; i < argc; ++i) {
      const int id = std::atoi(argv[i]);
      if (id < 1 || id > 9) {
        std::cerr << "unknown criterion id: " << argv[i] << "\n";
        return 2;
      }
      wanted[static_cast<std::size_t>(id)] = true;
    }
    if (wanted[9]) wanted[8] = true;
  }
  const fs::path dir = "acceptance_tmp";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int failures = 0;
  int selected = 0;
  for (int id = 1; id <= 9; ++id) selected += wanted[static_cast<std::size_t>(id)] ? 1 : 0;
  if (wanted[1]) report(1, "softmax reweighting identity", check_reweighting_identity(), failures);
  if (wanted[2]) report(2, "gaussian bias hand cases", check_gaussian_hand_cases(), failures);
  if (wanted[3]) report(3, "center and window ranges", check_range_invariant(), failures);
  if (wanted[4]) report(4, "full-model gradient check", check_full_gradients(), failures);
  if (wanted[5])
    report(5, "flat-bias limit matches vanilla attention", check_flat_bias_limit(), failures);
  if (wanted[6]) report(6, "learnability on the windowed-sum task", check_learnability(), failures);
  if (wanted[7]) report(7, "localness vs disabled baseline", check_localness_vs_baseline(), failures);
  if (wanted[8]) report(8, "train determinism", check_determinism(dir), failures);
  if (wanted[9]) report(9, "checkpoint round-trip and csv headers", check_serialization(dir), failures);
  std::cout << (selected - failures) << "/" << selected << " criteria passed\n";
  return failures;
}
