// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "locatt/localness.hpp"
#include "locatt/tensor.hpp"

namespace locatt {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 512;
  std::size_t d_ff = 2048;
  std::size_t heads = 8;
  std::size_t layers = 6;
  std::vector<std::size_t> localness_layers = {1, 2, 3};  // 1-based
  WindowStrategy strategy{};
  std::size_t max_len = 50;
  std::uint64_t seed = 1;
};

// Throws config_error on any inconsistency (zero sizes, indivisible
// d_model, localness layer outside 1..layers or repeated, odd d_model).
void validate(const EncoderConfig& config);

inline std::size_t head_dim(const EncoderConfig& config) {
  return config.d_model / config.heads;
}

inline constexpr double kLayerNormEps = 1e-6;

struct LayerParams {
  MultiHeadParams attn;
  Tensor norm1_gain, norm1_bias;
  Tensor ffn_w1, ffn_b1;  // (d_model, d_ff), (d_ff)
  Tensor ffn_w2, ffn_b2;  // (d_ff, d_model), (d_model)
  Tensor norm2_gain, norm2_bias;
};

// Full parameter set. `named` lists every parameter once, in canonical
// order, under its dotted name; the entries alias the struct fields.
struct EncoderState {
  EncoderConfig config;
  Tensor embedding;  // (vocab, d_model)
  std::vector<LayerParams> layers;
  Tensor cls_weight;  // (d_model, vocab)
  Tensor cls_bias;    // (vocab)
  std::vector<std::pair<std::string, Tensor>> named;
};

// Builds and initializes a model from config.seed. Every parameter gets
// its own generator, split off by dotted name, so values do not depend
// on initialization order. Matrices are Xavier-uniform; gains are 1;
// everything else starts at 0.
EncoderState make_encoder(const EncoderConfig& config);

// Parameter lookup by dotted name; throws contract_error when absent.
Tensor find_param(const EncoderState& state, const std::string& name);

// Constant sinusoidal table: entry (pos, 2k) = sin(pos / 10000^(2k/d)),
// entry (pos, 2k+1) = cos of the same angle. Requires even d_model.
Tensor sinusoidal_positions(std::size_t len, std::size_t d_model);

struct EncodeOptions {
  bool use_positions = true;  // test hook; permutation tests switch it off
  std::vector<AttentionTrace>* traces = nullptr;
};

// Per-token logits (tokens.size(), vocab) for an unpadded sequence.
// Throws input_error on an empty, overlong, or out-of-vocabulary input.
Tensor encode(Tape& tape, const EncoderState& state, const std::vector<int>& tokens,
              const EncodeOptions& options = {});

// Same, with tokens padded beyond true_len. Padded columns are masked
// out of every attention row and padded key rows are excluded from the
// layer-specific window statistics; rows at and beyond true_len in the
// result carry no meaning.
Tensor encode_padded(Tape& tape, const EncoderState& state, const std::vector<int>& tokens,
                     std::size_t true_len, const EncodeOptions& options = {});

}  // namespace locatt
