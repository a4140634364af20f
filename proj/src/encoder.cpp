// SPDX-License-Identifier: Apache-2.0
#include "locatt/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "locatt/error.hpp"
#include "locatt/rng.hpp"

namespace locatt {

void validate(const EncoderConfig& config) {
  if (config.vocab_size < 2) throw config_error("vocab_size must be at least 2");
  if (config.d_model == 0 || config.d_ff == 0) throw config_error("d_model and d_ff must be positive");
  if (config.d_model % 2 != 0) throw config_error("d_model must be even for sinusoidal positions");
  if (config.heads == 0) throw config_error("heads must be positive");
  if (config.d_model % config.heads != 0)
    throw config_error("d_model " + std::to_string(config.d_model) + " not divisible by " +
                       std::to_string(config.heads) + " heads");
  if (config.layers == 0) throw config_error("layers must be positive");
  if (config.max_len == 0) throw config_error("max_len must be positive");
  std::vector<std::size_t> seen;
  for (std::size_t l : config.localness_layers) {
    if (l < 1 || l > config.layers)
      throw config_error("localness layer " + std::to_string(l) + " outside 1.." +
                         std::to_string(config.layers));
    if (std::find(seen.begin(), seen.end(), l) != seen.end())
      throw config_error("localness layer " + std::to_string(l) + " listed twice");
    seen.push_back(l);
  }
  if (config.strategy.kind == WindowKind::fixed && config.strategy.fixed_window <= 0.0)
    throw config_error("fixed_window must be positive");
  if (config.strategy.kind == WindowKind::head_specific && config.strategy.head_cap <= 0.0)
    throw config_error("head_cap must be positive");
}

namespace {

bool uses_localness(const EncoderConfig& config, std::size_t layer) {
  return std::find(config.localness_layers.begin(), config.localness_layers.end(), layer) !=
         config.localness_layers.end();
}

}  // namespace

EncoderState make_encoder(const EncoderConfig& config) {
  validate(config);
  EncoderState state;
  state.config = config;
  const std::size_t d = config.d_model, dh = head_dim(config);
  SplitMix64 master(config.seed);

  auto add_named = [&](const std::string& name, Tensor t) {
    state.named.emplace_back(name, t);
    return t;
  };
  auto xav = [&](const std::string& name, std::size_t in, std::size_t out) {
    return add_named(name, xavier_init({in, out}, master.split(name)));
  };
  auto filled = [&](const std::string& name, std::vector<std::size_t> shape, double v) {
    Tensor t = Tensor::full(std::move(shape), v);
    t.set_requires_grad(true);
    return add_named(name, t);
  };

  state.embedding = xav("embedding", config.vocab_size, d);

  for (std::size_t l = 1; l <= config.layers; ++l) {
    const std::string lp = "layers." + std::to_string(l) + ".";
    LayerParams layer;
    for (std::size_t m = 0; m < config.heads; ++m) {
      const std::string hp = lp + "attn.heads." + std::to_string(m) + ".";
      HeadProjection proj;
      proj.wq = xav(hp + "wq", d, dh);
      proj.wk = xav(hp + "wk", d, dh);
      proj.wv = xav(hp + "wv", d, dh);
      layer.attn.heads.push_back(proj);
      if (uses_localness(config, l)) {
        LocalnessParams local =
            make_localness_params(config.strategy.kind, dh, master.split(hp + "local"));
        add_named(hp + "local.w_center", local.w_center);
        add_named(hp + "local.u_center", local.u_center);
        if (local.u_window) add_named(hp + "local.u_window", local.u_window);
        if (local.w_window) add_named(hp + "local.w_window", local.w_window);
        if (local.z_window) add_named(hp + "local.z_window", local.z_window);
        layer.attn.local.push_back(local);
      }
    }
    layer.attn.w_out = xav(lp + "attn.w_out", config.heads * dh, d);
    layer.norm1_gain = filled(lp + "norm1.gain", {d}, 1.0);
    layer.norm1_bias = filled(lp + "norm1.bias", {d}, 0.0);
    layer.ffn_w1 = xav(lp + "ffn.w1", d, config.d_ff);
    layer.ffn_b1 = filled(lp + "ffn.b1", {config.d_ff}, 0.0);
    layer.ffn_w2 = xav(lp + "ffn.w2", config.d_ff, d);
    layer.ffn_b2 = filled(lp + "ffn.b2", {d}, 0.0);
    layer.norm2_gain = filled(lp + "norm2.gain", {d}, 1.0);
    layer.norm2_bias = filled(lp + "norm2.bias", {d}, 0.0);
    state.layers.push_back(std::move(layer));
  }

  // The classifier head starts at a tenth of the Xavier bound so an
  // untrained model predicts near-uniformly. Zero would be exact but
  // would also blank out the gradient path into every layer below it.
  Tensor cls = xavier_init({d, config.vocab_size}, master.split("classifier.weight"));
  for (double& w : cls.data()) {
    w *= 0.1;
  }
  state.cls_weight = add_named("classifier.weight", cls);
  state.cls_bias = filled("classifier.bias", {config.vocab_size}, 0.0);
  return state;
}

Tensor find_param(const EncoderState& state, const std::string& name) {
  for (const auto& [n, t] : state.named)
    if (n == name) return t;
  throw contract_error("no parameter named '" + name + "'");
}

Tensor sinusoidal_positions(std::size_t len, std::size_t d_model) {
  if (d_model % 2 != 0)
    throw config_error("sinusoidal_positions: d_model " + std::to_string(d_model) + " is odd");
  Tensor table = Tensor::zeros({len, d_model});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t k = 0; 2 * k < d_model; ++k) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, 2.0 * static_cast<double>(k) / static_cast<double>(d_model));
      table.at(pos, 2 * k) = std::sin(angle);
      table.at(pos, 2 * k + 1) = std::cos(angle);
    }
  }
  return table;
}

namespace {

Tensor encode_impl(Tape& tape, const EncoderState& state, const std::vector<int>& tokens,
                   std::size_t true_len, const EncodeOptions& options) {
  const EncoderConfig& config = state.config;
  const std::size_t padded_len = tokens.size();
  if (padded_len == 0) throw input_error("encode: empty token sequence");
  if (padded_len > config.max_len)
    throw input_error("encode: sequence length " + std::to_string(padded_len) + " exceeds max_len " +
                      std::to_string(config.max_len));
  if (true_len == 0 || true_len > padded_len)
    throw input_error("encode: true length " + std::to_string(true_len) + " outside 1.." +
                      std::to_string(padded_len));

  Tensor h = scale(tape, embed_rows(tape, state.embedding, tokens),
                   std::sqrt(static_cast<double>(config.d_model)));
  if (options.use_positions)
    h = add(tape, h, sinusoidal_positions(padded_len, config.d_model));

  Tensor mask;
  const Tensor* mask_ptr = nullptr;
  if (padded_len > true_len) {
    mask = Tensor::zeros({padded_len, padded_len});
    for (std::size_t i = 0; i < padded_len; ++i)
      for (std::size_t j = 0; j < true_len; ++j) mask.at(i, j) = 1.0;
    mask_ptr = &mask;
  }

  for (std::size_t l = 1; l <= config.layers; ++l) {
    const LayerParams& layer = state.layers[l - 1];
    Tensor att = multi_head_attention(tape, h, layer.attn, config.strategy,
                                      uses_localness(config, l), true_len, mask_ptr,
                                      options.traces, l);
    h = layer_norm(tape, add(tape, h, att), layer.norm1_gain, layer.norm1_bias, kLayerNormEps);
    Tensor ff = add_rowvec(
        tape,
        matmul(tape, relu(tape, add_rowvec(tape, matmul(tape, h, layer.ffn_w1), layer.ffn_b1)),
               layer.ffn_w2),
        layer.ffn_b2);
    h = layer_norm(tape, add(tape, h, ff), layer.norm2_gain, layer.norm2_bias, kLayerNormEps);
  }

  return add_rowvec(tape, matmul(tape, h, state.cls_weight), state.cls_bias);
}

}  // namespace

Tensor encode(Tape& tape, const EncoderState& state, const std::vector<int>& tokens,
              const EncodeOptions& options) {
  return encode_impl(tape, state, tokens, tokens.size(), options);
}

Tensor encode_padded(Tape& tape, const EncoderState& state, const std::vector<int>& tokens,
                     std::size_t true_len, const EncodeOptions& options) {
  return encode_impl(tape, state, tokens, true_len, options);
}

}  // namespace locatt
