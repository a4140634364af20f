// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "locatt/rng.hpp"
#include "locatt/tensor.hpp"

namespace locatt {

// How a head chooses the width D of its locality window.
enum class WindowKind {
  fixed,           // constant width for every query
  layer_specific,  // one learned width per forward pass, from the mean key
  query_specific,  // one learned width per query, sharing w_center
  head_specific,   // one learned width per head, a bare parameter
};

struct WindowStrategy {
  WindowKind kind = WindowKind::query_specific;
  double fixed_window = 10.0;  // fixed only
  double head_cap = 50.0;      // head_specific only: D = cap * sigmoid(z)
};

// Learned localness parameters of one head. Only the tensors the
// strategy uses are allocated; the others stay null handles. All
// projections are stored in right-multiplier orientation (d_in, d_out).
struct LocalnessParams {
  Tensor w_center;  // (d, d)  center projection; query_specific windows reuse it
  Tensor u_center;  // (d)
  Tensor u_window;  // (d)     layer_specific, query_specific
  Tensor w_window;  // (d, d)  layer_specific
  Tensor z_window;  // ()      head_specific
};

// Width below which the Gaussian deviation is clamped: sigma = max(D/2, floor).
inline constexpr double kSigmaFloor = 1e-3;

// Bias matrix plus the per-query quantities it was built from.
struct GaussianBias {
  Tensor g;        // (rows, cols), every entry <= 0
  Tensor centers;  // (rows)
  Tensor windows;  // (rows)
  Tensor sigma;    // (rows), detached diagnostic values
};

struct AttentionResult {
  Tensor output;   // (rows, d_v)
  Tensor weights;  // (rows, cols), row-stochastic
};

// One attention head's full result. centers/windows/sigma are null
// handles when the head ran without the locality bias.
struct HeadResult {
  Tensor output;
  Tensor weights;
  Tensor centers;
  Tensor windows;
  Tensor sigma;
};

struct HeadProjection {
  Tensor wq, wk, wv;  // each (d_model, d_head)
};

struct MultiHeadParams {
  std::vector<HeadProjection> heads;
  std::vector<LocalnessParams> local;  // one per head; empty when bias unused
  Tensor w_out;                        // (heads * d_head, d_model)
};

// Detached copy of one head's locality behavior on one sequence,
// restricted to the valid (unpadded) block.
struct AttentionTrace {
  std::size_t layer = 0;  // 1-based
  std::size_t head = 0;   // 0-based
  std::vector<double> centers;  // length I
  std::vector<double> windows;  // length I
  std::vector<double> weights;  // I*I row-major
};

// Scaled dot product: Q Kᵀ / sqrt(d_head).
Tensor attention_energy(Tape& tape, Tensor q, Tensor k);

// P_i = true_len * sigmoid(u_centerᵀ tanh(Q_i W_c)) for every query row.
Tensor predict_center(Tape& tape, Tensor q, const LocalnessParams& params,
                      std::size_t true_len);

// D_i per the strategy. k_valid holds only the true (unpadded) key rows;
// it feeds the layer_specific mean and is ignored by other strategies.
Tensor predict_window(Tape& tape, Tensor q, Tensor k_valid, const LocalnessParams& params,
                      const WindowStrategy& strategy, std::size_t true_len);

// G[i][j] = -(j - P_i)^2 / (2 sigma_i^2) over key positions j < cols.
GaussianBias gaussian_bias(Tape& tape, Tensor centers, Tensor windows, std::size_t cols);

// softmax(energy + g) V, or plain softmax(energy) V when g is null.
AttentionResult attention_with_bias(Tape& tape, Tensor energy, const Tensor* g, Tensor v,
                                    const Tensor* mask = nullptr);

// One head end to end. local == nullptr runs vanilla attention. true_len
// is the unpadded length I; when k has more rows the caller must also
// mask the padded columns.
HeadResult localness_attention(Tape& tape, Tensor q, Tensor k, Tensor v,
                               const LocalnessParams* local, const WindowStrategy& strategy,
                               std::size_t true_len, const Tensor* mask = nullptr);

// All heads over a shared input: per-head QKV projections, per-head
// attention, column concat, output projection. When traces is given and
// the bias is enabled, one AttentionTrace per head is appended, tagged
// with layer_index.
Tensor multi_head_attention(Tape& tape, Tensor x, const MultiHeadParams& params,
                            const WindowStrategy& strategy, bool use_localness,
                            std::size_t true_len, const Tensor* mask = nullptr,
                            std::vector<AttentionTrace>* traces = nullptr,
                            std::size_t layer_index = 0);

// Uniform Xavier init, bounds +-sqrt(6 / (fan_in + fan_out)), as a leaf.
// Takes its own generator, typically a split() child of the model seed.
Tensor xavier_init(std::vector<std::size_t> shape, SplitMix64 rng);

// Fresh localness parameters: Xavier for matrices, zero for vectors and
// scalars, so training starts at P = I/2 and mid-range D.
LocalnessParams make_localness_params(WindowKind kind, std::size_t d, const SplitMix64& rng);

}  // namespace locatt
