// SPDX-License-Identifier: Apache-2.0
#include "locatt/localness.hpp"

#include <cmath>
#include <string>

#include "locatt/error.hpp"

namespace locatt {

Tensor attention_energy(Tape& tape, Tensor q, Tensor k) {
  if (q.rank() != 2 || k.rank() != 2 || q.cols() != k.cols())
    throw dim_error("attention_energy: q " + shape_str(q.shape()) + ", k " +
                    shape_str(k.shape()));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_d);
}

Tensor predict_center(Tape& tape, Tensor q, const LocalnessParams& params,
                      std::size_t true_len) {
  if (!params.w_center || !params.u_center)
    throw contract_error("predict_center: params lack w_center/u_center");
  Tensor hidden = locatt::tanh(tape, matmul(tape, q, params.w_center));
  Tensor p = matvec(tape, hidden, params.u_center);
  return scale(tape, sigmoid(tape, p), static_cast<double>(true_len));
}

Tensor predict_window(Tape& tape, Tensor q, Tensor k_valid, const LocalnessParams& params,
                      const WindowStrategy& strategy, std::size_t true_len) {
  const std::size_t rows = q.rows();
  const double len = static_cast<double>(true_len);
  switch (strategy.kind) {
    case WindowKind::fixed:
      return Tensor::full({rows}, strategy.fixed_window);
    case WindowKind::layer_specific: {
      if (!params.w_window || !params.u_window)
        throw contract_error("predict_window: layer_specific params lack w_window/u_window");
      Tensor kbar = mean_rows(tape, k_valid);
      Tensor hidden = locatt::tanh(tape, matvec(tape, transpose(tape, params.w_window), kbar));
      Tensor z = dot(tape, params.u_window, hidden);
      return broadcast_scalar(tape, scale(tape, sigmoid(tape, z), len), rows);
    }
    case WindowKind::query_specific: {
      if (!params.w_center || !params.u_window)
        throw contract_error("predict_window: query_specific params lack w_center/u_window");
      Tensor hidden = locatt::tanh(tape, matmul(tape, q, params.w_center));
      Tensor z = matvec(tape, hidden, params.u_window);
      return scale(tape, sigmoid(tape, z), len);
    }
    case WindowKind::head_specific: {
      if (!params.z_window)
        throw contract_error("predict_window: head_specific params lack z_window");
      Tensor d = scale(tape, sigmoid(tape, params.z_window), strategy.head_cap);
      return broadcast_scalar(tape, d, rows);
    }
  }
  throw config_error("predict_window: unknown strategy");
}

GaussianBias gaussian_bias(Tape& tape, Tensor centers, Tensor windows, std::size_t cols) {
  if (centers.rank() != 1 || windows.rank() != 1 || centers.size() != windows.size())
    throw dim_error("gaussian_bias: centers " + shape_str(centers.shape()) + ", windows " +
                    shape_str(windows.shape()));
  const std::size_t rows = centers.size();
  const bool grad = centers.requires_grad() || windows.requires_grad();

  Tensor sigma = Tensor::zeros({rows});
  for (std::size_t i = 0; i < rows; ++i)
    sigma.at(i) = std::max(windows.at(i) / 2.0, kSigmaFloor);

  Tensor g = Tensor::zeros({rows, cols});
  if (grad) g.mark_output();
  for (std::size_t i = 0; i < rows; ++i) {
    const double p = centers.at(i);
    const double two_s2 = 2.0 * sigma.at(i) * sigma.at(i);
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = static_cast<double>(j) - p;
      g.at(i, j) = -(d * d) / two_s2;
    }
  }

  if (grad)
    tape.record(g, [centers, windows, sigma, g, cols]() mutable {
      const std::size_t rows = centers.size();
      const double* gg = g.grad().data();
      for (std::size_t i = 0; i < rows; ++i) {
        const double p = centers.at(i);
        const double s = sigma.at(i);
        const double inv_s2 = 1.0 / (s * s);
        double gp = 0.0, gs = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double d = static_cast<double>(j) - p;
          const double go = gg[i * cols + j];
          gp += go * d * inv_s2;
          gs += go * d * d * inv_s2 / s;
        }
        if (centers.requires_grad()) centers.ensure_grad()[i] += gp;
        // sigma = D/2 above the floor, constant below it.
        if (windows.requires_grad() && windows.at(i) / 2.0 > kSigmaFloor)
          windows.ensure_grad()[i] += gs / 2.0;
      }
    });

  return {g, centers, windows, sigma};
}

AttentionResult attention_with_bias(Tape& tape, Tensor energy, const Tensor* g, Tensor v,
                                    const Tensor* mask) {
  Tensor logits = g ? add(tape, energy, *g) : energy;
  Tensor weights = rowwise_softmax(tape, logits, mask);
  Tensor output = matmul(tape, weights, v);
  return {output, weights};
}

HeadResult localness_attention(Tape& tape, Tensor q, Tensor k, Tensor v,
                               const LocalnessParams* local, const WindowStrategy& strategy,
                               std::size_t true_len, const Tensor* mask) {
  if (k.rows() != v.rows())
    throw dim_error("localness_attention: k " + shape_str(k.shape()) + ", v " +
                    shape_str(v.shape()));
  if (true_len == 0 || true_len > k.rows())
    throw contract_error("localness_attention: true_len " + std::to_string(true_len) +
                         " outside [1, " + std::to_string(k.rows()) + "]");
  Tensor energy = attention_energy(tape, q, k);
  if (!local) {
    AttentionResult r = attention_with_bias(tape, energy, nullptr, v, mask);
    return {r.output, r.weights, {}, {}, {}};
  }
  Tensor centers = predict_center(tape, q, *local, true_len);
  Tensor k_valid = k.rows() == true_len ? k : slice_rows(tape, k, 0, true_len);
  Tensor windows = predict_window(tape, q, k_valid, *local, strategy, true_len);
  GaussianBias bias = gaussian_bias(tape, centers, windows, k.rows());
  AttentionResult r = attention_with_bias(tape, energy, &bias.g, v, mask);
  return {r.output, r.weights, centers, windows, bias.sigma};
}

Tensor multi_head_attention(Tape& tape, Tensor x, const MultiHeadParams& params,
                            const WindowStrategy& strategy, bool use_localness,
                            std::size_t true_len, const Tensor* mask,
                            std::vector<AttentionTrace>* traces, std::size_t layer_index) {
  if (params.heads.empty()) throw contract_error("multi_head_attention: no heads");
  if (use_localness && params.local.size() != params.heads.size())
    throw contract_error("multi_head_attention: " + std::to_string(params.local.size()) +
                         " localness param sets for " + std::to_string(params.heads.size()) +
                         " heads");
  std::vector<Tensor> outputs;
  outputs.reserve(params.heads.size());
  for (std::size_t m = 0; m < params.heads.size(); ++m) {
    const HeadProjection& proj = params.heads[m];
    Tensor q = matmul(tape, x, proj.wq);
    Tensor k = matmul(tape, x, proj.wk);
    Tensor v = matmul(tape, x, proj.wv);
    const LocalnessParams* lp = use_localness ? &params.local[m] : nullptr;
    HeadResult hr = localness_attention(tape, q, k, v, lp, strategy, true_len, mask);
    outputs.push_back(hr.output);
    if (traces && use_localness) {
      AttentionTrace tr;
      tr.layer = layer_index;
      tr.head = m;
      tr.centers.assign(hr.centers.data().begin(), hr.centers.data().begin() + true_len);
      tr.windows.assign(hr.windows.data().begin(), hr.windows.data().begin() + true_len);
      tr.weights.resize(true_len * true_len);
      for (std::size_t i = 0; i < true_len; ++i)
        for (std::size_t j = 0; j < true_len; ++j)
          tr.weights[i * true_len + j] = hr.weights.at(i, j);
      traces->push_back(std::move(tr));
    }
  }
  return matmul(tape, concat_cols(tape, outputs), params.w_out);
}

Tensor xavier_init(std::vector<std::size_t> shape, SplitMix64 rng) {
  if (shape.size() != 2) throw contract_error("xavier_init: expected a matrix shape");
  const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

LocalnessParams make_localness_params(WindowKind kind, std::size_t d, const SplitMix64& rng) {
  auto zero_leaf = [](std::vector<std::size_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad(true);
    return t;
  };
  LocalnessParams p;
  p.w_center = xavier_init({d, d}, rng.split("w_center"));
  p.u_center = zero_leaf({d});
  switch (kind) {
    case WindowKind::fixed:
      break;
    case WindowKind::layer_specific:
      p.w_window = xavier_init({d, d}, rng.split("w_window"));
      p.u_window = zero_leaf({d});
      break;
    case WindowKind::query_specific:
      p.u_window = zero_leaf({d});
      break;
    case WindowKind::head_specific:
      p.z_window = zero_leaf({});
      break;
  }
  return p;
}

}  // namespace locatt
