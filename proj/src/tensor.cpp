// SPDX-License-Identifier: Apache-2.0
#include "locatt/tensor.hpp"

#include <cmath>
#include <cstring>

#include "locatt/error.hpp"
#include "locatt/kernels.hpp"

namespace locatt {
namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r)
    throw dim_error(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                    shape_str(t.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw dim_error(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()) + " differ");
}

Tensor make_out(std::vector<std::size_t> shape, bool grad) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (grad) out.mark_output();
  return out;
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->data.assign(shape_size(shape), 0.0);
  t.node_->shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t = zeros(std::move(shape));
  for (double& x : t.node_->data) x = v;
  return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data) {
  if (data.size() != shape_size(shape))
    throw dim_error("from_data: " + std::to_string(data.size()) + " values for shape " +
                    shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({}, {v}); }

double Tensor::value() const {
  if (size() != 1)
    throw contract_error("value(): tensor has " + std::to_string(size()) + " elements");
  return node_->data[0];
}

std::vector<double>& Tensor::ensure_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tape::record(Tensor output, std::function<void()> backward_step) {
  entries_.push_back({std::move(output), std::move(backward_step)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw contract_error("backward: loss has " + std::to_string(loss.size()) + " elements");
  for (Entry& e : entries_)
    if (!e.output.leaf()) e.output.clear_grad();
  Tensor seed = loss;
  seed.ensure_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->output.has_grad()) it->step();
}

Tensor matmul(Tape& tape, Tensor a, Tensor b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  if (a.cols() != b.rows())
    throw dim_error("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.rows(), kd = a.cols(), n = b.cols();
  const bool g = a.requires_grad() || b.requires_grad();
  Tensor out = make_out({m, n}, g);
  const auto& k = kernels::active();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < kd; ++p) k.axpy(pb + p * n, pa[i * kd + p], po + i * n, n);
  if (g)
    tape.record(out, [a, b, out]() mutable {
      const auto& k = kernels::active();
      const std::size_t m = a.rows(), kd = a.cols(), n = b.cols();
      const double* go = out.grad().data();
      if (a.requires_grad()) {
        double* ga = a.ensure_grad().data();
        const double* pb = b.data().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < kd; ++p) ga[i * kd + p] += k.dot(go + i * n, pb + p * n, n);
      }
      if (b.requires_grad()) {
        double* gb = b.ensure_grad().data();
        const double* pa = a.data().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < kd; ++p) k.axpy(go + i * n, pa[i * kd + p], gb + p * n, n);
      }
    });
  return out;
}

Tensor transpose(Tape& tape, Tensor a) {
  check_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const bool g = a.requires_grad();
  Tensor out = make_out({n, m}, g);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (g)
    tape.record(out, [a, out]() mutable {
      const std::size_t m = a.rows(), n = a.cols();
      double* ga = a.ensure_grad().data();
      const double* go = out.grad().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
  return out;
}

Tensor matvec(Tape& tape, Tensor a, Tensor x) {
  check_rank(a, 2, "matvec");
  check_rank(x, 1, "matvec");
  if (a.cols() != x.size())
    throw dim_error("matvec: " + shape_str(a.shape()) + " x " + shape_str(x.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  const bool g = a.requires_grad() || x.requires_grad();
  Tensor out = make_out({m}, g);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < m; ++i)
    out.at(i) = k.dot(a.data().data() + i * n, x.data().data(), n);
  if (g)
    tape.record(out, [a, x, out]() mutable {
      const auto& k = kernels::active();
      const std::size_t m = a.rows(), n = a.cols();
      const double* go = out.grad().data();
      if (a.requires_grad()) {
        double* ga = a.ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i) k.axpy(x.data().data(), go[i], ga + i * n, n);
      }
      if (x.requires_grad()) {
        double* gx = x.ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i) k.axpy(a.data().data() + i * n, go[i], gx, n);
      }
    });
  return out;
}

Tensor dot(Tape& tape, Tensor a, Tensor b) {
  check_rank(a, 1, "dot");
  check_rank(b, 1, "dot");
  check_same_shape(a, b, "dot");
  const bool g = a.requires_grad() || b.requires_grad();
  Tensor out = make_out({}, g);
  out.at(0) = kernels::active().dot(a.data().data(), b.data().data(), a.size());
  if (g)
    tape.record(out, [a, b, out]() mutable {
      const auto& k = kernels::active();
      const double go = out.grad()[0];
      if (a.requires_grad()) k.axpy(b.data().data(), go, a.ensure_grad().data(), a.size());
      if (b.requires_grad()) k.axpy(a.data().data(), go, b.ensure_grad().data(), b.size());
    });
  return out;
}

Tensor add(Tape& tape, Tensor a, Tensor b) {
  check_same_shape(a, b, "add");
  const bool g = a.requires_grad() || b.requires_grad();
  Tensor out = make_out(a.shape(), g);
  kernels::active().add(a.data().data(), b.data().data(), out.data().data(), a.size());
  if (g)
    tape.record(out, [a, b, out]() mutable {
      const auto& k = kernels::active();
      const double* go = out.grad().data();
      if (a.requires_grad()) k.axpy(go, 1.0, a.ensure_grad().data(), a.size());
      if (b.requires_grad()) k.axpy(go, 1.0, b.ensure_grad().data(), b.size());
    });
  return out;
}

Tensor sub(Tape& tape, Tensor a, Tensor b) {
  check_same_shape(a, b, "sub");
  const bool g = a.requires_grad() || b.requires_grad();
  Tensor out = make_out(a.shape(), g);
  kernels::active().sub(a.data().data(), b.data().data(), out.data().data(), a.size());
  if (g)
    tape.record(out, [a, b, out]() mutable {
      const auto& k = kernels::active();
      const double* go = out.grad().data();
      if (a.requires_grad()) k.axpy(go, 1.0, a.ensure_grad().data(), a.size());
      if (b.requires_grad()) k.axpy(go, -1.0, b.ensure_grad().data(), b.size());
    });
  return out;
}

Tensor mul(Tape& tape, Tensor a, Tensor b) {
  check_same_shape(a, b, "mul");
  const bool g = a.requires_grad() || b.requires_grad();
  Tensor out = make_out(a.shape(), g);
  kernels::active().mul(a.data().data(), b.data().data(), out.data().data(), a.size());
  if (g)
    tape.record(out, [a, b, out]() mutable {
      const double* go = out.grad().data();
      const std::size_t n = a.size();
      if (a.requires_grad()) {
        double* ga = a.ensure_grad().data();
        const double* pb = b.data().data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i];
      }
      if (b.requires_grad()) {
        double* gb = b.ensure_grad().data();
        const double* pa = a.data().data();
        for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * pa[i];
      }
    });
  return out;
}

Tensor scale(Tape& tape, Tensor a, double c) {
  const bool g = a.requires_grad();
  Tensor out = make_out(a.shape(), g);
  kernels::active().scale(a.data().data(), c, out.data().data(), a.size());
  if (g)
    tape.record(out, [a, out, c]() mutable {
      kernels::active().axpy(out.grad().data(), c, a.ensure_grad().data(), a.size());
    });
  return out;
}

Tensor tanh(Tape& tape, Tensor a) {
  const bool g = a.requires_grad();
  Tensor out = make_out(a.shape(), g);
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::tanh(a.data()[i]);
  if (g)
    tape.record(out, [a, out]() mutable {
      double* ga = a.ensure_grad().data();
      const double* go = out.grad().data();
      const double* y = out.data().data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
    });
  return out;
}

Tensor sigmoid(Tape& tape, Tensor a) {
  const bool g = a.requires_grad();
  Tensor out = make_out(a.shape(), g);
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
  if (g)
    tape.record(out, [a, out]() mutable {
      double* ga = a.ensure_grad().data();
      const double* go = out.grad().data();
      const double* y = out.data().data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
    });
  return out;
}

Tensor relu(Tape& tape, Tensor a) {
  const bool g = a.requires_grad();
  Tensor out = make_out(a.shape(), g);
  kernels::active().relu(a.data().data(), out.data().data(), a.size());
  if (g)
    tape.record(out, [a, out]() mutable {
      double* ga = a.ensure_grad().data();
      const double* go = out.grad().data();
      const double* x = a.data().data();
      for (std::size_t i = 0; i < a.size(); ++i)
        if (x[i] > 0.0) ga[i] += go[i];
    });
  return out;
}

Tensor rowwise_softmax(Tape& tape, Tensor a, const Tensor* mask) {
  check_rank(a, 2, "rowwise_softmax");
  if (mask) check_same_shape(a, *mask, "rowwise_softmax");
  const std::size_t m = a.rows(), n = a.cols();
  const bool g = a.requires_grad();
  Tensor out = make_out({m, n}, g);
  const auto& k = kernels::active();
  std::vector<double> buf(n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data().data() + i * n;
    const double* mrow = mask ? mask->data().data() + i * n : nullptr;
    bool any = !mask;
    for (std::size_t j = 0; j < n; ++j) {
      const bool keep = !mrow || mrow[j] != 0.0;
      any = any || keep;
      buf[j] = keep ? row[j] : row[j] - 1e9;
    }
    if (!any) throw mask_error("rowwise_softmax: row " + std::to_string(i) + " fully masked");
    const double mx = k.max(buf.data(), n);
    double* orow = out.data().data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mrow && mrow[j] == 0.0) {
        orow[j] = 0.0;
      } else {
        orow[j] = std::exp(buf[j] - mx);
        s += orow[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= s;
  }
  if (g)
    tape.record(out, [a, out]() mutable {
      const std::size_t m = a.rows(), n = a.cols();
      double* ga = a.ensure_grad().data();
      const double* go = out.grad().data();
      const double* y = out.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double gy = kernels::active().dot(go + i * n, y + i * n, n);
        for (std::size_t j = 0; j < n; ++j)
          ga[i * n + j] += y[i * n + j] * (go[i * n + j] - gy);
      }
    });
  return out;
}

Tensor layer_norm(Tape& tape, Tensor a, Tensor gain, Tensor bias, double eps) {
  check_rank(a, 2, "layer_norm");
  check_rank(gain, 1, "layer_norm");
  check_rank(bias, 1, "layer_norm");
  const std::size_t m = a.rows(), d = a.cols();
  if (gain.size() != d || bias.size() != d)
    throw dim_error("layer_norm: input " + shape_str(a.shape()) + ", gain " +
                    shape_str(gain.shape()) + ", bias " + shape_str(bias.shape()));
  const bool g = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  Tensor out = make_out({m, d}, g);
  Tensor xhat = Tensor::zeros({m, d});
  Tensor inv = Tensor::zeros({m});
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data().data() + i * d;
    const double mu = k.sum(row, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double iv = 1.0 / std::sqrt(var + eps);
    inv.at(i) = iv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * iv;
      xhat.at(i, j) = xh;
      out.at(i, j) = gain.at(j) * xh + bias.at(j);
    }
  }
  if (g)
    tape.record(out, [a, gain, bias, out, xhat, inv]() mutable {
      const std::size_t m = a.rows(), d = a.cols();
      const double* go = out.grad().data();
      const double* xh = xhat.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        if (gain.requires_grad()) {
          double* gg = gain.ensure_grad().data();
          for (std::size_t j = 0; j < d; ++j) gg[j] += go[i * d + j] * xh[i * d + j];
        }
        if (bias.requires_grad()) {
          double* gb = bias.ensure_grad().data();
          for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
        }
        if (a.requires_grad()) {
          double* ga = a.ensure_grad().data();
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = go[i * d + j] * gain.at(j);
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[i * d + j];
          }
          const double dn = static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = go[i * d + j] * gain.at(j);
            ga[i * d + j] +=
                inv.at(i) * (dxh - sum_dxh / dn - xh[i * d + j] * sum_dxh_xh / dn);
          }
        }
      }
    });
  return out;
}

Tensor mean_rows(Tape& tape, Tensor a) {
  check_rank(a, 2, "mean_rows");
  const std::size_t m = a.rows(), d = a.cols();
  const bool g = a.requires_grad();
  Tensor out = make_out({d}, g);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < m; ++i)
    k.axpy(a.data().data() + i * d, 1.0 / static_cast<double>(m), out.data().data(), d);
  if (g)
    tape.record(out, [a, out]() mutable {
      const auto& k = kernels::active();
      const std::size_t m = a.rows(), d = a.cols();
      double* ga = a.ensure_grad().data();
      for (std::size_t i = 0; i < m; ++i)
        k.axpy(out.grad().data(), 1.0 / static_cast<double>(m), ga + i * d, d);
    });
  return out;
}

Tensor sum_all(Tape& tape, Tensor a) {
  const bool g = a.requires_grad();
  Tensor out = make_out({}, g);
  out.at(0) = kernels::active().sum(a.data().data(), a.size());
  if (g)
    tape.record(out, [a, out]() mutable {
      const double go = out.grad()[0];
      double* ga = a.ensure_grad().data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += go;
    });
  return out;
}

Tensor add_rowvec(Tape& tape, Tensor a, Tensor v) {
  check_rank(a, 2, "add_rowvec");
  check_rank(v, 1, "add_rowvec");
  if (a.cols() != v.size())
    throw dim_error("add_rowvec: " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
  const std::size_t m = a.rows(), d = a.cols();
  const bool g = a.requires_grad() || v.requires_grad();
  Tensor out = make_out({m, d}, g);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < m; ++i)
    k.add(a.data().data() + i * d, v.data().data(), out.data().data() + i * d, d);
  if (g)
    tape.record(out, [a, v, out]() mutable {
      const auto& k = kernels::active();
      const std::size_t m = a.rows(), d = a.cols();
      const double* go = out.grad().data();
      if (a.requires_grad()) k.axpy(go, 1.0, a.ensure_grad().data(), m * d);
      if (v.requires_grad()) {
        double* gv = v.ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i) k.axpy(go + i * d, 1.0, gv, d);
      }
    });
  return out;
}

Tensor broadcast_scalar(Tape& tape, Tensor s, std::size_t n) {
  if (s.size() != 1)
    throw contract_error("broadcast_scalar: source has " + std::to_string(s.size()) +
                         " elements");
  const bool g = s.requires_grad();
  Tensor out = Tensor::full({n}, s.data()[0]);
  if (g) {
    out.mark_output();
    tape.record(out, [s, out, n]() mutable {
      s.ensure_grad()[0] += kernels::active().sum(out.grad().data(), n);
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw contract_error("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  bool g = false;
  for (const Tensor& p : parts) {
    check_rank(p, 2, "concat_cols");
    if (p.rows() != m)
      throw dim_error("concat_cols: row counts differ, " + shape_str(parts[0].shape()) +
                      " vs " + shape_str(p.shape()));
    total += p.cols();
    g = g || p.requires_grad();
  }
  Tensor out = make_out({m, total}, g);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t d = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::memcpy(out.data().data() + i * total + off, p.data().data() + i * d,
                  d * sizeof(double));
    off += d;
  }
  if (g) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    tape.record(out, [held = std::move(held), out, total]() mutable {
      const auto& k = kernels::active();
      const std::size_t m = out.rows();
      const double* go = out.grad().data();
      std::size_t off = 0;
      for (Tensor& p : held) {
        const std::size_t d = p.cols();
        if (p.requires_grad()) {
          double* gp = p.ensure_grad().data();
          for (std::size_t i = 0; i < m; ++i) k.axpy(go + i * total + off, 1.0, gp + i * d, d);
        }
        off += d;
      }
    });
  }
  return out;
}

Tensor embed_rows(Tape& tape, Tensor table, const std::vector<int>& ids) {
  check_rank(table, 2, "embed_rows");
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw input_error("embed_rows: token id " + std::to_string(id) + " outside [0, " +
                        std::to_string(v) + ")");
  const bool g = table.requires_grad();
  Tensor out = make_out({ids.size(), d}, g);
  for (std::size_t t = 0; t < ids.size(); ++t)
    std::memcpy(out.data().data() + t * d,
                table.data().data() + static_cast<std::size_t>(ids[t]) * d, d * sizeof(double));
  if (g)
    tape.record(out, [table, out, ids]() mutable {
      const auto& k = kernels::active();
      const std::size_t d = table.cols();
      double* gt = table.ensure_grad().data();
      const double* go = out.grad().data();
      for (std::size_t t = 0; t < ids.size(); ++t)
        k.axpy(go + t * d, 1.0, gt + static_cast<std::size_t>(ids[t]) * d, d);
    });
  return out;
}

Tensor slice_rows(Tape& tape, Tensor a, std::size_t begin, std::size_t count) {
  check_rank(a, 2, "slice_rows");
  if (begin + count > a.rows())
    throw dim_error("slice_rows: rows [" + std::to_string(begin) + ", " +
                    std::to_string(begin + count) + ") outside " + shape_str(a.shape()));
  const std::size_t d = a.cols();
  const bool g = a.requires_grad();
  Tensor out = make_out({count, d}, g);
  std::memcpy(out.data().data(), a.data().data() + begin * d, count * d * sizeof(double));
  if (g)
    tape.record(out, [a, out, begin, count]() mutable {
      const std::size_t d = a.cols();
      kernels::active().axpy(out.grad().data(), 1.0, a.ensure_grad().data() + begin * d,
                             count * d);
    });
  return out;
}

}  // namespace locatt
