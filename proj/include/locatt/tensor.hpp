// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace locatt {

// Dense f64 tensor of rank 0, 1, or 2. Tensor is a cheap shared handle:
// copies alias the same storage and gradient. A tensor is either a leaf
// (a parameter or explicit input, flagged through set_requires_grad) or
// an op output; Tape::backward accumulates gradients on leaves across
// calls and recomputes them on everything else.
class Tensor {
 public:
  Tensor() = default;  // null handle; deref is undefined

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data);
  static Tensor scalar(double v);

  explicit operator bool() const { return node_ != nullptr; }

  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t rows() const { return node_->shape[0]; }
  std::size_t cols() const { return node_->shape[1]; }
  std::size_t size() const { return node_->data.size(); }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  double& at(std::size_t i) { return node_->data[i]; }
  double at(std::size_t i) const { return node_->data[i]; }
  double& at(std::size_t i, std::size_t j) { return node_->data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return node_->data[i * cols() + j]; }

  // Value of a single-element tensor. Throws contract_error otherwise.
  double value() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool leaf() const { return node_->leaf; }
  // Declares this tensor a differentiable leaf (or demotes it back).
  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    node_->leaf = on;
  }
  // Used by ops on their outputs: differentiable but not a leaf.
  void mark_output() {
    node_->requires_grad = true;
    node_->leaf = false;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer, allocated and zeroed on first use.
  std::vector<double>& ensure_grad();
  const std::vector<double>& grad() const { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = false;
  };

  std::shared_ptr<Node> node_;
};

// Records the backward step of every differentiable op, in execution
// order, during one forward pass. backward() replays the steps in
// reverse. The tape owns no tensors beyond what the closures capture;
// rebuild (clear + forward) for every new pass.
class Tape {
 public:
  void record(Tensor output, std::function<void()> backward_step);

  // Seeds d(loss)/d(loss) = 1 and replays the recorded steps newest
  // first. Gradients of non-leaf outputs recorded here are reset at
  // the start, so calling backward twice accumulates on leaves only.
  // Throws contract_error unless loss has exactly one element.
  void backward(const Tensor& loss);

  std::size_t recorded() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    std::function<void()> step;
  };
  std::vector<Entry> entries_;
};

// Differentiable ops. Each checks shapes (dim_error on mismatch),
// computes forward, and records its backward step when any input
// requires a gradient. Inputs that do not require gradients receive
// none.

// (m,k) x (k,n) -> (m,n)
Tensor matmul(Tape& tape, Tensor a, Tensor b);
// (m,n) -> (n,m)
Tensor transpose(Tape& tape, Tensor a);
// (m,n) x (n) -> (m)
Tensor matvec(Tape& tape, Tensor a, Tensor x);
// (n) . (n) -> rank-0
Tensor dot(Tape& tape, Tensor a, Tensor b);

Tensor add(Tape& tape, Tensor a, Tensor b);
Tensor sub(Tape& tape, Tensor a, Tensor b);
Tensor mul(Tape& tape, Tensor a, Tensor b);
Tensor scale(Tape& tape, Tensor a, double c);

Tensor tanh(Tape& tape, Tensor a);
Tensor sigmoid(Tape& tape, Tensor a);
Tensor relu(Tape& tape, Tensor a);

// Softmax over each row of a (m,n) tensor. mask, when given, has the
// same shape with 1.0 = keep and 0.0 = exclude; excluded positions get
// -1e9 added to their logit and exactly 0.0 in the output. A row with
// every position excluded throws mask_error. The mask never receives
// a gradient.
Tensor rowwise_softmax(Tape& tape, Tensor a, const Tensor* mask = nullptr);

// Per-row normalization of a (m,d) tensor: (x - mean) / sqrt(var + eps),
// then gain and bias, both (d). Variance is the biased 1/d estimate.
Tensor layer_norm(Tape& tape, Tensor a, Tensor gain, Tensor bias, double eps);

// (m,d) -> (d), mean over rows.
Tensor mean_rows(Tape& tape, Tensor a);
// -> rank-0 sum of all elements.
Tensor sum_all(Tape& tape, Tensor a);
// (m,d) + (d) broadcast over rows.
Tensor add_rowvec(Tape& tape, Tensor a, Tensor v);
// single-element tensor -> (n), every entry the scalar.
Tensor broadcast_scalar(Tape& tape, Tensor s, std::size_t n);
// column-wise concat of (m, d_i) tensors -> (m, sum d_i).
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
// gather rows of a (V,d) table -> (ids.size(), d). Throws input_error
// on an id outside [0, V).
Tensor embed_rows(Tape& tape, Tensor table, const std::vector<int>& ids);
// rows [begin, begin+count) of a (m,d) tensor -> (count,d).
Tensor slice_rows(Tape& tape, Tensor a, std::size_t begin, std::size_t count);

// "(m, n)" rendering for error messages.
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace locatt
