#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mtlrank/common.hpp"
#include "mtlrank/rng.hpp"

namespace mtlrank::ag {

class Tape;

// Flat row-major mask; 1 marks the selected position.
using Mask = std::vector<std::uint8_t>;

// Dense row-major double tensor. A tensor is either a free value (tape ==
// nullptr) or a handle into the tape node it was produced by. Free values are
// immutable from the tape's point of view and safe to share across tapes.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

  static Tensor zeros(const std::vector<std::size_t>& shape);
  static Tensor full(const std::vector<std::size_t>& shape, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  // Size of the last dimension; 1 for scalars.
  std::size_t last_dim() const;

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double item() const;
  bool on_tape() const { return tape != nullptr && node >= 0; }
};

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order by construction; backward() walks them in reverse exactly
// once. One tape per training step, single-threaded.
class Tape {
 public:
  // Registers t as a leaf node on this tape.
  void watch(Tensor& t);

  // Gradient of a scalar root w.r.t. every node. Grad buffers are reset on
  // every call, so repeated calls with the same root are identical.
  void backward(const Tensor& root);

  const std::vector<double>& grad(int node) const;
  Tensor grad_tensor(const Tensor& t) const;

  std::size_t num_nodes() const { return nodes_.size(); }

  // Internal: records an op output; back(out_grad) accumulates into the
  // gradients of the op's inputs via add_grad.
  int push(std::size_t out_size,
           std::function<void(Tape&, const std::vector<double>&)> back);
  void add_grad(int node, const std::vector<double>& g);
  void add_grad(int node, const double* g, std::size_t n);

 private:
  struct Node {
    std::size_t size = 0;
    std::function<void(Tape&, const std::vector<double>&)> back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// --- forward ops -----------------------------------------------------------
// Every op validates input shapes, records itself on the inputs' tape (when
// present) and rejects non-finite outputs. masked_fill is the one exception:
// filled positions may hold +/-inf sentinels for a downstream softmax.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // equal shapes, or b a last-dim row vector
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor transpose(const Tensor& a);  // 2-D
Tensor reshape(const Tensor& a, const std::vector<std::size_t>& shape);
// 2-D concat along axis 0 (stack rows) or 1 (widen rows); 1-D along axis 0.
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor softmax_lastdim(const Tensor& a);
Tensor logsumexp_lastdim(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor layernorm_lastdim(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5);
// Inverted dropout: kept activations are scaled by 1/keep so eval needs no
// rescaling. Eval mode is the identity and consumes no randomness.
Tensor dropout(const Tensor& a, double keep, bool train, Rng& rng);
Tensor masked_fill(const Tensor& a, const Mask& fill, double value);
Tensor reduce_sum(const Tensor& a);
Tensor reduce_mean(const Tensor& a);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx);

// --- gradient verification ---------------------------------------------------
// f builds a scalar from a leaf registered on the supplied tape. Returns
//   max_i |g_i - fd_i| / max(1, |g_i|, |fd_i|)
// where g is the tape gradient at `point` and fd the central difference with
// step h. Probe evaluations run without a tape; non-finite probes are errors.
double finite_diff_check(
    const std::function<Tensor(Tape*, Tensor&)>& f,
    const std::vector<double>& point, double h = 1e-6);

}  // namespace mtlrank::ag
