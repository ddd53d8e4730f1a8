#pragma once

// Reverse-mode automatic differentiation over dense row-major double tensors.
//
// A Tape records every operation in execution order; Tensor is a lightweight
// handle (tape pointer + node index). Calling Tape::backward on a scalar
// replays the recorded rules in reverse, accumulating gradients into every
// node that depends on a parameter. Tapes are single-use and single-threaded:
// build a fresh one per training step.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace adt::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  int dim(int axis) const;  // negative axes count from the back
  int rank() const { return static_cast<int>(shape().size()); }
  std::size_t size() const { return numel(shape()); }
  std::span<const double> values() const;
  std::span<const double> grad() const;  // empty until backward touched it
  double item() const;                   // value of a one-element tensor

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// A named learnable array.
struct Param {
  Shape shape;
  std::vector<double> values;
};

// Parameters keyed by name; iteration order is the lexicographic name order.
using ParamStore = std::map<std::string, Param>;
using Gradients = std::map<std::string, std::vector<double>>;

std::size_t parameter_count(const ParamStore& params);

class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  Tensor constant(Shape shape, double fill);
  // A differentiable leaf; its gradient is readable after backward.
  Tensor variable(Shape shape, std::vector<double> values);
  // Leaf bound to a stored parameter; Tape::gradients reports it by name.
  Tensor parameter(const std::string& name, const Param& param);

  // Reverse sweep from a one-element tensor. Throws NonScalarLoss otherwise.
  void backward(const Tensor& loss);

  // Gradients of every parameter() leaf, zero-filled when unreached.
  Gradients gradients() const;

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  // Appends a node; `backward` may be empty for non-differentiable results.
  Tensor record(Shape shape, std::vector<double> value, bool requires_grad,
                std::function<void(Tape&)> backward);
  // Gradient buffer of a node, allocated (zeroed) on first use.
  std::vector<double>& grad_of(std::size_t id);

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> params_;
};

// ---- operators -------------------------------------------------------------
// Every operator validates shapes and throws ShapeMismatch naming both shapes.

// [..., M, K] x [K, N] (shared right operand) or [..., M, K] x [..., K, N]
// (batched, identical leading dims).
Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise a + b where b's shape is a trailing suffix of a's shape.
Tensor add(const Tensor& a, const Tensor& b);
// Elementwise product of equally shaped tensors.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);
Tensor softmax(const Tensor& a);  // over the last axis
// Per-row normalization over the last axis followed by gain * x + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-8);
// Rows of `table` ([V, D]) at `indices`; result shape is lead_shape + [D].
Tensor embedding_lookup(const Tensor& table, std::span<const int> indices, const Shape& lead_shape);
Tensor slice_last(const Tensor& a, int begin, int end);
Tensor concat_last(std::span<const Tensor> parts);
// Stacks 2-D tensors with equal column counts along the first axis.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor transpose_last2(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// Positions where mask[i] is true are overwritten with `value`. The mask
// covers the trailing mask.size() elements and repeats over leading blocks.
Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask, double value);
Tensor sum(const Tensor& a);
// Mean over rows of w_i * CE(logits_i, target_i); rows are the leading dims
// of [N, C] logits. Empty `weights` means all ones.
Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets,
                                 std::span<const double> weights = {});
// Mean predictive entropy of softmax(logits) over rows.
Tensor entropy_from_logits(const Tensor& logits);

// ---- optimization ----------------------------------------------------------

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(Gradients& grads, double max_norm);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// Bias-corrected Adam. Parameters without a gradient entry are treated as
// having zero gradient. Throws ShapeMismatch on size mismatch.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

// Versioned JSON checkpoint: {"version":1,"params":{name:{"shape":[..],"values":[..]}}}.
std::string params_to_json(const ParamStore& params);
ParamStore params_from_json(const std::string& text);

}  // namespace adt::ad
