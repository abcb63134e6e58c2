#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "adv/tensor.hpp"

namespace adv {

using NodeId = int;

// Axis-aligned half-open pixel rectangle: x in [x0, x1), y in [y0, y1).
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return static_cast<long long>(width()) * height(); }
};

// Reverse-mode tape over whole tensors. One forward pass builds the tape;
// backward() replays it in exact reverse order and may run only once.
//
// The primitive set is fixed: 2-d convolution (stride 1, zero padding,
// odd kernel), per-channel bias add, rectifier, matrix product, box mean
// pooling over a rectangle, elementwise add, scalar scale, row concat and
// full summation. Every operation checks its result for non-finite values.
class Tape {
 public:
  Tape() = default;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId leaf(Tensor value);

  // x: Cin x H x W, w: Cout x Cin x k x k with k odd; output Cout x H x W.
  NodeId conv2d(NodeId x, NodeId w);
  // 3-d input: bias per channel (dim 0). 2-d input: bias per column (dim 1).
  NodeId bias(NodeId x, NodeId b);
  NodeId relu(NodeId x);
  // a: N x K, b: K x M -> N x M.
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  // Mean over a rectangle of a C x H x W input -> vector of length C.
  NodeId box_mean_pool(NodeId x, const Rect& roi);
  // Stacks N vectors of equal length C into an N x C matrix.
  NodeId concat_rows(std::span<const NodeId> rows);
  // Sum of all elements -> tensor of shape {1}.
  NodeId sum(NodeId a);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Seeds the given nodes with coefficient tensors and sweeps the tape in
  // reverse. May be called once; afterwards grad() is valid for every node.
  void backward(std::span<const std::pair<NodeId, Tensor>> seeds);
  const Tensor& grad(NodeId id) const;

 private:
  enum class Op : unsigned char {
    kLeaf, kConv2d, kBias, kRelu, kMatMul, kAdd, kScale, kBoxMeanPool,
    kConcatRows, kSum
  };

  struct Node {
    Op op;
    NodeId a = -1, b = -1;
    double scalar = 0.0;
    Rect roi{};
    std::vector<NodeId> rows;  // kConcatRows only
    Tensor value;
    Tensor grad;
  };

  NodeId push(Node n, const char* op_name);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// d(objective)/d(input) where objective = sum of coeffs * output elements.
// Consumes the tape.
Tensor grad_input(Tape& tape, NodeId output, const Tensor& coeffs, NodeId input);

// Central-difference estimate of the same quantity, element by element.
// `objective` evaluates the scalar objective for a candidate input.
Tensor finite_diff(const std::function<double(const Tensor&)>& objective,
                   const Tensor& input, double step);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|); the comparison metric used by the
// gradient checks.
double max_relative_error(const Tensor& a, const Tensor& b);

}  // namespace adv
