#pragma once

#include "hiertraj/numerics/param_vector.hpp"
#include "hiertraj/numerics/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hiertraj {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode automatic differentiation over matrix-valued nodes.
//
// Nodes are appended in evaluation order, so parents always precede children
// and a single reverse sweep visits every node once. Parameters enter as
// leaves bound to a ParamVector segment; gradients are read back in the same
// flat layout.
class Tape {
 public:
  // Receives the node's accumulated output gradient and pushes contributions
  // to its parents through Tape::grad_slot.
  using BackwardFn = std::function<void(Tape&, const Tensor&)>;

  // A non-recording tape only evaluates values (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  // Leaf for segment `segment` of `params`, viewed as rows x cols (row-major).
  // Repeated requests for the same segment return the same leaf.
  Var param(const ParamVector& params, std::size_t segment, Index rows, Index cols);

  // Records a derived node. `needs_grad` should be true iff any parent needs
  // a gradient; `backward` may be empty for non-differentiable nodes.
  Var push(Tensor value, bool needs_grad, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient accumulator for a node, zero-initialised on first touch during a
  // backward sweep; nullptr if the node does not need a gradient.
  Tensor* grad_slot(std::size_t id);

  // Reverse sweep from `output`. With no seed the output must be 1 x 1.
  void backward(Var output);
  void backward(Var output, const Tensor& seed);

  // Gradient of the last backward sweep w.r.t. `like`'s segments; segments
  // that did not participate are exactly zero.
  ParamVector param_gradient(const ParamVector& like) const;

  // Row i holds d output_i / d theta (row-major flattening of `output`),
  // columns restricted to `segments` in the given order. One reverse sweep per
  // output entry.
  Matrix jacobian(Var output, const ParamVector& params, std::span<const std::size_t> segments);
  Matrix jacobian(Var output, const ParamVector& params);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_live = false;
    BackwardFn backward;
  };
  struct ParamLeaf {
    std::size_t node;
    std::size_t segment;
  };

  void check_owned(const Var& v) const;
  void reset_grads();
  void sweep(std::size_t output);

  bool record_;
  std::vector<Node> nodes_;
  std::vector<ParamLeaf> leaves_;
  std::vector<long> leaf_of_segment_;
  const ParamVector* bound_params_ = nullptr;
};

}  // namespace hiertraj
