#include "hiertraj/numerics/tape.hpp"

#include "hiertraj/error.hpp"

#include <string>

namespace hiertraj {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamVector& params, std::size_t segment, Index rows, Index cols) {
  if (bound_params_ != nullptr && bound_params_ != &params) {
    throw Error("tape already bound to a different parameter vector");
  }
  bound_params_ = &params;
  if (leaf_of_segment_.size() < params.segment_count()) {
    leaf_of_segment_.resize(params.segment_count(), -1);
  }
  const Segment& seg = params.segment(segment);
  if (rows * cols != seg.length) {
    throw ShapeError("param view " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " does not match segment '" + seg.name + "' of length " +
                     std::to_string(seg.length));
  }
  if (long cached = leaf_of_segment_[segment]; cached >= 0) {
    const auto id = static_cast<std::size_t>(cached);
    if (nodes_[id].value.rows() != rows) throw ShapeError("param view reshaped: " + seg.name);
    return Var(this, id);
  }
  Tensor value = Eigen::Map<const Tensor>(params.values().data() + seg.offset, rows, cols);
  nodes_.push_back(Node{std::move(value), Tensor(), record_, false, {}});
  const std::size_t id = nodes_.size() - 1;
  leaf_of_segment_[segment] = static_cast<long>(id);
  leaves_.push_back(ParamLeaf{id, segment});
  return Var(this, id);
}

Var Tape::push(Tensor value, bool needs_grad, BackwardFn backward) {
  const bool track = record_ && needs_grad;
  nodes_.push_back(Node{std::move(value), Tensor(), track, false,
                        track ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return nullptr;
  if (!n.grad_live) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.grad_live = true;
  }
  return &n.grad;
}

void Tape::check_owned(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw Error("output is not on this tape");
}

void Tape::reset_grads() {
  for (auto& n : nodes_) n.grad_live = false;
}

void Tape::sweep(std::size_t output) {
  for (std::size_t i = output + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad_live || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::backward(Var output) {
  check_owned(output);
  if (output.rows() != 1 || output.cols() != 1) {
    throw ShapeError("backward without seed requires a scalar output");
  }
  Tensor seed(1, 1);
  seed(0, 0) = 1.0;
  backward(output, seed);
}

void Tape::backward(Var output, const Tensor& seed) {
  check_owned(output);
  if (!record_) throw Error("backward on a non-recording tape");
  require_shape(seed, output.rows(), output.cols(), "backward seed");
  reset_grads();
  if (Tensor* g = grad_slot(output.id())) *g = seed;
  sweep(output.id());
}

ParamVector Tape::param_gradient(const ParamVector& like) const {
  ParamVector grad = like.zeros_like();
  for (const auto& leaf : leaves_) {
    const Node& n = nodes_[leaf.node];
    if (!n.grad_live) continue;
    const Segment& seg = like.segment(leaf.segment);
    grad.values().segment(seg.offset, seg.length) =
        Eigen::Map<const Vector>(n.grad.data(), seg.length);
  }
  return grad;
}

Matrix Tape::jacobian(Var output, const ParamVector& params,
                      std::span<const std::size_t> segments) {
  check_owned(output);
  const Index n_out = output.rows() * output.cols();
  const Index n_cols = params.packed_length(segments);
  Matrix jac = Matrix::Zero(n_out, n_cols);
  Tensor seed = Tensor::Zero(output.rows(), output.cols());
  for (Index i = 0; i < n_out; ++i) {
    seed.data()[i] = 1.0;
    backward(output, seed);
    seed.data()[i] = 0.0;
    Index col = 0;
    for (auto s : segments) {
      const Segment& seg = params.segment(s);
      if (s < leaf_of_segment_.size() && leaf_of_segment_[s] >= 0) {
        const Node& n = nodes_[static_cast<std::size_t>(leaf_of_segment_[s])];
        if (n.grad_live) {
          jac.row(i).segment(col, seg.length) =
              Eigen::Map<const Vector>(n.grad.data(), seg.length).transpose();
        }
      }
      col += seg.length;
    }
  }
  return jac;
}

Matrix Tape::jacobian(Var output, const ParamVector& params) {
  std::vector<std::size_t> all(params.segment_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return jacobian(output, params, all);
}

}  // namespace hiertraj
