#include "hiertraj/numerics/ops.hpp"

#include "hiertraj/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace hiertraj::ad {

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw Error("operands live on different tapes");
  return *a.tape();
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

bool any_grad(Tape& t, Var a) { return t.needs_grad(a); }
bool any_grad(Tape& t, Var a, Var b) { return t.needs_grad(a) || t.needs_grad(b); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), any_grad(t, a, b), [ia, ib](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) ga->noalias() += g * tp.value(ib).transpose();
    if (Tensor* gb = tp.grad_slot(ib)) gb->noalias() += tp.value(ia).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value().transpose(), any_grad(t, a, b),
                [ia, ib](Tape& tp, const Tensor& g) {
                  if (Tensor* ga = tp.grad_slot(ia)) ga->noalias() += g * tp.value(ib);
                  if (Tensor* gb = tp.grad_slot(ib)) gb->noalias() += g.transpose() * tp.value(ia);
                });
}

Var matmul_const(const Tensor& c, Var a) {
  Tape& t = *a.tape();
  if (c.cols() != a.rows()) throw ShapeError("matmul_const: inner dimensions differ");
  const std::size_t ia = a.id();
  Tensor ct = c.transpose();
  return t.push(c * a.value(), any_grad(t, a), [ia, ct = std::move(ct)](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) ga->noalias() += ct * g;
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().transpose(), any_grad(t, a), [ia](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g.transpose();
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), any_grad(t, a, b), [ia, ib](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g;
    if (Tensor* gb = tp.grad_slot(ib)) *gb += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), any_grad(t, a, b), [ia, ib](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g;
    if (Tensor* gb = tp.grad_slot(ib)) *gb -= g;
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), any_grad(t, a, b),
                [ia, ib](Tape& tp, const Tensor& g) {
                  if (Tensor* ga = tp.grad_slot(ia)) *ga += g.cwiseProduct(tp.value(ib));
                  if (Tensor* gb = tp.grad_slot(ib)) *gb += g.cwiseProduct(tp.value(ia));
                });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "div");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseQuotient(b.value()), any_grad(t, a, b),
                [ia, ib](Tape& tp, const Tensor& g) {
                  const Tensor& bv = tp.value(ib);
                  if (Tensor* ga = tp.grad_slot(ia)) *ga += g.cwiseQuotient(bv);
                  if (Tensor* gb = tp.grad_slot(ib)) {
                    *gb -= g.cwiseProduct(tp.value(ia)).cwiseQuotient(bv.cwiseProduct(bv));
                  }
                });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row shape mismatch");
  const std::size_t ia = a.id(), ir = row.id();
  Tensor out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), any_grad(t, a, row), [ia, ir](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g;
    if (Tensor* gr = tp.grad_slot(ir)) *gr += g.colwise().sum();
  });
}

Var mul_col(Var a, Var col) {
  Tape& t = tape_of(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: column shape mismatch");
  const std::size_t ia = a.id(), ic = col.id();
  Tensor out = a.value().array().colwise() * col.value().col(0).array();
  return t.push(std::move(out), any_grad(t, a, col), [ia, ic](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      ga->array() += g.array().colwise() * tp.value(ic).col(0).array();
    }
    if (Tensor* gc = tp.grad_slot(ic)) *gc += g.cwiseProduct(tp.value(ia)).rowwise().sum();
  });
}

Var mul_const(Var a, const Tensor& c) {
  Tape& t = *a.tape();
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw ShapeError("mul_const: shape mismatch");
  const std::size_t ia = a.id();
  return t.push(a.value().cwiseProduct(c), any_grad(t, a), [ia, c](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g.cwiseProduct(c);
  });
}

Var add_const(Var a, const Tensor& c) {
  Tape& t = *a.tape();
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw ShapeError("add_const: shape mismatch");
  const std::size_t ia = a.id();
  return t.push(a.value() + c, any_grad(t, a), [ia](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g;
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value() * s, any_grad(t, a), [ia, s](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += s * g;
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.push((a.value().array() + s).matrix(), any_grad(t, a),
                [ia](Tape& tp, const Tensor& g) {
                  if (Tensor* ga = tp.grad_slot(ia)) *ga += g;
                });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  Tensor out = a.value().array().tanh().matrix();
  return t.push(out, any_grad(t, a), [ia, out](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) ga->array() += g.array() * (1.0 - out.array().square());
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  Tensor out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.push(out, any_grad(t, a), [ia, out](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) ga->array() += g.array() * out.array() * (1.0 - out.array());
  });
}

Var leaky_relu(Var a, double slope) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  Tensor out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return t.push(std::move(out), any_grad(t, a), [ia, slope](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      const Tensor& x = tp.value(ia);
      *ga += g.binaryExpr(x, [slope](double gv, double xv) { return xv > 0.0 ? gv : slope * gv; });
    }
  });
}

Var exp(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  Tensor out = a.value().array().exp().matrix();
  return t.push(out, any_grad(t, a), [ia, out](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += g.cwiseProduct(out);
  });
}

Var log(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().array().log().matrix(), any_grad(t, a),
                [ia](Tape& tp, const Tensor& g) {
                  if (Tensor* ga = tp.grad_slot(ia)) *ga += g.cwiseQuotient(tp.value(ia));
                });
}

Var square(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().cwiseAbs2(), any_grad(t, a), [ia](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) *ga += 2.0 * g.cwiseProduct(tp.value(ia));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  bool grad = false;
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw Error("concat_cols: operands live on different tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
    grad = grad || t.needs_grad(p);
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tensor out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.push(std::move(out), grad, [ids, widths](Tape& tp, const Tensor& g) {
    Index at2 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (Tensor* gp = tp.grad_slot(ids[k])) *gp += g.middleCols(at2, widths[k]);
      at2 += widths[k];
    }
  });
}

Var slice_cols(Var a, Index start, Index count) {
  Tape& t = *a.tape();
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  const std::size_t ia = a.id();
  return t.push(a.value().middleCols(start, count), any_grad(t, a),
                [ia, start, count](Tape& tp, const Tensor& g) {
                  if (Tensor* ga = tp.grad_slot(ia)) ga->middleCols(start, count) += g;
                });
}

Var slice_rows(Var a, Index start, Index count) {
  Tape& t = *a.tape();
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  const std::size_t ia = a.id();
  return t.push(a.value().middleRows(start, count), any_grad(t, a),
                [ia, start, count](Tape& tp, const Tensor& g) {
                  if (Tensor* ga = tp.grad_slot(ia)) ga->middleRows(start, count) += g;
                });
}

Var broadcast_rows(Var row, Index rows) {
  Tape& t = *row.tape();
  if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a single row");
  const std::size_t ir = row.id();
  Tensor out = row.value().replicate(rows, 1);
  return t.push(std::move(out), any_grad(t, row), [ir](Tape& tp, const Tensor& g) {
    if (Tensor* gr = tp.grad_slot(ir)) *gr += g.colwise().sum();
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), any_grad(t, a), [ia](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) ga->array() += g(0, 0);
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().rowwise().sum(), any_grad(t, a), [ia](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) ga->colwise() += g.col(0);
  });
}

Var pairwise_sum(Var u, Var v) {
  Tape& t = tape_of(u, v);
  if (u.cols() != 1 || v.cols() != 1 || u.rows() != v.rows()) {
    throw ShapeError("pairwise_sum: expects two n x 1 columns");
  }
  const Index n = u.rows();
  const std::size_t iu = u.id(), iv = v.id();
  Tensor out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) out(j, i) = u.value()(j, 0) + v.value()(i, 0);
  }
  return t.push(std::move(out), any_grad(t, u, v), [iu, iv](Tape& tp, const Tensor& g) {
    if (Tensor* gu = tp.grad_slot(iu)) *gu += g.rowwise().sum();
    if (Tensor* gv = tp.grad_slot(iv)) *gv += g.colwise().sum().transpose();
  });
}

Var softmax_cols_masked(Var a, const Tensor& mask) {
  Tape& t = *a.tape();
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeError("softmax_cols_masked: mask shape mismatch");
  }
  const Tensor& x = a.value();
  Tensor out = Tensor::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.cols(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < x.rows(); ++j) {
      if (mask(j, i) != 0.0) mx = std::max(mx, x(j, i));
    }
    if (!std::isfinite(mx)) throw ShapeError("softmax_cols_masked: fully masked column");
    double z = 0.0;
    for (Index j = 0; j < x.rows(); ++j) {
      if (mask(j, i) != 0.0) {
        out(j, i) = std::exp(x(j, i) - mx);
        z += out(j, i);
      }
    }
    out.col(i) /= z;
  }
  const std::size_t ia = a.id();
  return t.push(out, any_grad(t, a), [ia, out](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      // d x_j = y_j (g_j - sum_k g_k y_k), per column
      const Eigen::RowVectorXd dot = g.cwiseProduct(out).colwise().sum();
      *ga += out.cwiseProduct(g - dot.replicate(g.rows(), 1));
    }
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  const std::size_t ia = a.id();
  return t.push(out, any_grad(t, a), [ia, out](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      const Eigen::VectorXd dot = g.cwiseProduct(out).rowwise().sum();
      *ga += out.cwiseProduct(g - dot.replicate(1, g.cols()));
    }
  });
}

Var logsumexp_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    out(r, 0) = mx + std::log((x.row(r).array() - mx).exp().sum());
  }
  const std::size_t ia = a.id();
  return t.push(out, any_grad(t, a), [ia, out](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      const Tensor& xv = tp.value(ia);
      for (Index r = 0; r < xv.rows(); ++r) {
        ga->row(r).array() += g(r, 0) * (xv.row(r).array() - out(r, 0)).exp();
      }
    }
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    out.row(r) = (x.row(r).array() - lse).matrix();
  }
  const std::size_t ia = a.id();
  return t.push(out, any_grad(t, a), [ia, out](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(ia)) {
      const Tensor soft = out.array().exp().matrix();
      const Eigen::VectorXd gs = g.rowwise().sum();
      *ga += g - soft.cwiseProduct(gs.replicate(1, g.cols()));
    }
  });
}

}  // namespace hiertraj::ad
