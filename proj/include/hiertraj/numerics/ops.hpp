#pragma once

#include "hiertraj/numerics/tape.hpp"

#include <vector>

// Differentiable primitives recorded on a Tape. Binary operations require
// both operands on the same tape.
namespace hiertraj::ad {

Var matmul(Var a, Var b);               // a * b
Var matmul_nt(Var a, Var b);            // a * b^T
Var matmul_const(const Tensor& c, Var a);  // c * a, c constant
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // element-wise
Var div(Var a, Var b);  // element-wise
Var add_row(Var a, Var row);  // a + broadcast 1 x cols row
Var mul_col(Var a, Var col);  // a scaled per row by rows x 1 column
Var mul_const(Var a, const Tensor& c);  // element-wise by constant (masks)
Var add_const(Var a, const Tensor& c);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, Index start, Index count);
Var slice_rows(Var a, Index start, Index count);
Var broadcast_rows(Var row, Index rows);  // 1 x c -> rows x c

Var sum(Var a);     // 1 x 1
Var mean(Var a);    // 1 x 1
Var row_sum(Var a);  // rows x 1

// out(j, i) = u(j) + v(i) for column vectors u, v (n x 1).
Var pairwise_sum(Var u, Var v);

// Column-wise softmax over rows where mask(j, i) != 0; masked entries are 0.
// Every column must have at least one unmasked entry.
Var softmax_cols_masked(Var a, const Tensor& mask);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var logsumexp_rows(Var a);  // rows x 1

}  // namespace hiertraj::ad
