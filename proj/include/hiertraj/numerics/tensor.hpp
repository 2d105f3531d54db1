#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace hiertraj {

using Index = Eigen::Index;

// Row-major 2-D array; rows are batch entries (or graph nodes), columns are
// features. Vectors are 1 x n.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Column-major dense matrix/vector for the linear-algebra side (covariances,
// Jacobians, solves).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

bool all_finite(const Tensor& t);

// Throws NonFiniteError naming `what` when any entry is NaN or infinite.
void require_finite(const Tensor& t, std::string_view what);

// Throws ShapeError unless `t` is rows x cols.
void require_shape(const Tensor& t, Index rows, Index cols, std::string_view what);

Tensor row_vector(std::initializer_list<double> values);

}  // namespace hiertraj
