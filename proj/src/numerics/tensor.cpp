#include "hiertraj/numerics/tensor.hpp"

#include "hiertraj/error.hpp"

#include <string>

namespace hiertraj {

bool all_finite(const Tensor& t) { return t.allFinite(); }

void require_finite(const Tensor& t, std::string_view what) {
  if (!t.allFinite()) {
    throw NonFiniteError(std::string(what) + ": non-finite entry");
  }
}

void require_shape(const Tensor& t, Index rows, Index cols, std::string_view what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(t.rows()) + "x" +
                     std::to_string(t.cols()));
  }
}

Tensor row_vector(std::initializer_list<double> values) {
  Tensor t(1, static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) t(0, i++) = v;
  return t;
}

}  // namespace hiertraj
