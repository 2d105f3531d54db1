#pragma once

#include "hiertraj/numerics/param_vector.hpp"
#include "hiertraj/numerics/tape.hpp"

#include <algorithm>
#include <functional>
#include <random>

namespace hiertraj::testing {

using ScalarFn = std::function<Var(Tape&, const ParamVector&)>;

struct GradCheck {
  Vector analytic;
  Vector numeric;
  double rel_error = 0.0;  // ||a - n|| / max(||a||, ||n||, 1e-12)
};

inline double eval_scalar(const ScalarFn& f, const ParamVector& p) {
  Tape tape(false);
  return f(tape, p).value()(0, 0);
}

// Central differences with step h against one reverse sweep.
inline GradCheck check_gradient(const ScalarFn& f, const ParamVector& params, double h = 1e-5) {
  GradCheck out;
  {
    Tape tape;
    Var loss = f(tape, params);
    tape.backward(loss);
    out.analytic = tape.param_gradient(params).values();
  }
  ParamVector probe = params;
  out.numeric.resize(params.size());
  for (Index i = 0; i < params.size(); ++i) {
    const double x0 = probe.values()[i];
    probe.values()[i] = x0 + h;
    const double fp = eval_scalar(f, probe);
    probe.values()[i] = x0 - h;
    const double fm = eval_scalar(f, probe);
    probe.values()[i] = x0;
    out.numeric[i] = (fp - fm) / (2.0 * h);
  }
  const double scale = std::max({out.analytic.norm(), out.numeric.norm(), 1e-12});
  out.rel_error = (out.analytic - out.numeric).norm() / scale;
  return out;
}

inline void fill_uniform(ParamVector& p, std::mt19937_64& rng, double bound = 1.0) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < p.size(); ++i) p.values()[i] = dist(rng);
}

inline Tensor random_tensor(Index rows, Index cols, std::mt19937_64& rng, double bound = 1.0) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  return t;
}

}  // namespace hiertraj::testing
