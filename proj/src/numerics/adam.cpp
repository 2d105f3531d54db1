#include "hiertraj/numerics/adam.hpp"

#include "hiertraj/error.hpp"

#include <cmath>

namespace hiertraj {

void adam_step(ParamVector& params, const ParamVector& grad, AdamState& state,
               const AdamConfig& cfg) {
  const Index n = params.size();
  if (grad.size() != n) {
    throw ShapeError("adam: gradient has " + std::to_string(grad.size()) + " entries, params " +
                     std::to_string(n));
  }
  if (state.m.size() != n) {
    state.m = Vector::Zero(n);
    state.v = Vector::Zero(n);
    state.step = 0;
  }
  ++state.step;
  const Vector& g = grad.values();
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  params.values().array() -=
      cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

double clip_global_norm(ParamVector& grad, double max_norm) {
  const double norm = grad.values().norm();
  if (norm > max_norm && norm > 0.0) grad.values() *= max_norm / norm;
  return norm;
}

}  // namespace hiertraj
