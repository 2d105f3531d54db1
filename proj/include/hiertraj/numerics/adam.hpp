#pragma once

#include "hiertraj/numerics/param_vector.hpp"

namespace hiertraj {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};

// One bias-corrected Adam update, in place.
void adam_step(ParamVector& params, const ParamVector& grad, AdamState& state,
               const AdamConfig& cfg);

// Rescales `grad` so its Euclidean norm is at most `max_norm`. Returns the
// norm before clipping.
double clip_global_norm(ParamVector& grad, double max_norm);

}  // namespace hiertraj
