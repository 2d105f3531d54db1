#pragma once

#include "hiertraj/numerics/param_vector.hpp"
#include "hiertraj/numerics/tape.hpp"

#include <random>
#include <string>

namespace hiertraj {

enum class Activation { identity, tanh, leaky_relu, sigmoid };

inline constexpr double kLeakySlope = 0.01;

double activate(Activation act, double x);
const char* to_string(Activation act);
Activation activation_from_string(const std::string& s);

// y = act(x W^T + b) with W stored as output_dim x input_dim.
struct DenseLayer {
  Index input_dim = 0;
  Index output_dim = 0;
  Activation activation = Activation::identity;
  std::size_t weight_segment = 0;
  std::size_t bias_segment = 0;

  // Registers "<name>.weight" and "<name>.bias" in `params`.
  static DenseLayer create(ParamVector& params, const std::string& name, Index input_dim,
                           Index output_dim, Activation activation);

  // Uniform in +-1/sqrt(input_dim).
  void init(ParamVector& params, std::mt19937_64& rng) const;

  Var forward(Tape& tape, const ParamVector& params, Var x) const;
  Index param_count() const { return output_dim * input_dim + output_dim; }
};

// Gated recurrent unit, gate order (reset, update, candidate):
//   r = sig(W_ir x + b_ir + W_hr h + b_hr)
//   z = sig(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//   h' = (1 - z) * n + z * h
struct GruCell {
  Index input_dim = 0;
  Index hidden_dim = 0;
  std::size_t w_ih = 0;  // 3H x input
  std::size_t w_hh = 0;  // 3H x H
  std::size_t b_ih = 0;  // 3H
  std::size_t b_hh = 0;  // 3H

  static GruCell create(ParamVector& params, const std::string& name, Index input_dim,
                        Index hidden_dim);
  void init(ParamVector& params, std::mt19937_64& rng) const;

  // x: batch x input_dim, h: batch x hidden_dim.
  Var forward(Tape& tape, const ParamVector& params, Var x, Var h) const;
  Index param_count() const { return 3 * hidden_dim * (input_dim + hidden_dim + 2); }
};

// Tape-free convenience wrappers (evaluate on a throwaway non-recording tape).
Tensor forward_dense(const DenseLayer& layer, const ParamVector& params, const Tensor& x);
Tensor forward_gru(const GruCell& cell, const ParamVector& params, const Tensor& x,
                   const Tensor& h_prev);

void init_uniform(ParamVector& params, std::size_t segment, double bound, std::mt19937_64& rng);

}  // namespace hiertraj
