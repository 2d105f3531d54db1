#include "hiertraj/numerics/layers.hpp"

#include "hiertraj/error.hpp"

#include <cmath>

namespace hiertraj {

double activate(Activation act, double x) {
  switch (act) {
    case Activation::identity:
      return x;
    case Activation::tanh:
      return std::tanh(x);
    case Activation::leaky_relu:
      return x > 0.0 ? x : kLeakySlope * x;
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::tanh:
      return "tanh";
    case Activation::leaky_relu:
      return "leaky_relu";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

void init_uniform(ParamVector& params, std::size_t segment, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto seg = params.segment_values(segment);
  for (Index i = 0; i < seg.size(); ++i) seg[i] = dist(rng);
}

DenseLayer DenseLayer::create(ParamVector& params, const std::string& name, Index input_dim,
                              Index output_dim, Activation activation) {
  DenseLayer layer;
  layer.input_dim = input_dim;
  layer.output_dim = output_dim;
  layer.activation = activation;
  layer.weight_segment = params.add_segment(name + ".weight", output_dim * input_dim);
  layer.bias_segment = params.add_segment(name + ".bias", output_dim);
  return layer;
}

void DenseLayer::init(ParamVector& params, std::mt19937_64& rng) const {
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  init_uniform(params, weight_segment, bound, rng);
  init_uniform(params, bias_segment, bound, rng);
}

Var DenseLayer::forward(Tape& tape, const ParamVector& params, Var x) const {
  if (x.cols() != input_dim) {
    throw ShapeError("dense: input has " + std::to_string(x.cols()) + " features, expected " +
                     std::to_string(input_dim));
  }
  Var w = tape.param(params, weight_segment, output_dim, input_dim);
  Var b = tape.param(params, bias_segment, 1, output_dim);
  Tensor pre = x.value() * w.value().transpose();
  pre.rowwise() += b.value().row(0);
  const Activation act = activation;
  Tensor out = pre.unaryExpr([act](double v) { return activate(act, v); });

  const bool grad = tape.needs_grad(x) || tape.needs_grad(w) || tape.needs_grad(b);
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  const std::size_t io = tape.size();
  return tape.push(std::move(out), grad, [ix, iw, ib, io, act](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(io);
    Tensor dpre;
    switch (act) {
      case Activation::identity:
        dpre = g;
        break;
      case Activation::tanh:
        dpre = g.array() * (1.0 - y.array().square());
        break;
      case Activation::sigmoid:
        dpre = g.array() * y.array() * (1.0 - y.array());
        break;
      case Activation::leaky_relu:
        dpre = g.binaryExpr(y, [](double gv, double yv) { return yv > 0.0 ? gv : kLeakySlope * gv; });
        break;
    }
    if (Tensor* gx = tp.grad_slot(ix)) gx->noalias() += dpre * tp.value(iw);
    if (Tensor* gw = tp.grad_slot(iw)) gw->noalias() += dpre.transpose() * tp.value(ix);
    if (Tensor* gb = tp.grad_slot(ib)) *gb += dpre.colwise().sum();
  });
}

GruCell GruCell::create(ParamVector& params, const std::string& name, Index input_dim,
                        Index hidden_dim) {
  GruCell cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  cell.w_ih = params.add_segment(name + ".w_ih", 3 * hidden_dim * input_dim);
  cell.w_hh = params.add_segment(name + ".w_hh", 3 * hidden_dim * hidden_dim);
  cell.b_ih = params.add_segment(name + ".b_ih", 3 * hidden_dim);
  cell.b_hh = params.add_segment(name + ".b_hh", 3 * hidden_dim);
  return cell;
}

void GruCell::init(ParamVector& params, std::mt19937_64& rng) const {
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double h_bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  init_uniform(params, w_ih, in_bound, rng);
  init_uniform(params, b_ih, in_bound, rng);
  init_uniform(params, w_hh, h_bound, rng);
  init_uniform(params, b_hh, h_bound, rng);
}

Var GruCell::forward(Tape& tape, const ParamVector& params, Var x, Var h) const {
  if (x.cols() != input_dim) {
    throw ShapeError("gru: input has " + std::to_string(x.cols()) + " features, expected " +
                     std::to_string(input_dim));
  }
  if (h.cols() != hidden_dim || h.rows() != x.rows()) {
    throw ShapeError("gru: hidden state is " + std::to_string(h.rows()) + "x" +
                     std::to_string(h.cols()) + ", expected " + std::to_string(x.rows()) + "x" +
                     std::to_string(hidden_dim));
  }
  const Index H = hidden_dim;
  Var wi = tape.param(params, w_ih, 3 * H, input_dim);
  Var wh = tape.param(params, w_hh, 3 * H, H);
  Var bi = tape.param(params, b_ih, 1, 3 * H);
  Var bh = tape.param(params, b_hh, 1, 3 * H);

  Tensor gi = x.value() * wi.value().transpose();
  gi.rowwise() += bi.value().row(0);
  Tensor gh = h.value() * wh.value().transpose();
  gh.rowwise() += bh.value().row(0);

  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Tensor r = (gi.leftCols(H) + gh.leftCols(H)).unaryExpr(sig);
  Tensor z = (gi.middleCols(H, H) + gh.middleCols(H, H)).unaryExpr(sig);
  Tensor ghn = gh.rightCols(H);
  Tensor n = (gi.rightCols(H) + r.cwiseProduct(ghn)).array().tanh().matrix();
  Tensor out = n + z.cwiseProduct(h.value() - n);

  const bool grad = tape.needs_grad(x) || tape.needs_grad(h) || tape.needs_grad(wi) ||
                    tape.needs_grad(wh) || tape.needs_grad(bi) || tape.needs_grad(bh);
  if (!grad || !tape.recording()) return tape.push(std::move(out), false, {});

  const std::size_t ix = x.id(), ih = h.id(), iwi = wi.id(), iwh = wh.id(), ibi = bi.id(),
                    ibh = bh.id();
  return tape.push(
      std::move(out), true,
      [=, r = std::move(r), z = std::move(z), n = std::move(n), ghn = std::move(ghn)](
          Tape& tp, const Tensor& g) {
        const Tensor& hv = tp.value(ih);
        const Tensor dz = g.cwiseProduct(hv - n);
        const Tensor dn = g.cwiseProduct((1.0 - z.array()).matrix());
        const Tensor dn_pre = dn.array() * (1.0 - n.array().square());
        const Tensor dr = dn_pre.cwiseProduct(ghn);
        const Tensor dr_pre = dr.array() * r.array() * (1.0 - r.array());
        const Tensor dz_pre = dz.array() * z.array() * (1.0 - z.array());

        const Index B = g.rows();
        Tensor dgi(B, 3 * H), dgh(B, 3 * H);
        dgi << dr_pre, dz_pre, dn_pre;
        dgh << dr_pre, dz_pre, dn_pre.cwiseProduct(r);

        if (Tensor* gx = tp.grad_slot(ix)) gx->noalias() += dgi * tp.value(iwi);
        if (Tensor* ghp = tp.grad_slot(ih)) {
          *ghp += g.cwiseProduct(z);
          ghp->noalias() += dgh * tp.value(iwh);
        }
        if (Tensor* gwi = tp.grad_slot(iwi)) gwi->noalias() += dgi.transpose() * tp.value(ix);
        if (Tensor* gwh = tp.grad_slot(iwh)) gwh->noalias() += dgh.transpose() * hv;
        if (Tensor* gbi = tp.grad_slot(ibi)) *gbi += dgi.colwise().sum();
        if (Tensor* gbh = tp.grad_slot(ibh)) *gbh += dgh.colwise().sum();
      });
}

Tensor forward_dense(const DenseLayer& layer, const ParamVector& params, const Tensor& x) {
  Tape tape(false);
  return layer.forward(tape, params, tape.constant(x)).value();
}

Tensor forward_gru(const GruCell& cell, const ParamVector& params, const Tensor& x,
                   const Tensor& h_prev) {
  Tape tape(false);
  return cell.forward(tape, params, tape.constant(x), tape.constant(h_prev)).value();
}

}  // namespace hiertraj
