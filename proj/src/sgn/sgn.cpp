#include "hiertraj/sgn/sgn.hpp"

#include "hiertraj/error.hpp"
#include "hiertraj/numerics/ops.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace hiertraj {

nlohmann::json SgnConfig::to_json() const {
  return {{"feature_dim", feature_dim}, {"hidden_dim", hidden_dim},
          {"embed_dim", embed_dim},     {"latent_dim", latent_dim},
          {"mixtures", mixtures},       {"heads", heads},
          {"graph_layers", graph_layers}, {"single_agent_loss", single_agent_loss},
          {"attend_absolute", attend_absolute}, {"sigma_floor", sigma_floor},
          {"eps", eps},                 {"beta", beta},
          {"feature_scale", feature_scale}, {"goal_scale", goal_scale}};
}

SgnConfig SgnConfig::from_json(const nlohmann::json& j) {
  SgnConfig c;
  try {
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.mixtures = j.value("mixtures", c.mixtures);
    c.heads = j.value("heads", c.heads);
    c.graph_layers = j.value("graph_layers", c.graph_layers);
    c.single_agent_loss = j.value("single_agent_loss", c.single_agent_loss);
    c.attend_absolute = j.value("attend_absolute", c.attend_absolute);
    c.sigma_floor = j.value("sigma_floor", c.sigma_floor);
    c.eps = j.value("eps", c.eps);
    c.beta = j.value("beta", c.beta);
    c.feature_scale = j.value("feature_scale", c.feature_scale);
    c.goal_scale = j.value("goal_scale", c.goal_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sgn config: ") + e.what());
  }
  if (c.hidden_dim < 1 || c.embed_dim < 1 || c.latent_dim < 1 || c.mixtures < 1 || c.heads < 1 ||
      c.graph_layers < 1 || c.graph_layers > 2 || c.sigma_floor <= 0.0) {
    throw ConfigError("sgn config: dimensions must be positive, graph_layers 1 or 2, sigma_floor > 0");
  }
  return c;
}

SgnModel SgnModel::create(const SgnConfig& cfg) {
  SgnModel m;
  m.cfg = cfg;
  auto& p = m.params;
  const Index F = cfg.feature_dim, H = cfg.hidden_dim, E = cfg.embed_dim, L = cfg.latent_dim;
  m.rec_abs = GruCell::create(p, "rec_abs", F, H);
  m.rec_rel = GruCell::create(p, "rec_rel", F, H);
  m.enc_abs = DenseLayer::create(p, "enc_abs", H, E, Activation::tanh);
  m.enc_rel = DenseLayer::create(p, "enc_rel", H, E, Activation::tanh);
  m.enc_joint = DenseLayer::create(p, "enc_joint", 2 * E, L, Activation::tanh);
  for (Index h = 0; h < cfg.heads; ++h) {
    for (int l = 0; l < cfg.graph_layers; ++l) {
      m.att.push_back(DenseLayer::create(
          p, "att" + std::to_string(h) + "_" + std::to_string(l), 2 * E, 1, Activation::leaky_relu));
    }
  }
  m.enc_latent = DenseLayer::create(p, "enc_latent", E * cfg.heads + L, L, Activation::identity);
  m.out_insert = DenseLayer::create(p, "out_insert", L, 1, Activation::identity);
  m.out_gmm = DenseLayer::create(p, "out_gmm", L, 3 * cfg.mixtures, Activation::identity);
  return m;
}

void SgnModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  rec_abs.init(params, rng);
  rec_rel.init(params, rng);
  enc_abs.init(params, rng);
  enc_rel.init(params, rng);
  enc_joint.init(params, rng);
  for (const auto& a : att) a.init(params, rng);
  enc_latent.init(params, rng);
  out_insert.init(params, rng);
  out_gmm.init(params, rng);
}

GraphBatch make_batch(std::span<const SemanticGraph* const> graphs, const SgnConfig& cfg) {
  if (graphs.empty()) throw ConfigError("empty graph batch");
  GraphBatch b;
  const Index steps = graphs.front()->steps();
  Index total = 0;
  for (const auto* g : graphs) {
    if (g->steps() != steps) throw ShapeError("graphs in a batch must share the window length");
    if (g->node_count() == 0) throw ShapeError("graph without nodes");
    if (!g->absolute.empty() && g->absolute.front().cols() != cfg.feature_dim) {
      throw ShapeError("graph feature dimension does not match the model");
    }
    b.offset.push_back(total);
    b.count.push_back(g->node_count());
    b.reference.push_back(total + static_cast<Index>(g->reference));
    b.node_ids.push_back(g->node_ids);
    total += g->node_count();
  }
  const Index B = static_cast<Index>(graphs.size());
  b.same_graph = Tensor::Zero(total, total);
  b.group = Tensor::Zero(B, total);
  for (Index k = 0; k < B; ++k) {
    b.same_graph.block(b.offset[k], b.offset[k], b.count[k], b.count[k]).setOnes();
    b.group.block(k, b.offset[k], 1, b.count[k]).setOnes();
  }
  for (Index s = 0; s < steps; ++s) {
    Tensor abs(total, cfg.feature_dim), rel(total, cfg.feature_dim), pres(total, 1);
    for (Index k = 0; k < B; ++k) {
      const auto* g = graphs[static_cast<std::size_t>(k)];
      abs.middleRows(b.offset[k], b.count[k]) = g->absolute[s] * cfg.feature_scale;
      rel.middleRows(b.offset[k], b.count[k]) = g->relative[s] * cfg.feature_scale;
      pres.middleRows(b.offset[k], b.count[k]) = g->mask.col(s);
    }
    b.absolute.push_back(std::move(abs));
    b.relative.push_back(std::move(rel));
    b.present.push_back(std::move(pres));
  }
  return b;
}

GraphBatch make_batch(const SemanticGraph& graph, const SgnConfig& cfg) {
  const SemanticGraph* one[] = {&graph};
  return make_batch(one, cfg);
}

namespace {

Var masked_step(Tape& tape, const GruCell& cell, const ParamVector& p, const Tensor& x,
                const Tensor& present, Var h) {
  Var next = cell.forward(tape, p, tape.constant(x), h);
  if (present.minCoeff() == 1.0) return next;
  const Tensor keep = present.replicate(1, cell.hidden_dim);
  const Tensor hold = (1.0 - keep.array()).matrix();
  return ad::add(ad::mul_const(next, keep), ad::mul_const(h, hold));
}

}  // namespace

NodeEncodings encode_node_histories(Tape& tape, const SgnModel& model, const GraphBatch& batch) {
  const Index n = batch.nodes();
  Var h = tape.constant(Tensor::Zero(n, model.cfg.hidden_dim));
  Var hr = h;
  for (std::size_t s = 0; s < batch.absolute.size(); ++s) {
    h = masked_step(tape, model.rec_abs, model.params, batch.absolute[s], batch.present[s], h);
    hr = masked_step(tape, model.rec_rel, model.params, batch.relative[s], batch.present[s], hr);
  }
  return {h, hr};
}

Var attention_weights(Tape& tape, const SgnModel& model, const DenseLayer& f_att, Var embedded,
                      const Tensor& same_graph, Tensor* scores) {
  const Index E = embedded.cols();
  if (f_att.input_dim != 2 * E) throw ShapeError("attention layer does not match embedding width");
  Var w = tape.param(model.params, f_att.weight_segment, 1, 2 * E);
  Var b = tape.param(model.params, f_att.bias_segment, 1, 1);
  Var from = ad::matmul_nt(embedded, ad::slice_cols(w, 0, E));    // n x 1, node j
  Var to = ad::add_row(ad::matmul_nt(embedded, ad::slice_cols(w, E, E)), b);  // node i
  Var pre = ad::pairwise_sum(from, to);
  if (scores != nullptr) *scores = pre.value();
  Var logits = ad::leaky_relu(pre, kLeakySlope);
  return ad::softmax_cols_masked(logits, same_graph);
}

Var aggregate_relations(Var alpha, Var values) { return ad::matmul(ad::transpose(alpha), values); }

SgnOutputs sgn_forward(Tape& tape, const SgnModel& model, const GraphBatch& batch) {
  const auto& cfg = model.cfg;
  const auto& p = model.params;
  const NodeEncodings enc = encode_node_histories(tape, model, batch);
  Var ea = model.enc_abs.forward(tape, p, enc.h);
  Var er = model.enc_rel.forward(tape, p, enc.h_rel);

  SgnOutputs out;
  std::vector<Var> heads;
  for (Index head = 0; head < cfg.heads; ++head) {
    Var keys = cfg.attend_absolute ? ea : er;
    Var values = er;
    for (int layer = 0; layer < cfg.graph_layers; ++layer) {
      Tensor scores;
      Var alpha = attention_weights(tape, model, model.attention(head, layer), keys,
                                    batch.same_graph, &scores);
      out.attention.push_back(alpha);
      out.attention_scores.push_back(std::move(scores));
      values = aggregate_relations(alpha, values);
      keys = values;
    }
    heads.push_back(values);
  }
  Var agg = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  Var joint = model.enc_joint.forward(tape, p, ad::concat_cols({ea, er}));
  Var z = model.enc_latent.forward(tape, p, ad::concat_cols({agg, joint}));

  Var logit = model.out_insert.forward(tape, p, z);
  out.w_raw = ad::sigmoid(ad::neg(logit));  // 1 / (1 + exp(logit))
  Var totals = ad::matmul_const(batch.group.transpose(), ad::matmul_const(batch.group, out.w_raw));
  out.w = ad::div(out.w_raw, totals);

  const Index M = cfg.mixtures;
  Var gmm = model.out_gmm.forward(tape, p, z);
  out.log_mix = ad::log_softmax_rows(ad::slice_cols(gmm, 0, M));
  out.mean = ad::scale(ad::slice_cols(gmm, M, M), cfg.goal_scale);
  out.stddev = ad::add_scalar(ad::scale(ad::exp(ad::slice_cols(gmm, 2 * M, M)), cfg.goal_scale),
                              cfg.sigma_floor);
  return out;
}

Var sgn_loss(Tape& tape, const SgnOutputs& out, const GraphBatch& batch,
             std::span<const SgnLabels> labels, const SgnConfig& cfg, double normalizer) {
  const Index n = batch.nodes();
  const Index M = cfg.mixtures;
  if (static_cast<Index>(labels.size()) != batch.graphs()) {
    throw ShapeError("sgn_loss: one label set per graph required");
  }
  Tensor goals(n, M), onehot = Tensor::Zero(n, 1), weight = Tensor::Zero(n, 1);
  for (Index k = 0; k < batch.graphs(); ++k) {
    const auto& lab = labels[static_cast<std::size_t>(k)];
    if (static_cast<Index>(lab.goals.size()) != batch.count[k]) {
      throw ShapeError("sgn_loss: goal labels do not cover every node");
    }
    if (lab.inserted < 0 || lab.inserted >= batch.count[k]) {
      throw ShapeError("sgn_loss: inserted node index out of range");
    }
    for (Index i = 0; i < batch.count[k]; ++i) {
      goals.row(batch.offset[k] + i).setConstant(lab.goals[static_cast<std::size_t>(i)]);
      weight(batch.offset[k] + i, 0) = cfg.single_agent_loss ? 0.0 : 1.0;
    }
    if (cfg.single_agent_loss) weight(batch.reference[k], 0) = 1.0;
    onehot(batch.offset[k] + lab.inserted, 0) = 1.0;
  }
  Var zscore = ad::div(ad::sub(tape.constant(goals), out.mean), out.stddev);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Var log_pdf = ad::add_scalar(ad::neg(ad::add(ad::log(out.stddev), ad::scale(ad::square(zscore), 0.5))),
                               -half_log_2pi);
  Var per_node = ad::logsumexp_rows(ad::add(out.log_mix, log_pdf));
  Var regress = ad::neg(ad::sum(ad::mul_const(per_node, weight)));
  Var cls = ad::neg(ad::sum(ad::mul_const(ad::log(ad::add_scalar(out.w, cfg.eps)), onehot)));
  return ad::scale(ad::add(regress, ad::scale(cls, cfg.beta)), 1.0 / normalizer);
}

std::vector<SgnPrediction> sgn_predict(const SgnModel& model,
                                       std::span<const SemanticGraph* const> graphs) {
  const GraphBatch batch = make_batch(graphs, model.cfg);
  Tape tape(false);
  const SgnOutputs out = sgn_forward(tape, model, batch);
  const Tensor& w = out.w.value();
  const Tensor alpha = out.log_mix.value().array().exp().matrix();
  std::vector<SgnPrediction> preds;
  for (Index k = 0; k < batch.graphs(); ++k) {
    SgnPrediction pr;
    const Index o = batch.offset[k], c = batch.count[k];
    pr.dist.alpha = alpha.middleRows(o, c);
    pr.dist.mean = out.mean.value().middleRows(o, c);
    pr.dist.stddev = out.stddev.value().middleRows(o, c);
    const auto& ids = batch.node_ids[static_cast<std::size_t>(k)];
    double best = -1.0;
    for (Index i = 0; i < c; ++i) {
      const double wi = w(o + i, 0);
      pr.dist.w.push_back(wi);
      pr.goal_mean.push_back(pr.dist.alpha.row(i).dot(pr.dist.mean.row(i)));
      const int id = ids[static_cast<std::size_t>(i)];
      if (wi > best || (wi == best && id < pr.insertion_node)) {
        best = wi;
        pr.insertion_node = id;
      }
    }
    preds.push_back(std::move(pr));
  }
  return preds;
}

SgnPrediction sgn_predict(const SgnModel& model, const SemanticGraph& graph) {
  const SemanticGraph* one[] = {&graph};
  return std::move(sgn_predict(model, one).front());
}

void save_sgn(const SgnModel& model, const std::filesystem::path& config_path,
              const std::filesystem::path& params_path) {
  std::ofstream out(config_path);
  if (!out) throw Error("cannot open " + config_path.string() + " for writing");
  out << model.cfg.to_json().dump(1) << '\n';
  save_params_binary(model.params, params_path);
}

SgnModel load_sgn(const std::filesystem::path& config_path, const std::filesystem::path& params_path) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open SGN config " + config_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(config_path.string() + ": " + e.what());
  }
  SgnModel m = SgnModel::create(SgnConfig::from_json(j));
  ParamVector loaded = load_params_binary(params_path);
  if (!loaded.same_layout(m.params)) throw ConfigError("SGN checkpoint does not match its config");
  m.params = std::move(loaded);
  return m;
}

}  // namespace hiertraj
