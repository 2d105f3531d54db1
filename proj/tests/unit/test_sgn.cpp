#include "hiertraj/error.hpp"
#include "hiertraj/numerics/adam.hpp"
#include "hiertraj/numerics/ops.hpp"
#include "hiertraj/sgn/sgn.hpp"

#include "../support/grad_check.hpp"
#include "../support/sgn_fixture.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace hiertraj;
using namespace hiertraj::testing;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

SgnModel small_model(const SgnConfig& cfg, std::uint64_t seed) {
  SgnModel m = SgnModel::create(cfg);
  m.init(seed);
  return m;
}

struct Evaluated {
  Tensor w, w_raw, log_mix, mean, stddev;
  std::vector<Tensor> attention;
};

Evaluated evaluate(const SgnModel& m, const GraphBatch& b) {
  Tape tape(false);
  const SgnOutputs o = sgn_forward(tape, m, b);
  Evaluated e{o.w.value(), o.w_raw.value(), o.log_mix.value(), o.mean.value(), o.stddev.value(), {}};
  for (const auto& a : o.attention) e.attention.push_back(a.value());
  return e;
}

double loss_value(const SgnModel& m, const GraphBatch& b, const std::vector<SgnLabels>& labels) {
  Tape tape(false);
  const SgnOutputs o = sgn_forward(tape, m, b);
  return sgn_loss(tape, o, b, labels, m.cfg).value()(0, 0);
}

double train(SgnModel& m, const GraphBatch& b, const std::vector<SgnLabels>& labels, int steps,
             double lr) {
  AdamConfig ac;
  ac.lr = lr;
  AdamState st;
  double last = 0.0;
  for (int k = 0; k < steps; ++k) {
    ac.lr = k < steps / 2 ? lr : k < 5 * steps / 6 ? lr * 0.1 : lr * 0.01;
    Tape tape;
    const SgnOutputs o = sgn_forward(tape, m, b);
    Var loss = sgn_loss(tape, o, b, labels, m.cfg);
    tape.backward(loss);
    ParamVector g = tape.param_gradient(m.params);
    clip_global_norm(g, 5.0);
    adam_step(m.params, g, st, ac);
    last = loss.value()(0, 0);
  }
  return last;
}

}  // namespace

TEST_CASE("config round trip and validation") {
  SgnConfig c = small_sgn_config();
  c.heads = 2;
  c.graph_layers = 2;
  c.single_agent_loss = true;
  const SgnConfig back = SgnConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  nlohmann::json bad = c.to_json();
  bad["graph_layers"] = 3;
  CHECK_THROWS_AS(SgnConfig::from_json(bad), ConfigError);
  bad = c.to_json();
  bad["sigma_floor"] = 0.0;
  CHECK_THROWS_AS(SgnConfig::from_json(bad), ConfigError);
  bad = c.to_json();
  bad["mixtures"] = "three";
  CHECK_THROWS_AS(SgnConfig::from_json(bad), ConfigError);
}

TEST_CASE("parameter count matches layer dimensions") {
  SgnConfig c = small_sgn_config();
  c.heads = 2;
  c.graph_layers = 2;
  const SgnModel m = SgnModel::create(c);
  Index expected = m.rec_abs.param_count() + m.rec_rel.param_count() + m.enc_abs.param_count() +
                   m.enc_rel.param_count() + m.enc_joint.param_count() +
                   m.enc_latent.param_count() + m.out_insert.param_count() +
                   m.out_gmm.param_count();
  for (const auto& a : m.att) {
    CHECK(a.input_dim == 2 * c.embed_dim);
    CHECK(a.output_dim == 1);
    expected += a.param_count();
  }
  CHECK(m.att.size() == 4);
  CHECK(m.enc_latent.input_dim == c.embed_dim * c.heads + c.latent_dim);
  CHECK(m.out_gmm.output_dim == 3 * c.mixtures);
  CHECK(m.params.size() == expected);
}

TEST_CASE("node history encoding") {
  const SgnConfig c = small_sgn_config();
  std::mt19937_64 rng(3);

  SUBCASE("zero weights give zero states") {
    SgnModel m = SgnModel::create(c);
    const SemanticGraph g = random_graph(rng, 3, 4);
    Tape tape(false);
    const NodeEncodings e = encode_node_histories(tape, m, make_batch(g, c));
    CHECK(e.h.value().cwiseAbs().maxCoeff() == 0.0);
    CHECK(e.h_rel.value().cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("single node equals unrolled cell") {
    const SgnModel m = small_model(c, 5);
    SemanticGraph g = random_graph(rng, 1, 5);
    for (Index s = 0; s < g.steps(); ++s) {
      g.absolute[s] = g.absolute[0];
      g.relative[s].setZero();
    }
    Tensor h = Tensor::Zero(1, c.hidden_dim), hr = h;
    for (Index s = 0; s < g.steps(); ++s) {
      h = forward_gru(m.rec_abs, m.params, g.absolute[s] * c.feature_scale, h);
      hr = forward_gru(m.rec_rel, m.params, g.relative[s] * c.feature_scale, hr);
    }
    Tape tape(false);
    const NodeEncodings e = encode_node_histories(tape, m, make_batch(g, c));
    CHECK((e.h.value() - h).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((e.h_rel.value() - hr).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("identical histories give identical states") {
    const SgnModel m = small_model(c, 7);
    SemanticGraph g = random_graph(rng, 3, 4);
    for (Index s = 0; s < g.steps(); ++s) {
      g.absolute[s].row(2) = g.absolute[s].row(1);
      g.relative[s].row(2) = g.relative[s].row(1);
    }
    Tape tape(false);
    const NodeEncodings e = encode_node_histories(tape, m, make_batch(g, c));
    CHECK(e.h.value().row(1) == e.h.value().row(2));
    CHECK(e.h_rel.value().row(1) == e.h_rel.value().row(2));
  }

  SUBCASE("absent steps carry the state") {
    const SgnModel m = small_model(c, 9);
    SemanticGraph g = random_graph(rng, 2, 4);
    g.mask(1, 0) = g.mask(1, 1) = 0.0;
    Tensor h = Tensor::Zero(1, c.hidden_dim);
    for (Index s = 2; s < 4; ++s) {
      h = forward_gru(m.rec_abs, m.params, g.absolute[s].row(1) * c.feature_scale, h);
    }
    Tape tape(false);
    const NodeEncodings e = encode_node_histories(tape, m, make_batch(g, c));
    CHECK((e.h.value().row(1) - h).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("feature width mismatch") {
    SgnConfig wide = c;
    wide.feature_dim = 6;
    const SemanticGraph g = random_graph(rng, 2, 3);
    CHECK_THROWS_AS(make_batch(g, wide), ShapeError);
  }
}

TEST_CASE("attention weights") {
  SgnConfig c = small_sgn_config();
  c.embed_dim = 1;
  SgnModel m = SgnModel::create(c);
  const DenseLayer& f = m.attention(0, 0);

  SUBCASE("single node") {
    Tape tape(false);
    Var a = attention_weights(tape, m, f, tape.constant(Tensor::Constant(1, 1, 0.7)),
                              Tensor::Ones(1, 1));
    CHECK(a.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("constant logits are uniform") {
    set_segment(m.params, f.bias_segment, {1.3});
    std::mt19937_64 rng(1);
    Tape tape(false);
    Var a = attention_weights(tape, m, f, tape.constant(random_tensor(4, 1, rng)), Tensor::Ones(4, 4));
    CHECK((a.value().array() - 0.25).abs().maxCoeff() < 1e-15);
  }

  SUBCASE("closed-form softmax") {
    set_segment(m.params, f.weight_segment, {1.0, 0.0});
    Tensor e(2, 1);
    e << 0.0, std::log(2.0);
    Tape tape(false);
    Var a = attention_weights(tape, m, f, tape.constant(e), Tensor::Ones(2, 2));
    for (Index i = 0; i < 2; ++i) {
      CHECK(a.value()(0, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
      CHECK(a.value()(1, i) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    }
  }

  SUBCASE("block mask keeps graphs apart") {
    std::mt19937_64 rng(2);
    fill_uniform(m.params, rng);
    Tensor mask = Tensor::Zero(5, 5);
    mask.block(0, 0, 2, 2).setOnes();
    mask.block(2, 2, 3, 3).setOnes();
    Tape tape(false);
    Var a = attention_weights(tape, m, f, tape.constant(random_tensor(5, 1, rng)), mask);
    CHECK((a.value().colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(a.value().block(0, 2, 2, 3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.value().block(2, 0, 3, 2).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("relation aggregation") {
  std::mt19937_64 rng(4);
  Tape tape(false);

  SUBCASE("uniform weights over equal rows") {
    Tensor v = random_tensor(1, 3, rng).replicate(4, 1);
    Var out = aggregate_relations(tape.constant(Tensor::Constant(4, 4, 0.25)), tape.constant(v));
    CHECK((out.value() - v).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("identity weights") {
    Tensor v = random_tensor(3, 2, rng);
    Var out = aggregate_relations(tape.constant(Tensor::Identity(3, 3)), tape.constant(v));
    CHECK(out.value() == v);
  }

  SUBCASE("three nodes against a loop") {
    Tensor alpha = random_tensor(3, 3, rng).cwiseAbs();
    alpha = alpha.array().rowwise() / alpha.colwise().sum().array();
    Tensor v = random_tensor(3, 4, rng);
    Var out = aggregate_relations(tape.constant(alpha), tape.constant(v));
    for (Index i = 0; i < 3; ++i) {
      for (Index d = 0; d < 4; ++d) {
        double acc = 0.0;
        for (Index n = 0; n < 3; ++n) acc += alpha(n, i) * v(n, d);
        CHECK(out.value()(i, d) == doctest::Approx(acc).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("intention heads") {
  SgnConfig c = small_sgn_config();
  std::mt19937_64 rng(6);
  const SemanticGraph g = random_graph(rng, 4, 3);

  SUBCASE("zero insertion layer gives uniform weights") {
    SgnModel m = small_model(c, 1);
    set_segment(m.params, m.out_insert.weight_segment, {0.0});
    set_segment(m.params, m.out_insert.bias_segment, {0.0});
    const Evaluated e = evaluate(m, make_batch(g, c));
    CHECK((e.w_raw.array() - 0.5).abs().maxCoeff() < 1e-15);
    CHECK((e.w.array() - 0.25).abs().maxCoeff() < 1e-15);
  }

  SUBCASE("single node has unit weight") {
    SgnModel m = small_model(c, 2);
    set_segment(m.params, m.out_insert.bias_segment, {3.0});
    const Evaluated e = evaluate(m, make_batch(random_graph(rng, 1, 3), c));
    CHECK(e.w(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("raw weight follows the reciprocal form") {
    SgnModel m = small_model(c, 2);
    set_segment(m.params, m.out_insert.weight_segment, {0.0});
    set_segment(m.params, m.out_insert.bias_segment, {2.0});
    const Evaluated e = evaluate(m, make_batch(g, c));
    CHECK(e.w_raw(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-15));
  }

  SUBCASE("mixture block activations") {
    SgnModel m = small_model(c, 3);
    set_segment(m.params, m.out_gmm.weight_segment, {0.0});
    const std::vector<double> b = {0.2, -0.4, 1.5, -0.3, -1.0, 0.25};
    set_segment(m.params, m.out_gmm.bias_segment, b);
    const Evaluated e = evaluate(m, make_batch(g, c));
    const double z = std::exp(0.2) + std::exp(-0.4);
    for (Index i = 0; i < g.node_count(); ++i) {
      CHECK(std::exp(e.log_mix(i, 0)) == doctest::Approx(std::exp(0.2) / z).epsilon(1e-14));
      CHECK(std::exp(e.log_mix(i, 1)) == doctest::Approx(std::exp(-0.4) / z).epsilon(1e-14));
      CHECK(e.mean(i, 0) == doctest::Approx(c.goal_scale * 1.5).epsilon(1e-14));
      CHECK(e.mean(i, 1) == doctest::Approx(c.goal_scale * -0.3).epsilon(1e-14));
      CHECK(e.stddev(i, 0) ==
            doctest::Approx(c.sigma_floor + c.goal_scale * std::exp(-1.0)).epsilon(1e-14));
      CHECK(e.stddev(i, 1) ==
            doctest::Approx(c.sigma_floor + c.goal_scale * std::exp(0.25)).epsilon(1e-14));
    }
  }
}

TEST_CASE("forward invariants on random instances") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    SgnConfig c = small_sgn_config();
    c.heads = 1 + trial % 2;
    c.graph_layers = 1 + (trial / 2) % 2;
    c.attend_absolute = trial % 5 == 0;
    const SgnModel m = small_model(c, 100 + static_cast<std::uint64_t>(trial));
    const SemanticGraph g1 = random_graph(rng, 1 + trial % 6, 4, 0.3);
    const SemanticGraph g2 = random_graph(rng, 3, 4, 0.3);
    const SemanticGraph* gs[] = {&g1, &g2};
    const GraphBatch b = make_batch(gs, c);
    const Evaluated e = evaluate(m, b);
    for (Index k = 0; k < b.graphs(); ++k) {
      CHECK(e.w.middleRows(b.offset[k], b.count[k]).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(e.w.minCoeff() > 0.0);
    CHECK(e.w.maxCoeff() <= 1.0);
    CHECK((e.log_mix.array().exp().rowwise().sum() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(e.stddev.minCoeff() >= c.sigma_floor);
    CHECK(e.attention.size() == static_cast<std::size_t>(c.heads * c.graph_layers));
    for (const auto& a : e.attention) {
      CHECK((a.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    }

    // A batch evaluates each graph as if alone.
    const Evaluated alone = evaluate(m, make_batch(g2, c));
    CHECK((alone.w - e.w.bottomRows(3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((alone.mean - e.mean.bottomRows(3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("node permutation equivariance") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    SgnConfig c = small_sgn_config();
    c.heads = 2;
    c.graph_layers = 1 + trial % 2;
    const SgnModel m = small_model(c, 200 + static_cast<std::uint64_t>(trial));
    const SemanticGraph g = random_graph(rng, 5, 4, 0.3);
    std::vector<Index> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const SemanticGraph p = permute_graph(g, perm);
    const Evaluated a = evaluate(m, make_batch(g, c));
    const Evaluated b = evaluate(m, make_batch(p, c));
    for (Index i = 0; i < 5; ++i) {
      const Index src = perm[static_cast<std::size_t>(i)];
      CHECK(std::abs(b.w(i, 0) - a.w(src, 0)) < 1e-9);
      CHECK((b.mean.row(i) - a.mean.row(src)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((b.stddev.row(i) - a.stddev.row(src)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((b.log_mix.row(i) - a.log_mix.row(src)).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK(sgn_predict(m, g).insertion_node == sgn_predict(m, p).insertion_node);
  }
}

TEST_CASE("loss examples") {
  SgnConfig c = small_sgn_config();
  c.mixtures = 1;
  std::mt19937_64 rng(13);
  const SemanticGraph g = random_graph(rng, 3, 3);
  const GraphBatch b = make_batch(g, c);

  SUBCASE("gaussian peak") {
    SgnModel m = small_model(c, 4);
    set_segment(m.params, m.out_gmm.weight_segment, {0.0});
    set_segment(m.params, m.out_gmm.bias_segment, {0.0, 0.7, std::log((1.0 - c.sigma_floor) / c.goal_scale)});
    set_segment(m.params, m.out_insert.weight_segment, {0.0});
    set_segment(m.params, m.out_insert.bias_segment, {0.0});
    SgnLabels lab{0, {7.0, 7.0, 7.0}};
    Tape tape(false);
    const SgnOutputs o = sgn_forward(tape, m, b);
    CHECK(o.stddev.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    SgnConfig no_class = c;
    no_class.beta = 0.0;
    const double l = sgn_loss(tape, o, b, std::span(&lab, 1), no_class).value()(0, 0);
    CHECK(l / 3.0 == doctest::Approx(0.9189385332).epsilon(1e-9));
    CHECK(l / 3.0 == doctest::Approx(kHalfLog2Pi).epsilon(1e-14));

    SgnConfig single = no_class;
    single.single_agent_loss = true;
    CHECK(sgn_loss(tape, o, b, std::span(&lab, 1), single).value()(0, 0) ==
          doctest::Approx(kHalfLog2Pi).epsilon(1e-14));
  }

  SUBCASE("perfect classification") {
    SgnModel m = small_model(c, 4);
    set_segment(m.params, m.out_insert.weight_segment, {0.0});
    set_segment(m.params, m.out_insert.bias_segment, {0.0});
    SgnLabels lab{0, {1.0, 2.0, 3.0}};
    Tape tape(false);
    SgnOutputs o = sgn_forward(tape, m, b);
    Tensor onehot = Tensor::Zero(3, 1);
    onehot(1, 0) = 1.0;
    o.w = tape.constant(onehot);
    lab.inserted = 1;
    SgnConfig with_class = c;
    with_class.beta = 1.0;
    SgnConfig no_class = c;
    no_class.beta = 0.0;
    const double full = sgn_loss(tape, o, b, std::span(&lab, 1), with_class).value()(0, 0);
    const double regress = sgn_loss(tape, o, b, std::span(&lab, 1), no_class).value()(0, 0);
    CHECK(std::abs(full - regress) < 1e-7);
  }

  SUBCASE("label shape errors") {
    const SgnModel m = small_model(c, 4);
    Tape tape(false);
    const SgnOutputs o = sgn_forward(tape, m, b);
    SgnLabels short_goals{0, {1.0, 2.0}};
    CHECK_THROWS_AS(sgn_loss(tape, o, b, std::span(&short_goals, 1), c), ShapeError);
    SgnLabels bad_index{3, {1.0, 2.0, 3.0}};
    CHECK_THROWS_AS(sgn_loss(tape, o, b, std::span(&bad_index, 1), c), ShapeError);
    CHECK_THROWS_AS(sgn_loss(tape, o, b, std::span<const SgnLabels>(), c), ShapeError);
  }
}

TEST_CASE("loss against a naive double loop") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    SgnConfig c = small_sgn_config();
    c.mixtures = 1 + trial % 3;
    c.beta = 0.5 + trial;
    c.single_agent_loss = trial % 2 == 1;
    const SgnModel m = small_model(c, 300 + static_cast<std::uint64_t>(trial));
    const SemanticGraph g1 = random_graph(rng, 3, 3, 0.2);
    const SemanticGraph g2 = random_graph(rng, 2, 3, 0.2);
    const SemanticGraph* gs[] = {&g1, &g2};
    const GraphBatch b = make_batch(gs, c);
    const std::vector<SgnLabels> labels = {random_labels(rng, 3), random_labels(rng, 2)};
    const Evaluated e = evaluate(m, b);

    double expected = 0.0;
    for (Index k = 0; k < 2; ++k) {
      const auto& lab = labels[static_cast<std::size_t>(k)];
      for (Index i = 0; i < b.count[k]; ++i) {
        const Index r = b.offset[k] + i;
        double mix = 0.0;
        for (Index j = 0; j < c.mixtures; ++j) {
          const double s = e.stddev(r, j);
          const double z = (lab.goals[static_cast<std::size_t>(i)] - e.mean(r, j)) / s;
          mix += std::exp(e.log_mix(r, j)) * std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
        }
        if (!c.single_agent_loss || r == b.reference[k]) expected -= std::log(mix);
        if (i == lab.inserted) expected -= c.beta * std::log(e.w(r, 0) + c.eps);
      }
    }
    CHECK(loss_value(m, b, labels) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    SgnConfig c = small_sgn_config();
    c.heads = 1 + trial % 2;
    c.graph_layers = 1 + (trial / 2) % 2;
    c.single_agent_loss = trial % 3 == 0;
    c.attend_absolute = trial % 4 == 1;
    SgnModel m;
    SemanticGraph g1, g2;
    GraphBatch b;
    std::uint64_t seed = 400 + static_cast<std::uint64_t>(trial);
    do {
      m = small_model(c, seed);
      seed += 1000;
      g1 = random_graph(rng, 3, 3, 0.3);
      g2 = random_graph(rng, 2, 3, 0.3);
      const SemanticGraph* gs[] = {&g1, &g2};
      b = make_batch(gs, c);
    } while (attention_kink_margin(m, b) < 1e-3);
    const std::vector<SgnLabels> labels = {random_labels(rng, 3), random_labels(rng, 2)};
    SgnModel probe = m;
    const GradCheck r = check_gradient(
        [&](Tape& tape, const ParamVector& p) {
          probe.params.values() = p.values();
          const SgnOutputs o = sgn_forward(tape, probe, b);
          return sgn_loss(tape, o, b, labels, c, 2.0);
        },
        m.params);
    CAPTURE(trial);
    CHECK(r.rel_error <= 1e-5);
  }
}

TEST_CASE("prediction") {
  SgnConfig c = small_sgn_config();
  std::mt19937_64 rng(16);
  const SemanticGraph g = random_graph(rng, 3, 3);

  SUBCASE("single component mean") {
    c.mixtures = 1;
    const SgnModel m = small_model(c, 5);
    const SgnPrediction p = sgn_predict(m, g);
    for (Index i = 0; i < 3; ++i) {
      CHECK(p.goal_mean[static_cast<std::size_t>(i)] == doctest::Approx(p.dist.mean(i, 0)).epsilon(1e-15));
    }
  }

  SUBCASE("mixture mean") {
    SgnModel m = small_model(c, 5);
    set_segment(m.params, m.out_gmm.weight_segment, {0.0});
    set_segment(m.params, m.out_gmm.bias_segment, {0.0, 0.0, 0.2, 0.4, 0.0, 0.0});
    const SgnPrediction p = sgn_predict(m, g);
    for (double v : p.goal_mean) CHECK(v == doctest::Approx(3.0).epsilon(1e-14));
  }

  SUBCASE("ties go to the lowest node id") {
    SgnModel m = small_model(c, 5);
    set_segment(m.params, m.out_insert.weight_segment, {0.0});
    const SemanticGraph p = permute_graph(g, {2, 0, 1});
    CHECK(sgn_predict(m, p).insertion_node == 10);
    CHECK(sgn_predict(m, g).insertion_node == 10);
  }
}

TEST_CASE("shifted goal labels shift the fitted means") {
  SgnConfig c = small_sgn_config();
  c.mixtures = 1;
  std::mt19937_64 rng(17);
  const SemanticGraph g = random_graph(rng, 3, 3);
  const GraphBatch b = make_batch(g, c);
  const std::vector<SgnLabels> base = {SgnLabels{1, {12.0, 25.0, 4.0}}};
  std::vector<SgnLabels> shifted = base;
  for (auto& v : shifted[0].goals) v += 3.0;

  SgnModel ma = small_model(c, 21), mb = ma;
  const double la = train(ma, b, base, 3000, 1e-2);
  const double lb = train(mb, b, shifted, 3000, 1e-2);
  const Index n = g.node_count();
  CHECK(la < 1e-2 + kHalfLog2Pi * static_cast<double>(n));
  CHECK(lb < 1e-2 + kHalfLog2Pi * static_cast<double>(n));
  const Evaluated ea = evaluate(ma, b), eb = evaluate(mb, b);
  for (Index i = 0; i < n; ++i) {
    CHECK(std::abs(eb.mean(i, 0) - ea.mean(i, 0) - 3.0) < 1e-2);
  }
}

TEST_CASE("checkpoint round trip and golden prediction") {
  SgnConfig c = small_sgn_config();
  c.heads = 2;
  std::mt19937_64 rng(18);
  const SemanticGraph g = random_graph(rng, 4, 3, 0.2);
  SgnModel m = small_model(c, 31);
  train(m, make_batch(g, c), {SgnLabels{2, {5.0, 10.0, 15.0, 20.0}}}, 50, 1e-2);

  const auto dir = std::filesystem::temp_directory_path() / "sgn_ckpt_test";
  std::filesystem::create_directories(dir);
  save_sgn(m, dir / "sgn.json", dir / "sgn.bin");
  const SgnModel back = load_sgn(dir / "sgn.json", dir / "sgn.bin");
  CHECK(back.params.values() == m.params.values());
  const SgnPrediction p = sgn_predict(back, g);
  const SgnPrediction q = sgn_predict(m, g);
  CHECK(p.goal_mean == q.goal_mean);
  CHECK(p.dist.w == q.dist.w);

  SgnConfig other = c;
  other.hidden_dim = 5;
  std::ofstream(dir / "other.json") << other.to_json().dump();
  CHECK_THROWS_AS(load_sgn(dir / "other.json", dir / "sgn.bin"), ConfigError);
  std::filesystem::remove_all(dir);

  const std::filesystem::path golden = std::filesystem::path(HIERTRAJ_GOLDEN_DIR) / "sgn_prediction.json";
  nlohmann::json now = {{"insertion_node", p.insertion_node}, {"w", p.dist.w}, {"goal_mean", p.goal_mean}};
  if (std::getenv("HIERTRAJ_UPDATE_GOLDEN") != nullptr) std::ofstream(golden) << now.dump(1) << '\n';
  std::ifstream in(golden);
  REQUIRE(in.good());
  const nlohmann::json want = nlohmann::json::parse(in);
  CHECK(want["insertion_node"].get<int>() == p.insertion_node);
  const auto w = want["w"].get<std::vector<double>>();
  const auto gm = want["goal_mean"].get<std::vector<double>>();
  REQUIRE(w.size() == p.dist.w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(p.dist.w[i] == doctest::Approx(w[i]).epsilon(1e-9));
    CHECK(p.goal_mean[i] == doctest::Approx(gm[i]).epsilon(1e-9));
  }
}
