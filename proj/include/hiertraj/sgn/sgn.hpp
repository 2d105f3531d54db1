#pragma once

#include "hiertraj/numerics/layers.hpp"
#include "hiertraj/numerics/tape.hpp"
#include "hiertraj/scene/semantic_graph.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <span>
#include <vector>

namespace hiertraj {

struct SgnConfig {
  Index feature_dim = kDiaFeatures;
  Index hidden_dim = 64;
  Index embed_dim = 64;
  Index latent_dim = 64;
  Index mixtures = 3;
  Index heads = 1;
  int graph_layers = 1;
  bool single_agent_loss = false;
  bool attend_absolute = false;  // attention logits from absolute instead of relative embeddings
  double sigma_floor = 0.05;
  double eps = 1e-8;
  double beta = 1.0;
  double feature_scale = 0.1;  // applied to DIA features before the recurrent encoders
  double goal_scale = 10.0;    // metres per unit of the raw mean / std outputs

  nlohmann::json to_json() const;
  static SgnConfig from_json(const nlohmann::json& j);
};

struct SgnModel {
  SgnConfig cfg;
  ParamVector params;
  GruCell rec_abs;            // f1_rec
  GruCell rec_rel;            // f2_rec
  DenseLayer enc_abs;         // f1_enc
  DenseLayer enc_rel;         // f2_enc
  DenseLayer enc_joint;       // f4_enc, on concat(enc_abs, enc_rel)
  DenseLayer enc_latent;      // f3_enc, on concat(aggregated, joint)
  std::vector<DenseLayer> att;  // f_att, heads * graph_layers, head-major
  DenseLayer out_insert;      // f1_out
  DenseLayer out_gmm;         // f2_out: [mixing logits | means | log stds]

  static SgnModel create(const SgnConfig& cfg);
  void init(std::uint64_t seed);
  const DenseLayer& attention(Index head, int layer) const {
    return att[static_cast<std::size_t>(head * cfg.graph_layers + layer)];
  }
};

// Several graphs stacked as node rows. Attention is confined to each graph
// through a block mask; per-graph sums go through a one-hot grouping matrix.
struct GraphBatch {
  std::vector<Tensor> absolute;  // per step, nodes x features (already scaled)
  std::vector<Tensor> relative;
  std::vector<Tensor> present;   // per step, nodes x 1
  Tensor same_graph;             // nodes x nodes
  Tensor group;                  // graphs x nodes
  std::vector<Index> offset;     // first node row of each graph
  std::vector<Index> count;
  std::vector<Index> reference;  // reference node row per graph
  std::vector<std::vector<int>> node_ids;

  Index nodes() const { return same_graph.rows(); }
  Index graphs() const { return group.rows(); }
};

GraphBatch make_batch(std::span<const SemanticGraph* const> graphs, const SgnConfig& cfg);
GraphBatch make_batch(const SemanticGraph& graph, const SgnConfig& cfg);

struct NodeEncodings {
  Var h;      // nodes x hidden, absolute stream
  Var h_rel;  // nodes x hidden, relative stream
};

// Final recurrent states; steps where a node is absent leave its state as is.
NodeEncodings encode_node_histories(Tape& tape, const SgnModel& model, const GraphBatch& batch);

// alpha(j, i) = softmax over j within i's graph of f_att(concat(e_j, e_i)).
// `scores`, when given, receives the logits before the leaky relu.
Var attention_weights(Tape& tape, const SgnModel& model, const DenseLayer& f_att, Var embedded,
                      const Tensor& same_graph, Tensor* scores = nullptr);

// out_i = sum_n alpha(n, i) * values_n.
Var aggregate_relations(Var alpha, Var values);

struct SgnOutputs {
  Var w;      // nodes x 1, sums to one per graph
  Var w_raw;  // nodes x 1
  Var log_mix;  // nodes x M
  Var mean;   // nodes x M (metres)
  Var stddev;  // nodes x M (metres)
  std::vector<Var> attention;  // per head and layer, head-major
  std::vector<Tensor> attention_scores;  // same order, before the leaky relu
};

SgnOutputs sgn_forward(Tape& tape, const SgnModel& model, const GraphBatch& batch);

struct SgnLabels {
  Index inserted = 0;          // node index within its graph
  std::vector<double> goals;   // per node, metres
};

// Sum over graphs of L_regress + beta * L_class, divided by `normalizer`.
Var sgn_loss(Tape& tape, const SgnOutputs& out, const GraphBatch& batch,
             std::span<const SgnLabels> labels, const SgnConfig& cfg, double normalizer = 1.0);

struct GoalStateDistribution {
  std::vector<double> w;
  Tensor alpha;  // nodes x M
  Tensor mean;
  Tensor stddev;
};

struct SgnPrediction {
  GoalStateDistribution dist;
  int insertion_node = -1;          // node id with the largest w, ties to the lowest id
  std::vector<double> goal_mean;    // mixture mean per node
};

std::vector<SgnPrediction> sgn_predict(const SgnModel& model,
                                       std::span<const SemanticGraph* const> graphs);
SgnPrediction sgn_predict(const SgnModel& model, const SemanticGraph& graph);

void save_sgn(const SgnModel& model, const std::filesystem::path& config_path,
              const std::filesystem::path& params_path);
SgnModel load_sgn(const std::filesystem::path& config_path, const std::filesystem::path& params_path);

}  // namespace hiertraj
