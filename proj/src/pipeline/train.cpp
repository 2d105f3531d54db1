#include "hiertraj/pipeline/train.hpp"

#include "hiertraj/error.hpp"
#include "hiertraj/numerics/adam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

namespace hiertraj {

void write_loss_csv(const std::vector<LossRecord>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "stage,epoch,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.stage << ',' << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, Index batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch_size))));
  }
  return out;
}

// Shared epoch loop. `step` runs one batch and returns its loss; `evaluate`
// returns the validation loss.
template <class Model, class Step, class Evaluate>
TrainOutcome run_epochs(Model& model, AdamConfig& adam, std::size_t n_train, Index epochs, const TrainingConfig& cfg,
                        const std::string& stage, std::uint64_t seed, std::vector<LossRecord>& curve,
                        Step step, Evaluate evaluate) {
  TrainOutcome result;
  if (n_train == 0 || epochs == 0) return result;
  std::mt19937_64 rng(seed);
  ParamVector best = model.params;
  result.best_val = std::numeric_limits<double>::infinity();
  Index stale = 0;
  for (Index epoch = 1; epoch <= epochs; ++epoch) {
    double total = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : make_batches(n_train, cfg.batch_size, rng)) {
      const double loss = step(batch, rng);
      if (!std::isfinite(loss)) {
        model.params = best;
        throw NonFiniteError(stage + " training diverged at epoch " + std::to_string(epoch) +
                             "; restored the best parameters");
      }
      total += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    adam.lr *= cfg.lr_decay;
    const double train_loss = total / static_cast<double>(seen);
    const double val = evaluate(train_loss);
    curve.push_back(LossRecord{stage, epoch, train_loss, val});
    result.epochs_run = epoch;
    if (val < result.best_val) {
      result.best_val = val;
      result.best_epoch = epoch;
      best = model.params;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  model.params = best;
  return result;
}

std::vector<SgnLabels> labels_of(const WindowRefs& samples, const std::vector<std::size_t>& idx) {
  std::vector<SgnLabels> out;
  for (auto i : idx) out.push_back(samples[i]->labels);
  return out;
}

std::vector<const SemanticGraph*> graphs_of(const WindowRefs& samples, const std::vector<std::size_t>& idx) {
  std::vector<const SemanticGraph*> out;
  for (auto i : idx) out.push_back(&samples[i]->graph);
  return out;
}

constexpr std::size_t kEvalChunk = 256;

}  // namespace

double sgn_dataset_loss(const SgnModel& model, const WindowRefs& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t at = 0; at < samples.size(); at += kEvalChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = at; i < std::min(samples.size(), at + kEvalChunk); ++i) idx.push_back(i);
    const auto graphs = graphs_of(samples, idx);
    const auto labels = labels_of(samples, idx);
    Tape tape(false);
    const GraphBatch batch = make_batch(graphs, model.cfg);
    const SgnOutputs out = sgn_forward(tape, model, batch);
    total += sgn_loss(tape, out, batch, labels, model.cfg).value()(0, 0);
  }
  return total / static_cast<double>(samples.size());
}

TrainOutcome train_sgn(SgnModel& model, const WindowRefs& train, const WindowRefs& val,
                       const TrainingConfig& cfg, std::uint64_t seed, std::vector<LossRecord>& curve) {
  AdamConfig ac;
  ac.lr = cfg.sgn_lr;
  AdamState state;
  auto step = [&](const std::vector<std::size_t>& idx, std::mt19937_64&) {
    const auto graphs = graphs_of(train, idx);
    const auto labels = labels_of(train, idx);
    Tape tape;
    const GraphBatch batch = make_batch(graphs, model.cfg);
    const SgnOutputs out = sgn_forward(tape, model, batch);
    Var loss = sgn_loss(tape, out, batch, labels, model.cfg, static_cast<double>(idx.size()));
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) return value;
    tape.backward(loss);
    ParamVector g = tape.param_gradient(model.params);
    clip_global_norm(g, cfg.clip_norm);
    adam_step(model.params, g, state, ac);
    return value;
  };
  auto evaluate = [&](double train_loss) { return val.empty() ? train_loss : sgn_dataset_loss(model, val); };
  return run_epochs(model, ac, train.size(), cfg.sgn_epochs, cfg, "sgn", seed, curve, step, evaluate);
}

PreparedWindow prepare_window(const WindowSample& w, double goal, const EdnConfig& cfg,
                              const SceneMap& map, bool with_future) {
  return prepare_sequences(w.past,
                           with_future ? std::span<const TrackSample>(w.future) : std::span<const TrackSample>(),
                           goal, cfg, &map.path(w.path_id));
}

namespace {

std::vector<PreparedWindow> prepare_all(const EdnModel& model, const SceneMap& map, const WindowRefs& samples,
                                        std::span<const double> goals) {
  if (goals.size() != samples.size()) throw ShapeError("edn training: one goal per window required");
  std::vector<PreparedWindow> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(prepare_window(*samples[i], goals[i], model.cfg, map, true));
  }
  return out;
}

std::vector<PreparedWindow> pick(const std::vector<PreparedWindow>& all, const std::vector<std::size_t>& idx) {
  std::vector<PreparedWindow> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

double edn_prepared_loss(const EdnModel& model, const std::vector<PreparedWindow>& windows) {
  if (windows.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t at = 0; at < windows.size(); at += kEvalChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = at; i < std::min(windows.size(), at + kEvalChunk); ++i) idx.push_back(i);
    const auto chunk = pick(windows, idx);
    const EdnBatch batch = make_edn_batch(chunk, model.cfg);
    Tape tape(false);
    const EdnOutputs out = edn_forward(tape, model, batch);
    total += edn_loss(tape, out.frame, batch.targets_frame).value()(0, 0) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(windows.size());
}

}  // namespace

double edn_dataset_loss(const EdnModel& model, const SceneMap& map, const WindowRefs& samples,
                        std::span<const double> goals) {
  return edn_prepared_loss(model, prepare_all(model, map, samples, goals));
}

TrainOutcome train_edn(EdnModel& model, const SceneMap& map, const WindowRefs& train,
                       std::span<const double> train_goals, const WindowRefs& val,
                       std::span<const double> val_goals, const TrainingConfig& cfg, std::uint64_t seed,
                       std::vector<LossRecord>& curve) {
  const auto train_windows = prepare_all(model, map, train, train_goals);
  const auto val_windows = prepare_all(model, map, val, val_goals);
  AdamConfig ac;
  ac.lr = cfg.edn_lr;
  AdamState state;
  auto step = [&](const std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    const auto chunk = pick(train_windows, idx);
    const EdnBatch batch = make_edn_batch(chunk, model.cfg);
    Tape tape;
    const EdnOutputs out = edn_forward(tape, model, batch, &rng);
    Var loss = edn_loss(tape, out.frame, batch.targets_frame);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) return value;
    tape.backward(loss);
    ParamVector g = tape.param_gradient(model.params);
    clip_global_norm(g, cfg.clip_norm);
    adam_step(model.params, g, state, ac);
    return value;
  };
  auto evaluate = [&](double train_loss) {
    return val_windows.empty() ? train_loss : edn_prepared_loss(model, val_windows);
  };
  return run_epochs(model, ac, train_windows.size(), cfg.edn_epochs, cfg, "edn", seed, curve, step, evaluate);
}

std::vector<double> window_goals(const WindowRefs& samples, GoalSource source, const SgnModel* sgn) {
  std::vector<double> goals;
  goals.reserve(samples.size());
  if (source == GoalSource::ground_truth) {
    for (const auto* s : samples) goals.push_back(s->goal);
    return goals;
  }
  if (sgn == nullptr) throw ConfigError("generated goals need a trained graph model");
  for (std::size_t at = 0; at < samples.size(); at += kEvalChunk) {
    std::vector<const SemanticGraph*> graphs;
    for (std::size_t i = at; i < std::min(samples.size(), at + kEvalChunk); ++i) graphs.push_back(&samples[i]->graph);
    const auto preds = sgn_predict(*sgn, graphs);
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const auto& g = *graphs[k];
      goals.push_back(preds[k].goal_mean[g.reference]);
    }
  }
  return goals;
}

WindowRefs PreparedData::refs(const std::vector<std::size_t>& idx) const {
  WindowRefs out;
  for (auto i : idx) out.push_back(&windows[i]);
  return out;
}

std::vector<AgentTrack> synth_tracks(const SceneMap& map, const SynthConfig& cfg, int episodes,
                                     std::uint64_t seed) {
  std::vector<AgentTrack> all;
  long offset = 0;
  for (int e = 0; e < episodes; ++e) {
    Episode ep = synth_episode(map, cfg, seed * 1000003ULL + static_cast<std::uint64_t>(e));
    long last = offset;
    for (auto& t : ep.tracks) {
      t.id += 1000 * e;
      for (auto& s : t.samples) {
        s.frame += offset;
        s.timestamp_ms = s.frame * 100;
      }
      last = std::max(last, t.last_frame());
      all.push_back(std::move(t));
    }
    offset = last + 100;
  }
  return all;
}

SceneData ingest_scene(const std::filesystem::path& map_path, const std::filesystem::path& tracks_path,
                       const SceneConfig& cfg) {
  SceneData d{load_map(map_path), read_tracks_csv(tracks_path)};
  for (auto& t : d.tracks) t.path_id = assign_path(t, d.map, 0, t.samples.size(), cfg.corridor);
  return d;
}

PreparedData prepare_data(const RunConfig& cfg) {
  if (!cfg.map_path.empty()) {
    if (cfg.tracks_path.empty()) throw ConfigError("map_path is set but tracks_path is not");
    auto scene = ingest_scene(cfg.map_path, cfg.tracks_path, cfg.scene);
    return prepare_data(cfg, std::move(scene.map), std::move(scene.tracks));
  }
  SceneMap map = make_scenario_map(cfg.synth.kind);
  auto tracks = synth_tracks(map, cfg.synth, cfg.episodes, cfg.seed);
  return prepare_data(cfg, std::move(map), std::move(tracks));
}

PreparedData prepare_data(const RunConfig& cfg, SceneMap map, std::vector<AgentTrack> tracks) {
  PreparedData d;
  d.map = std::move(map);
  for (auto& t : tracks) {
    if (t.path_id < 0) t.path_id = assign_path(t, d.map, 0, t.samples.size(), cfg.scene.corridor);
  }
  d.tracks = std::move(tracks);
  d.windows = extract_windows(d.map, d.tracks, 0, cfg.history, cfg.horizon, d.stats, cfg.scene);
  const DatasetSplit raw = split_windows(d.windows, cfg.train_fraction * (1.0 - cfg.validation_fraction),
                                         cfg.train_fraction * cfg.validation_fraction, cfg.seed);
  d.split.train = subsample(raw.train, cfg.max_train_windows, cfg.seed + 1);
  d.split.validation = subsample(raw.validation, cfg.max_test_windows, cfg.seed + 2);
  d.split.test = subsample(raw.test, cfg.max_test_windows, cfg.seed + 3);
  return d;
}

Checkpoint Checkpoint::in(const std::filesystem::path& dir) {
  return {dir / "sgn_config.json", dir / "sgn_params.bin", dir / "edn_config.json", dir / "edn_params.bin"};
}

bool Checkpoint::exists() const {
  namespace fs = std::filesystem;
  return fs::exists(sgn_config) && fs::exists(sgn_params) && fs::exists(edn_config) && fs::exists(edn_params);
}

TrainedModels train_hierarchical(const RunConfig& cfg, const PreparedData& data) {
  std::filesystem::create_directories(cfg.output_dir);
  const Checkpoint ck = Checkpoint::in(cfg.output_dir);
  const WindowRefs train = data.refs(data.split.train);
  const WindowRefs val = data.refs(data.split.validation);
  if (train.empty()) throw ConfigError("training set is empty");

  TrainedModels out{SgnModel::create(cfg.sgn), EdnModel::create(cfg.edn), {}};
  out.sgn.init(cfg.seed);
  out.edn.init(cfg.seed + 1);
  auto save_all = [&] {
    save_sgn(out.sgn, ck.sgn_config, ck.sgn_params);
    save_edn(out.edn, ck.edn_config, ck.edn_params);
    write_loss_csv(out.curve, cfg.output_dir / "loss.csv");
  };
  try {
    train_sgn(out.sgn, train, val, cfg.training, cfg.seed + 2, out.curve);
    const auto train_goals = window_goals(train, cfg.training.goal_source, &out.sgn);
    const auto val_goals = window_goals(val, cfg.training.goal_source, &out.sgn);
    train_edn(out.edn, data.map, train, train_goals, val, val_goals, cfg.training, cfg.seed + 3, out.curve);
  } catch (const NonFiniteError&) {
    save_all();
    throw;
  }
  save_all();
  return out;
}

}  // namespace hiertraj
