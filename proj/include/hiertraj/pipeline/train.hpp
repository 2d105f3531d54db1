#pragma once

#include "hiertraj/pipeline/config.hpp"
#include "hiertraj/pipeline/dataset.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hiertraj {

struct LossRecord {
  std::string stage;  // "sgn" or "edn"
  Index epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// `stage,epoch,train_loss,val_loss`
void write_loss_csv(const std::vector<LossRecord>& rows, const std::filesystem::path& path);

struct TrainOutcome {
  Index epochs_run = 0;
  Index best_epoch = 0;
  double best_val = 0.0;
  bool early_stopped = false;
};

using WindowRefs = std::vector<const WindowSample*>;

// Mini-batch Adam with early stopping on the validation loss (the training
// loss when `val` is empty). The model ends with the best parameters seen. A
// non-finite batch loss restores them and throws NonFiniteError.
TrainOutcome train_sgn(SgnModel& model, const WindowRefs& train, const WindowRefs& val,
                       const TrainingConfig& cfg, std::uint64_t seed, std::vector<LossRecord>& curve);

// `goals` run parallel to the sample lists.
TrainOutcome train_edn(EdnModel& model, const SceneMap& map, const WindowRefs& train,
                       std::span<const double> train_goals, const WindowRefs& val,
                       std::span<const double> val_goals, const TrainingConfig& cfg, std::uint64_t seed,
                       std::vector<LossRecord>& curve);

double sgn_dataset_loss(const SgnModel& model, const WindowRefs& samples);
double edn_dataset_loss(const EdnModel& model, const SceneMap& map, const WindowRefs& samples,
                        std::span<const double> goals);

// Goal signal for each window: the recorded goal, or the mixture mean of the
// ego's own node under the graph model.
std::vector<double> window_goals(const WindowRefs& samples, GoalSource source, const SgnModel* sgn);

PreparedWindow prepare_window(const WindowSample& w, double goal, const EdnConfig& cfg,
                              const SceneMap& map, bool with_future);

struct PreparedData {
  SceneMap map;
  std::vector<AgentTrack> tracks;
  std::vector<WindowSample> windows;
  WindowStats stats;
  DatasetSplit split;  // after subsampling

  WindowRefs refs(const std::vector<std::size_t>& idx) const;
};

struct SceneData {
  SceneMap map;
  std::vector<AgentTrack> tracks;
};

// Loads a map and a tracks CSV and gives every track a reference path; -1
// when no path covers all of its samples.
SceneData ingest_scene(const std::filesystem::path& map_path, const std::filesystem::path& tracks_path,
                       const SceneConfig& cfg = {});

// Episodes laid end to end on one timeline: episode e starts 100 frames after
// the previous one ends and its track ids are offset by 1000 * e.
std::vector<AgentTrack> synth_tracks(const SceneMap& map, const SynthConfig& cfg, int episodes,
                                     std::uint64_t seed);

// Synthesizes (or ingests map_path / tracks_path), extracts windows and splits.
PreparedData prepare_data(const RunConfig& cfg);
PreparedData prepare_data(const RunConfig& cfg, SceneMap map, std::vector<AgentTrack> tracks);

struct Checkpoint {
  std::filesystem::path sgn_config, sgn_params, edn_config, edn_params;
  static Checkpoint in(const std::filesystem::path& dir);
  bool exists() const;
};

struct TrainedModels {
  SgnModel sgn;
  EdnModel edn;
  std::vector<LossRecord> curve;
};

// Graph model first, then the decoder with the configured goal source.
// Writes both checkpoints and loss.csv into cfg.output_dir.
TrainedModels train_hierarchical(const RunConfig& cfg, const PreparedData& data);

}  // namespace hiertraj
