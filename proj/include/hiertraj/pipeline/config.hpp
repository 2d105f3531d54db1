#pragma once

#include "hiertraj/adaptation/mekf.hpp"
#include "hiertraj/baselines/baselines.hpp"
#include "hiertraj/edn/edn.hpp"
#include "hiertraj/pipeline/synth.hpp"
#include "hiertraj/sgn/sgn.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace hiertraj {

// Where the decoder's goal signal comes from during training and evaluation.
enum class GoalSource { ground_truth, generated };
const char* to_string(GoalSource g);
GoalSource goal_source_from_string(const std::string& s);

struct TrainingConfig {
  Index sgn_epochs = 40;
  Index edn_epochs = 80;
  Index batch_size = 32;
  double sgn_lr = 2e-3;
  double edn_lr = 3e-3;
  double clip_norm = 5.0;
  double lr_decay = 0.97;  // learning rate multiplier per epoch
  Index patience = 15;  // epochs without validation improvement
  GoalSource goal_source = GoalSource::ground_truth;

  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct RunConfig {
  Index history = 10;  // T_h
  Index horizon = 30;  // T_f
  double dt = 0.1;
  std::uint64_t seed = 1;

  // Synthetic data, used unless both map_path and tracks_path are set.
  SynthConfig synth;
  int episodes = 20;
  std::filesystem::path map_path;
  std::filesystem::path tracks_path;

  double train_fraction = 0.8;
  double test_fraction = 0.2;
  double validation_fraction = 0.1;  // carved out of the training tracks
  std::size_t max_train_windows = 500;
  std::size_t max_test_windows = 100;

  SceneConfig scene;
  SgnConfig sgn;
  EdnConfig edn;
  MekfConfig mekf;
  IdmParams idm;
  TrainingConfig training;
  // Goal signal for the decoder in predict, evaluate and adapt.
  GoalSource inference_goals = GoalSource::generated;

  std::filesystem::path output_dir = "out";

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

// Reads a JSON run configuration. HIERTRAJ_OUTPUT_DIR, when set, replaces
// output_dir.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace hiertraj
