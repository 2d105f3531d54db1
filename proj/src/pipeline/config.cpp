#include "hiertraj/pipeline/config.hpp"

#include "hiertraj/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace hiertraj {

const char* to_string(GoalSource g) {
  return g == GoalSource::ground_truth ? "ground-truth" : "generated";
}

GoalSource goal_source_from_string(const std::string& s) {
  if (s == "ground-truth") return GoalSource::ground_truth;
  if (s == "generated") return GoalSource::generated;
  throw ConfigError("unknown goal source '" + s + "' (expected ground-truth or generated)");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"sgn_epochs", sgn_epochs}, {"edn_epochs", edn_epochs},   {"batch_size", batch_size},
          {"sgn_lr", sgn_lr},         {"edn_lr", edn_lr},           {"clip_norm", clip_norm},
          {"lr_decay", lr_decay},
          {"patience", patience},     {"goal_source", to_string(goal_source)}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.sgn_epochs = j.value("sgn_epochs", c.sgn_epochs);
  c.edn_epochs = j.value("edn_epochs", c.edn_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.sgn_lr = j.value("sgn_lr", c.sgn_lr);
  c.edn_lr = j.value("edn_lr", c.edn_lr);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.patience = j.value("patience", c.patience);
  if (j.contains("goal_source")) c.goal_source = goal_source_from_string(j.at("goal_source").get<std::string>());
  return c;
}

void RunConfig::validate() const {
  if (history <= 0 || horizon <= 0) throw ConfigError("run config: history and horizon must be positive");
  if (!(dt > 0)) throw ConfigError("run config: dt must be positive");
  if (std::abs(dt - kSampleDt) > 1e-12) throw ConfigError("run config: only dt = 0.1 s is supported");
  if (!(train_fraction > 0 && test_fraction >= 0) || std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("run config: train and test fractions must be non-negative and sum to 1");
  }
  if (!(validation_fraction >= 0 && validation_fraction < 1)) {
    throw ConfigError("run config: validation_fraction must be in [0, 1)");
  }
  if (episodes < 1) throw ConfigError("run config: episodes must be >= 1");
  if (training.batch_size < 1 || training.sgn_epochs < 0 || training.edn_epochs < 0 || training.patience < 1 ||
      !(training.lr_decay > 0 && training.lr_decay <= 1)) {
    throw ConfigError("run config: invalid training settings");
  }
  if (map_path.empty() != tracks_path.empty()) {
    throw ConfigError("run config: map_path and tracks_path must be given together");
  }
  synth.validate();
  edn.validate();
  mekf.validate();
  idm.validate();
}

nlohmann::json RunConfig::to_json() const {
  return {{"history", history},
          {"horizon", horizon},
          {"dt", dt},
          {"seed", seed},
          {"synth", synth.to_json()},
          {"episodes", episodes},
          {"map_path", map_path.string()},
          {"tracks_path", tracks_path.string()},
          {"train_fraction", train_fraction},
          {"test_fraction", test_fraction},
          {"validation_fraction", validation_fraction},
          {"max_train_windows", max_train_windows},
          {"max_test_windows", max_test_windows},
          {"scene", {{"corridor", scene.corridor}, {"passed_margin", scene.passed_margin}, {"max_nodes", scene.max_nodes}}},
          {"sgn", sgn.to_json()},
          {"edn", edn.to_json()},
          {"mekf", mekf.to_json()},
          {"idm", idm.to_json()},
          {"training", training.to_json()},
          {"inference_goals", to_string(inference_goals)},
          {"output_dir", output_dir.string()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.history = j.value("history", c.history);
    c.horizon = j.value("horizon", c.horizon);
    c.dt = j.value("dt", c.dt);
    c.seed = j.value("seed", c.seed);
    if (j.contains("synth")) c.synth = SynthConfig::from_json(j.at("synth"));
    c.episodes = j.value("episodes", c.episodes);
    c.map_path = j.value("map_path", std::string());
    c.tracks_path = j.value("tracks_path", std::string());
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.max_train_windows = j.value("max_train_windows", c.max_train_windows);
    c.max_test_windows = j.value("max_test_windows", c.max_test_windows);
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      c.scene.corridor = s.value("corridor", c.scene.corridor);
      c.scene.passed_margin = s.value("passed_margin", c.scene.passed_margin);
      c.scene.max_nodes = s.value("max_nodes", c.scene.max_nodes);
    }
    if (j.contains("sgn")) c.sgn = SgnConfig::from_json(j.at("sgn"));
    if (j.contains("edn")) c.edn = EdnConfig::from_json(j.at("edn"));
    if (j.contains("mekf")) c.mekf = MekfConfig::from_json(j.at("mekf"));
    if (j.contains("idm")) c.idm = IdmParams::from_json(j.at("idm"));
    if (j.contains("training")) c.training = TrainingConfig::from_json(j.at("training"));
    if (j.contains("inference_goals")) {
      c.inference_goals = goal_source_from_string(j.at("inference_goals").get<std::string>());
    }
    c.output_dir = j.value("output_dir", c.output_dir.string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.edn.history = c.history;
  c.edn.horizon = c.horizon;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = RunConfig::from_json(j);
  if (const char* dir = std::getenv("HIERTRAJ_OUTPUT_DIR"); dir != nullptr && *dir != '\0') c.output_dir = dir;
  return c;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << cfg.to_json().dump(2) << "\n";
}

}  // namespace hiertraj
