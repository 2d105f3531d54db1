#pragma once

#include "hiertraj/pipeline/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hiertraj {

// Method names: "ground-truth" (playback of the recorded future), "cv",
// "idm", "fsm-d", "fsm-t" and "edn" (decoder with the context's goal source).
struct EvalContext {
  const SceneMap* map = nullptr;
  const std::vector<AgentTrack>* tracks = nullptr;  // needed by the rule-based methods
  const SgnModel* sgn = nullptr;
  const EdnModel* edn = nullptr;
  GoalSource goal_source = GoalSource::ground_truth;
  IdmParams idm;
  SceneConfig scene;
};

// World-frame horizon x 2 prediction per window.
std::vector<Tensor> predict_windows(const std::string& method, const EvalContext& ctx, const WindowRefs& samples);

Tensor future_xy(const WindowSample& w);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd mean_std(const std::vector<double>& values);

struct MethodMetrics {
  std::string method;
  long windows = 0;
  MeanStd ade_long, fde_long;    // over the full horizon
  MeanStd ade_short, fde_short;  // over the first `short_steps`
  std::vector<double> per_step;  // mean error at each step 1..horizon
};

// Throws ShapeError when a prediction does not line up with its ground truth.
MethodMetrics score_predictions(const std::string& method, const std::vector<Tensor>& predicted,
                                const std::vector<Tensor>& truth, Index short_steps);

struct EvalReport {
  std::string scenario;
  Index horizon = 30;
  Index short_steps = 3;
  long windows = 0;
  std::vector<MethodMetrics> methods;
  std::optional<MeanStd> insertion_accuracy;  // percent

  const MethodMetrics& method(const std::string& name) const;
  nlohmann::json to_json() const;
};

// Fraction of windows whose most probable node is the labelled one.
MeanStd insertion_accuracy(const SgnModel& sgn, const WindowRefs& samples);

EvalReport evaluate(const EvalContext& ctx, const WindowRefs& samples, const std::vector<std::string>& methods,
                    const std::string& scenario, Index short_steps = 3);

void write_report_json(const EvalReport& report, const std::filesystem::path& path);
// `step,<method>...` with one row per horizon step.
void write_per_step_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace hiertraj
