#pragma once

#include "hiertraj/edn/edn.hpp"

#include <nlohmann/json_fwd.hpp>

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hiertraj {

struct MekfConfig {
  double lambda = 0.9;  // forgetting factor in (0, 1]
  double sigma_r = 1e-2;
  double sigma_q = 1e-6;
  double p_init = 1e-2;
  Index tau = 3;
  // Innovation against the buffered prediction replayed under the current
  // parameters instead of the prediction as it was originally made.
  bool replay_innovation = true;
  // Parameter segments to adapt; empty means the last dense layer.
  std::vector<std::string> segments;

  void validate() const;
  nlohmann::json to_json() const;
  static MekfConfig from_json(const nlohmann::json& j);
};

struct MekfState {
  MekfConfig cfg;
  std::vector<std::size_t> segments;
  Vector theta;
  Matrix P;

  static MekfState create(const ParamVector& params, std::vector<std::size_t> segments,
                          const MekfConfig& cfg);
};

// Resolves cfg.segments against the model's parameter names.
std::vector<std::size_t> adapted_segments(const EdnModel& model, const MekfConfig& cfg);

struct MekfResult {
  bool applied = false;
  double innovation_norm = 0.0;
  double theta_delta_norm = 0.0;
  std::string warning;
};

// K = P H^T (H P H^T + R)^-1, theta += K e, P = (P - K H P + Q) / lambda.
// Non-finite input leaves the state untouched and reports a warning.
MekfResult mekf_update(MekfState& state, const Matrix& H, const Vector& innovation);

struct BufferEntry {
  long frame = 0;
  long timestamp_ms = 0;
  PreparedWindow window;
  Tensor predicted_frame;  // horizon x 2, positions in the window's frame
};

// Recent predictions of one agent, oldest first.
class PredictionBuffer {
 public:
  explicit PredictionBuffer(std::size_t capacity = 8) : capacity_(capacity) {}
  void push(BufferEntry entry);
  // Entry made exactly `lag` frames before `frame`, if buffered.
  const BufferEntry* at_lag(long frame, Index lag) const;
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::size_t capacity_;
  std::deque<BufferEntry> entries_;
};

// Observed world positions expressed in a prepared window's frame.
Tensor world_to_frame(const Tensor& world, const FrameRecord& frame, const ReferencePath* path);

// First `steps` predicted frame positions from a stored window under the
// current parameters, flattened to 1 x 2*steps.
Var replay_positions(Tape& tape, const EdnModel& model, const PreparedWindow& window, Index steps);

// One MEKF step from the prediction buffered tau frames ago and the tau
// positions observed since (world frame, tau x 2). Writes the adapted
// segments back into `model`.
MekfResult adapt_step(EdnModel& model, MekfState& state, const BufferEntry& entry,
                      const Tensor& observed_world, const ReferencePath* path);

struct AdeWindows {
  std::optional<double> ade1;  // adapted steps, historic prediction
  std::optional<double> ade2;  // adapted steps, current prediction
  std::optional<double> ade3;  // whole historic prediction
  std::optional<double> ade4;  // whole current prediction
};

// Observation tensors may be shorter than the horizon near the end of a
// track; a window without full coverage is reported as absent.
AdeWindows ade_metrics_1to4(const Tensor& historic_pred, const Tensor& historic_obs,
                            const Tensor& current_pred, const Tensor& current_obs, Index tau,
                            Index horizon);

struct AdaptationLogRow {
  long t_ms = 0;
  int agent_id = -1;
  Index tau = 0;
  double innov_norm = 0.0;
  double theta_delta_norm = 0.0;
  AdeWindows ade;
};

void write_adaptation_log(const std::vector<AdaptationLogRow>& rows, const std::filesystem::path& path);

using GoalProvider = std::function<double(const AgentTrack&, long frame)>;

struct OnlineResult {
  std::vector<TrajectoryPrediction> predictions;
  std::vector<AdaptationLogRow> log;
  int adaptations = 0;
};

// Algorithm: for every frame with a full history, adapt from the prediction
// made tau frames earlier (if any), then predict and buffer. With
// `adapt = false` the same loop runs with a frozen model. Each call starts
// from `model`; adaptation state is private to the track.
OnlineResult run_online(const EdnModel& model, const AgentTrack& track, const ReferencePath& path,
                        const GoalProvider& goal, const MekfConfig& cfg, bool adapt = true);

}  // namespace hiertraj
