#pragma once

#include "hiertraj/numerics/layers.hpp"
#include "hiertraj/numerics/tape.hpp"
#include "hiertraj/scene/reference_path.hpp"
#include "hiertraj/scene/tracks.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hiertraj {

enum class Coordinate { frenet, cartesian };
enum class GoalMode { none, transform, input, output, hidden };
enum class TimeMode { none, transform_slot, input, output, hidden };

const char* to_string(Coordinate c);
const char* to_string(GoalMode m);
const char* to_string(TimeMode m);
Coordinate coordinate_from_string(const std::string& s);
GoalMode goal_mode_from_string(const std::string& s);
TimeMode time_mode_from_string(const std::string& s);

// Feature layout per step: [p0, p1, speed?, yaw?]. Positions are (s, d) in
// Frenet and (x, y) in Cartesian coordinates; yaw is heading relative to the
// path in Frenet and absolute in Cartesian.
struct EdnConfig {
  Coordinate coordinate = Coordinate::frenet;
  bool in_speed = true;
  bool in_yaw = true;
  bool out_speed = false;
  bool out_yaw = false;
  bool incremental = true;
  bool align = true;
  double teacher_forcing = 0.0;
  bool encoder_attention = false;
  GoalMode goal_mode = GoalMode::input;
  TimeMode time_mode = TimeMode::input;
  Index history = 10;  // T_h; the encoder sees history + 1 steps
  Index horizon = 30;  // T_f
  Index hidden_dim = 64;
  Index dense_dim = 64;
  double dropout = 0.1;
  double position_scale = 0.1;
  double speed_scale = 0.1;
  double goal_scale = 0.1;

  Index in_dim() const { return 2 + (in_speed ? 1 : 0) + (in_yaw ? 1 : 0); }
  Index out_dim() const { return 2 + (out_speed ? 1 : 0) + (out_yaw ? 1 : 0); }
  Index decoder_input_dim() const;
  Index head_input_dim() const;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static EdnConfig from_json(const nlohmann::json& j);
};

// Frenet, speed and yaw inputs, incremental aligned positions, goal and time
// fed as decoder inputs.
EdnConfig best_edn_config();

// Maps raw coordinates to the prepared frame: frame = raw - anchor. The anchor
// is the goal point under goal transform, the current position under
// alignment, and zero otherwise.
struct FrameRecord {
  Coordinate coordinate = Coordinate::frenet;
  int path_id = -1;
  Vec2 anchor = Vec2::Zero();
  Vec2 current = Vec2::Zero();  // current position in the frame
};

struct PreparedWindow {
  Tensor input;         // (history + 1) x in_dim
  Tensor start;         // 1 x out_dim, first decoder input
  Tensor target;        // horizon x out_dim representation; empty without future
  Tensor target_frame;  // horizon x out_dim, positions in the frame
  double goal = 0.0;    // travelled distance over the horizon, metres
  FrameRecord frame;
};

// Incremental representation differences each position against the previous
// step. The oldest input step repeats the following difference and the first
// target step is taken against the current position. `path` is required for Frenet
// coordinates and for goal transform.
PreparedWindow prepare_sequences(std::span<const TrackSample> past, std::span<const TrackSample> future,
                                 double goal, const EdnConfig& cfg, const ReferencePath* path);

// Representation rows (positions in the first two columns) to frame positions.
Tensor representation_to_frame(const Tensor& rep, const FrameRecord& frame, const EdnConfig& cfg);
// Frame positions (first two columns) to world x, y.
Tensor frame_to_world(const Tensor& frame_rows, const FrameRecord& frame, const ReferencePath* path);

struct EdnModel {
  EdnConfig cfg;
  ParamVector params;
  GruCell encoder;
  GruCell decoder;
  DenseLayer head1;  // tanh
  DenseLayer head2;  // tanh
  DenseLayer head3;  // linear, to out_dim
  DenseLayer goal_embed;  // hidden-mode goal, 1 -> hidden
  DenseLayer time_embed;  // hidden-mode time, 1 -> hidden
  std::size_t attention_segment = 0;  // hidden x hidden bilinear score
  bool has_goal_embed = false;
  bool has_time_embed = false;
  bool has_attention = false;

  static EdnModel create(const EdnConfig& cfg);
  void init(std::uint64_t seed);
  // Weight and bias of the last dense layer.
  std::vector<std::size_t> output_segments() const;
};

// Windows stacked as rows. Inputs and start are already multiplied by the
// channel scales; targets are in metres / radians.
struct EdnBatch {
  std::vector<Tensor> inputs;   // per encoder step, B x in_dim
  Tensor start;                 // B x out_dim
  Tensor goals;                 // B x 1, metres
  Tensor current;               // B x 2, current frame position
  std::vector<Tensor> targets;  // per decoder step, B x out_dim representation
  std::vector<Tensor> targets_frame;  // per decoder step, B x out_dim

  Index size() const { return start.rows(); }
  bool has_targets() const { return !targets.empty(); }
};

EdnBatch make_edn_batch(std::span<const PreparedWindow> windows, const EdnConfig& cfg);

struct EncoderOutput {
  Var context;
  std::vector<Var> states;  // per step
};

EncoderOutput edn_encode(Tape& tape, const EdnModel& model, const std::vector<Tensor>& inputs);

struct DecodeOptions {
  std::mt19937_64* rng = nullptr;  // enables dropout and teacher forcing
  const std::vector<Tensor>* teacher = nullptr;  // per step, B x out_dim representation
  Index steps = -1;  // defaults to the configured horizon
};

// Per step B x out_dim representation in metres / radians.
std::vector<Var> edn_decode(Tape& tape, const EdnModel& model, const EncoderOutput& enc,
                            const Tensor& start, const Tensor& goals, const DecodeOptions& opts = {});

struct EdnOutputs {
  std::vector<Var> steps;  // representation
  std::vector<Var> frame;  // positions accumulated into the frame
};

EdnOutputs edn_forward(Tape& tape, const EdnModel& model, const EdnBatch& batch,
                       std::mt19937_64* rng = nullptr, Index steps = -1);

// Sum of squared errors over features, averaged over steps and rows.
Var edn_loss(Tape& tape, const std::vector<Var>& frame, const std::vector<Tensor>& targets_frame);
double edn_loss(const Tensor& predicted, const Tensor& target);

// World-frame prediction for one window: horizon x 2.
Tensor edn_predict(const EdnModel& model, std::span<const TrackSample> past, double goal,
                   const ReferencePath* path);
std::vector<Tensor> edn_predict(const EdnModel& model, std::span<const PreparedWindow> windows,
                                std::span<const ReferencePath* const> paths);

struct TrajectoryPrediction {
  int track_id = -1;
  long t0_ms = 0;
  Tensor xy;  // horizon x 2, world frame
};

// `track_id,t0_ms,step,x,y` with steps counted from 1.
void write_predictions_csv(const std::vector<TrajectoryPrediction>& predictions,
                           const std::filesystem::path& path);

void save_edn(const EdnModel& model, const std::filesystem::path& config_path,
              const std::filesystem::path& params_path);
EdnModel load_edn(const std::filesystem::path& config_path, const std::filesystem::path& params_path);

}  // namespace hiertraj
