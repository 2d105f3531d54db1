#include "hiertraj/edn/edn.hpp"

#include "hiertraj/error.hpp"
#include "hiertraj/numerics/ops.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace hiertraj {

const char* to_string(Coordinate c) { return c == Coordinate::frenet ? "frenet" : "cartesian"; }

const char* to_string(GoalMode m) {
  switch (m) {
    case GoalMode::none: return "none";
    case GoalMode::transform: return "transform";
    case GoalMode::input: return "input";
    case GoalMode::output: return "output";
    case GoalMode::hidden: return "hidden";
  }
  return "none";
}

const char* to_string(TimeMode m) {
  switch (m) {
    case TimeMode::none: return "none";
    case TimeMode::transform_slot: return "transform-slot";
    case TimeMode::input: return "input";
    case TimeMode::output: return "output";
    case TimeMode::hidden: return "hidden";
  }
  return "none";
}

Coordinate coordinate_from_string(const std::string& s) {
  if (s == "frenet") return Coordinate::frenet;
  if (s == "cartesian") return Coordinate::cartesian;
  throw ConfigError("unknown coordinate '" + s + "'");
}

GoalMode goal_mode_from_string(const std::string& s) {
  for (auto m : {GoalMode::none, GoalMode::transform, GoalMode::input, GoalMode::output, GoalMode::hidden}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown goal mode '" + s + "'");
}

TimeMode time_mode_from_string(const std::string& s) {
  for (auto m : {TimeMode::none, TimeMode::transform_slot, TimeMode::input, TimeMode::output,
                 TimeMode::hidden}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown time signal mode '" + s + "'");
}

Index EdnConfig::decoder_input_dim() const {
  return out_dim() + (goal_mode == GoalMode::input ? 1 : 0) + (time_mode == TimeMode::input ? 1 : 0);
}

Index EdnConfig::head_input_dim() const {
  return hidden_dim + (goal_mode == GoalMode::output ? 1 : 0) +
         (time_mode == TimeMode::output ? 1 : 0) + (encoder_attention ? hidden_dim : 0);
}

void EdnConfig::validate() const {
  if (history < 1 || horizon < 1) throw ConfigError("edn: history and horizon must be at least 1");
  if (hidden_dim < 1 || dense_dim < 1) throw ConfigError("edn: layer widths must be positive");
  if (teacher_forcing < 0.0 || teacher_forcing > 1.0) {
    throw ConfigError("edn: teacher_forcing must lie in [0, 1]");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("edn: dropout must lie in [0, 1)");
  if (position_scale <= 0.0 || speed_scale <= 0.0 || goal_scale <= 0.0) {
    throw ConfigError("edn: channel scales must be positive");
  }
}

nlohmann::json EdnConfig::to_json() const {
  return {{"coordinate", to_string(coordinate)},
          {"in_speed", in_speed},
          {"in_yaw", in_yaw},
          {"out_speed", out_speed},
          {"out_yaw", out_yaw},
          {"incremental", incremental},
          {"align", align},
          {"teacher_forcing", teacher_forcing},
          {"encoder_attention", encoder_attention},
          {"goal_mode", to_string(goal_mode)},
          {"time_mode", to_string(time_mode)},
          {"history", history},
          {"horizon", horizon},
          {"hidden_dim", hidden_dim},
          {"dense_dim", dense_dim},
          {"dropout", dropout},
          {"position_scale", position_scale},
          {"speed_scale", speed_scale},
          {"goal_scale", goal_scale}};
}

EdnConfig EdnConfig::from_json(const nlohmann::json& j) {
  EdnConfig c;
  try {
    c.coordinate = coordinate_from_string(j.value("coordinate", std::string(to_string(c.coordinate))));
    c.in_speed = j.value("in_speed", c.in_speed);
    c.in_yaw = j.value("in_yaw", c.in_yaw);
    c.out_speed = j.value("out_speed", c.out_speed);
    c.out_yaw = j.value("out_yaw", c.out_yaw);
    c.incremental = j.value("incremental", c.incremental);
    c.align = j.value("align", c.align);
    c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
    c.encoder_attention = j.value("encoder_attention", c.encoder_attention);
    c.goal_mode = goal_mode_from_string(j.value("goal_mode", std::string(to_string(c.goal_mode))));
    c.time_mode = time_mode_from_string(j.value("time_mode", std::string(to_string(c.time_mode))));
    c.history = j.value("history", c.history);
    c.horizon = j.value("horizon", c.horizon);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.dense_dim = j.value("dense_dim", c.dense_dim);
    c.dropout = j.value("dropout", c.dropout);
    c.position_scale = j.value("position_scale", c.position_scale);
    c.speed_scale = j.value("speed_scale", c.speed_scale);
    c.goal_scale = j.value("goal_scale", c.goal_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("edn config: ") + e.what());
  }
  c.validate();
  return c;
}

EdnConfig best_edn_config() { return EdnConfig{}; }

namespace {

struct RawState {
  Vec2 pos;
  double v = 0.0;
  double yaw = 0.0;
  double path_s = 0.0;
};

RawState raw_state(const TrackSample& t, const EdnConfig& cfg, const ReferencePath* path) {
  RawState r;
  if (cfg.coordinate == Coordinate::frenet) {
    const FrenetState f = project_to_frenet(*path, t.position(), t.v, t.yaw);
    r.pos = {f.s, f.d};
    r.v = f.v;
    r.yaw = f.heading_rel;
    r.path_s = f.s;
  } else {
    r.pos = t.position();
    r.v = t.v;
    r.yaw = t.yaw;
    if (path != nullptr && cfg.goal_mode == GoalMode::transform) {
      r.path_s = project_to_frenet(*path, t.position(), t.v, t.yaw).s;
    }
  }
  return r;
}

void fill_row(Tensor& dst, Index row, const Vec2& pos, const RawState& st, bool speed, bool yaw) {
  dst(row, 0) = pos.x();
  dst(row, 1) = pos.y();
  Index c = 2;
  if (speed) dst(row, c++) = st.v;
  if (yaw) dst(row, c++) = st.yaw;
}

Tensor channel_scales(Index rows, bool speed, bool yaw, const EdnConfig& cfg) {
  Tensor s(1, 2 + (speed ? 1 : 0) + (yaw ? 1 : 0));
  s(0, 0) = s(0, 1) = cfg.position_scale;
  Index c = 2;
  if (speed) s(0, c++) = cfg.speed_scale;
  if (yaw) s(0, c++) = 1.0;
  return s.replicate(rows, 1);
}

}  // namespace

PreparedWindow prepare_sequences(std::span<const TrackSample> past, std::span<const TrackSample> future,
                                 double goal, const EdnConfig& cfg, const ReferencePath* path) {
  if (static_cast<Index>(past.size()) != cfg.history + 1) {
    throw ShapeError("prepare_sequences: expected " + std::to_string(cfg.history + 1) +
                     " history samples, got " + std::to_string(past.size()));
  }
  if (!future.empty() && static_cast<Index>(future.size()) != cfg.horizon) {
    throw ShapeError("prepare_sequences: expected " + std::to_string(cfg.horizon) +
                     " future samples, got " + std::to_string(future.size()));
  }
  const bool needs_path = cfg.coordinate == Coordinate::frenet || cfg.goal_mode == GoalMode::transform;
  if (needs_path && path == nullptr) throw ConfigError("prepare_sequences: reference path required");

  std::vector<RawState> hist;
  for (const auto& t : past) hist.push_back(raw_state(t, cfg, path));
  const RawState& cur = hist.back();

  PreparedWindow w;
  w.goal = goal;
  w.frame.coordinate = cfg.coordinate;
  w.frame.path_id = path != nullptr ? path->id() : -1;
  if (cfg.goal_mode == GoalMode::transform) {
    w.frame.anchor = cfg.coordinate == Coordinate::frenet ? Vec2(cur.path_s + goal, 0.0)
                                                          : path->position(cur.path_s + goal);
  } else if (cfg.align) {
    w.frame.anchor = cur.pos;
  }
  w.frame.current = cur.pos - w.frame.anchor;

  const Index n_in = cfg.history + 1;
  w.input.resize(n_in, cfg.in_dim());
  for (Index k = 0; k < n_in; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const Vec2 p = hist[i].pos - w.frame.anchor;
    Vec2 rep = p;
    if (cfg.incremental) rep = k == 0 ? Vec2(hist[1].pos - hist[0].pos) : Vec2(hist[i].pos - hist[i - 1].pos);
    fill_row(w.input, k, rep, hist[i], cfg.in_speed, cfg.in_yaw);
  }

  w.start.resize(1, cfg.out_dim());
  const Vec2 before = hist[hist.size() - 2].pos - w.frame.anchor;
  fill_row(w.start, 0, cfg.incremental ? Vec2(w.frame.current - before) : w.frame.current, cur,
           cfg.out_speed, cfg.out_yaw);

  if (!future.empty()) {
    w.target.resize(cfg.horizon, cfg.out_dim());
    w.target_frame.resize(cfg.horizon, cfg.out_dim());
    Vec2 prev = w.frame.current;
    for (Index k = 0; k < cfg.horizon; ++k) {
      const RawState st = raw_state(future[static_cast<std::size_t>(k)], cfg, path);
      const Vec2 p = st.pos - w.frame.anchor;
      fill_row(w.target_frame, k, p, st, cfg.out_speed, cfg.out_yaw);
      fill_row(w.target, k, cfg.incremental ? Vec2(p - prev) : p, st, cfg.out_speed, cfg.out_yaw);
      prev = p;
    }
  }
  return w;
}

Tensor representation_to_frame(const Tensor& rep, const FrameRecord& frame, const EdnConfig& cfg) {
  Tensor out = rep;
  if (!cfg.incremental) return out;
  Vec2 acc = frame.current;
  for (Index k = 0; k < rep.rows(); ++k) {
    acc += Vec2(rep(k, 0), rep(k, 1));
    out(k, 0) = acc.x();
    out(k, 1) = acc.y();
  }
  return out;
}

Tensor frame_to_world(const Tensor& frame_rows, const FrameRecord& frame, const ReferencePath* path) {
  Tensor out(frame_rows.rows(), 2);
  for (Index k = 0; k < frame_rows.rows(); ++k) {
    const Vec2 raw = Vec2(frame_rows(k, 0), frame_rows(k, 1)) + frame.anchor;
    Vec2 world = raw;
    if (frame.coordinate == Coordinate::frenet) {
      if (path == nullptr) throw ConfigError("frame_to_world: Frenet frame needs its reference path");
      world = path->to_cartesian(raw.x(), raw.y());
    }
    out(k, 0) = world.x();
    out(k, 1) = world.y();
  }
  return out;
}

EdnModel EdnModel::create(const EdnConfig& cfg) {
  cfg.validate();
  EdnModel m;
  m.cfg = cfg;
  auto& p = m.params;
  const Index H = cfg.hidden_dim, D = cfg.dense_dim;
  m.encoder = GruCell::create(p, "encoder", cfg.in_dim(), H);
  m.decoder = GruCell::create(p, "decoder", cfg.decoder_input_dim(), H);
  if (cfg.goal_mode == GoalMode::hidden) {
    m.goal_embed = DenseLayer::create(p, "goal_embed", 1, H, Activation::identity);
    m.has_goal_embed = true;
  }
  if (cfg.time_mode == TimeMode::hidden) {
    m.time_embed = DenseLayer::create(p, "time_embed", 1, H, Activation::identity);
    m.has_time_embed = true;
  }
  if (cfg.encoder_attention) {
    m.attention_segment = p.add_segment("attention.bilinear", H * H);
    m.has_attention = true;
  }
  m.head1 = DenseLayer::create(p, "head1", cfg.head_input_dim(), D, Activation::tanh);
  m.head2 = DenseLayer::create(p, "head2", D, D, Activation::tanh);
  m.head3 = DenseLayer::create(p, "head3", D, cfg.out_dim(), Activation::identity);
  return m;
}

void EdnModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  encoder.init(params, rng);
  decoder.init(params, rng);
  if (has_goal_embed) goal_embed.init(params, rng);
  if (has_time_embed) time_embed.init(params, rng);
  if (has_attention) {
    init_uniform(params, attention_segment, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)), rng);
  }
  head1.init(params, rng);
  head2.init(params, rng);
  head3.init(params, rng);
}

std::vector<std::size_t> EdnModel::output_segments() const {
  return {head3.weight_segment, head3.bias_segment};
}

EdnBatch make_edn_batch(std::span<const PreparedWindow> windows, const EdnConfig& cfg) {
  if (windows.empty()) throw ConfigError("empty EDN batch");
  const Index B = static_cast<Index>(windows.size());
  const bool with_targets = windows.front().target.size() > 0;
  EdnBatch b;
  b.start.resize(B, cfg.out_dim());
  b.goals.resize(B, 1);
  b.current.resize(B, 2);
  for (Index k = 0; k <= cfg.history; ++k) b.inputs.emplace_back(B, cfg.in_dim());
  if (with_targets) {
    for (Index k = 0; k < cfg.horizon; ++k) {
      b.targets.emplace_back(B, cfg.out_dim());
      b.targets_frame.emplace_back(B, cfg.out_dim());
    }
  }
  for (Index r = 0; r < B; ++r) {
    const auto& w = windows[static_cast<std::size_t>(r)];
    if (w.input.rows() != cfg.history + 1 || w.input.cols() != cfg.in_dim() ||
        w.start.cols() != cfg.out_dim() || (w.target.size() > 0) != with_targets) {
      throw ShapeError("EDN batch: window does not match the model configuration");
    }
    for (Index k = 0; k <= cfg.history; ++k) b.inputs[k].row(r) = w.input.row(k);
    b.start.row(r) = w.start.row(0);
    b.goals(r, 0) = w.goal;
    b.current(r, 0) = w.frame.current.x();
    b.current(r, 1) = w.frame.current.y();
    for (Index k = 0; with_targets && k < cfg.horizon; ++k) {
      b.targets[k].row(r) = w.target.row(k);
      b.targets_frame[k].row(r) = w.target_frame.row(k);
    }
  }
  const Tensor in_scale = channel_scales(B, cfg.in_speed, cfg.in_yaw, cfg);
  for (auto& x : b.inputs) x = x.cwiseProduct(in_scale);
  b.start = b.start.cwiseProduct(channel_scales(B, cfg.out_speed, cfg.out_yaw, cfg));
  return b;
}

EncoderOutput edn_encode(Tape& tape, const EdnModel& model, const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw ShapeError("edn_encode: empty input sequence");
  EncoderOutput out;
  Var h = tape.constant(Tensor::Zero(inputs.front().rows(), model.cfg.hidden_dim));
  for (const auto& x : inputs) {
    h = model.encoder.forward(tape, model.params, tape.constant(x), h);
    out.states.push_back(h);
  }
  out.context = h;
  return out;
}

namespace {

Var dropout(Tape& tape, Var x, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
  return ad::mul_const(x, mask);
}

Var attend(Tape& tape, const EdnModel& model, Var h, const std::vector<Var>& states) {
  const Index H = model.cfg.hidden_dim;
  Var w = tape.param(model.params, model.attention_segment, H, H);
  Var q = ad::matmul(h, w);
  std::vector<Var> scores;
  for (const auto& s : states) scores.push_back(ad::row_sum(ad::mul(q, s)));
  Var alpha = ad::softmax_rows(ad::concat_cols(scores));
  Var ctx = ad::mul_col(states.front(), ad::slice_cols(alpha, 0, 1));
  for (std::size_t j = 1; j < states.size(); ++j) {
    ctx = ad::add(ctx, ad::mul_col(states[j], ad::slice_cols(alpha, static_cast<Index>(j), 1)));
  }
  return ctx;
}

}  // namespace

std::vector<Var> edn_decode(Tape& tape, const EdnModel& model, const EncoderOutput& enc,
                            const Tensor& start, const Tensor& goals, const DecodeOptions& opts) {
  const auto& cfg = model.cfg;
  const auto& p = model.params;
  const Index B = start.rows();
  const Index steps = opts.steps < 0 ? cfg.horizon : opts.steps;
  if (start.cols() != cfg.out_dim() || goals.rows() != B || enc.context.rows() != B) {
    throw ShapeError("edn_decode: start, goals and context disagree on shape");
  }
  const bool forcing = opts.rng != nullptr && cfg.teacher_forcing > 0.0;
  if (forcing && (opts.teacher == nullptr || static_cast<Index>(opts.teacher->size()) < steps)) {
    throw ConfigError("edn_decode: teacher forcing needs target sequences");
  }
  const Tensor out_scale = channel_scales(B, cfg.out_speed, cfg.out_yaw, cfg);
  const Tensor inv_scale = out_scale.cwiseInverse();
  Var g = tape.constant(goals * cfg.goal_scale);

  Var h = enc.context;
  if (model.has_goal_embed) h = ad::add(h, model.goal_embed.forward(tape, p, g));
  Var prev = tape.constant(start);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Var> out;
  for (Index k = 1; k <= steps; ++k) {
    Var t = tape.constant(Tensor::Constant(B, 1, static_cast<double>(k) / static_cast<double>(cfg.horizon)));
    if (model.has_time_embed) h = ad::add(h, model.time_embed.forward(tape, p, t));
    std::vector<Var> in{prev};
    if (cfg.goal_mode == GoalMode::input) in.push_back(g);
    if (cfg.time_mode == TimeMode::input) in.push_back(t);
    h = model.decoder.forward(tape, p, in.size() == 1 ? prev : ad::concat_cols(in), h);

    std::vector<Var> head{h};
    if (cfg.goal_mode == GoalMode::output) head.push_back(g);
    if (cfg.time_mode == TimeMode::output) head.push_back(t);
    if (model.has_attention) head.push_back(attend(tape, model, h, enc.states));
    Var y = model.head1.forward(tape, p, head.size() == 1 ? h : ad::concat_cols(head));
    y = dropout(tape, y, cfg.dropout, opts.rng);
    y = dropout(tape, model.head2.forward(tape, p, y), cfg.dropout, opts.rng);
    Var o = model.head3.forward(tape, p, y);
    out.push_back(ad::mul_const(o, inv_scale));

    prev = o;
    if (forcing) {
      Tensor m(B, cfg.out_dim());
      for (Index r = 0; r < B; ++r) m.row(r).setConstant(unit(*opts.rng) < cfg.teacher_forcing ? 1.0 : 0.0);
      const Tensor truth = (*opts.teacher)[static_cast<std::size_t>(k - 1)].cwiseProduct(out_scale);
      prev = ad::add_const(ad::mul_const(o, (1.0 - m.array()).matrix()), truth.cwiseProduct(m));
    }
  }
  return out;
}

EdnOutputs edn_forward(Tape& tape, const EdnModel& model, const EdnBatch& batch,
                       std::mt19937_64* rng, Index steps) {
  const auto& cfg = model.cfg;
  EdnOutputs out;
  const EncoderOutput enc = edn_encode(tape, model, batch.inputs);
  DecodeOptions opts;
  opts.rng = rng;
  opts.teacher = batch.has_targets() ? &batch.targets : nullptr;
  opts.steps = steps;
  out.steps = edn_decode(tape, model, enc, batch.start, batch.goals, opts);
  const Index rest = cfg.out_dim() - 2;
  Var pos = tape.constant(batch.current);
  for (const auto& s : out.steps) {
    Var delta = ad::slice_cols(s, 0, 2);
    pos = cfg.incremental ? ad::add(pos, delta) : delta;
    out.frame.push_back(rest > 0 ? ad::concat_cols({pos, ad::slice_cols(s, 2, rest)}) : pos);
  }
  return out;
}

Var edn_loss(Tape& tape, const std::vector<Var>& frame, const std::vector<Tensor>& targets_frame) {
  if (frame.empty() || frame.size() > targets_frame.size()) {
    throw ShapeError("edn_loss: prediction and target lengths differ");
  }
  Var total;
  for (std::size_t k = 0; k < frame.size(); ++k) {
    if (frame[k].rows() != targets_frame[k].rows() || frame[k].cols() != targets_frame[k].cols()) {
      throw ShapeError("edn_loss: prediction and target shapes differ");
    }
    Var e = ad::sum(ad::square(ad::add_const(frame[k], -targets_frame[k])));
    total = k == 0 ? e : ad::add(total, e);
  }
  const double n = static_cast<double>(frame.size()) * static_cast<double>(frame.front().rows());
  return ad::scale(total, 1.0 / n);
}

double edn_loss(const Tensor& predicted, const Tensor& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols() || predicted.rows() == 0) {
    throw ShapeError("edn_loss: prediction and target shapes differ");
  }
  return (predicted - target).squaredNorm() / static_cast<double>(predicted.rows());
}

std::vector<Tensor> edn_predict(const EdnModel& model, std::span<const PreparedWindow> windows,
                                std::span<const ReferencePath* const> paths) {
  if (paths.size() != windows.size()) throw ShapeError("edn_predict: one path per window required");
  const EdnBatch batch = make_edn_batch(windows, model.cfg);
  Tape tape(false);
  const EdnOutputs out = edn_forward(tape, model, batch);
  std::vector<Tensor> result;
  const Index T = static_cast<Index>(out.frame.size());
  for (Index r = 0; r < batch.size(); ++r) {
    Tensor rows(T, 2);
    for (Index k = 0; k < T; ++k) rows.row(k) = out.frame[static_cast<std::size_t>(k)].value().row(r).leftCols(2);
    result.push_back(frame_to_world(rows, windows[static_cast<std::size_t>(r)].frame, paths[static_cast<std::size_t>(r)]));
  }
  return result;
}

Tensor edn_predict(const EdnModel& model, std::span<const TrackSample> past, double goal,
                   const ReferencePath* path) {
  const PreparedWindow w = prepare_sequences(past, {}, goal, model.cfg, path);
  const ReferencePath* paths[] = {path};
  return edn_predict(model, std::span(&w, 1), paths).front();
}

void write_predictions_csv(const std::vector<TrajectoryPrediction>& predictions,
                           const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw Error("cannot open " + path.string() + " for writing");
  std::fprintf(f, "track_id,t0_ms,step,x,y\n");
  for (const auto& p : predictions) {
    for (Index k = 0; k < p.xy.rows(); ++k) {
      std::fprintf(f, "%d,%ld,%ld,%.17g,%.17g\n", p.track_id, p.t0_ms, static_cast<long>(k + 1),
                   p.xy(k, 0), p.xy(k, 1));
    }
  }
  std::fclose(f);
}

void save_edn(const EdnModel& model, const std::filesystem::path& config_path,
              const std::filesystem::path& params_path) {
  std::ofstream out(config_path);
  if (!out) throw Error("cannot open " + config_path.string() + " for writing");
  out << model.cfg.to_json().dump(1) << '\n';
  save_params_binary(model.params, params_path);
}

EdnModel load_edn(const std::filesystem::path& config_path, const std::filesystem::path& params_path) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open EDN config " + config_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(config_path.string() + ": " + e.what());
  }
  EdnModel m = EdnModel::create(EdnConfig::from_json(j));
  ParamVector loaded = load_params_binary(params_path);
  if (!loaded.same_layout(m.params)) throw ConfigError("EDN checkpoint does not match its config");
  m.params = std::move(loaded);
  return m;
}

}  // namespace hiertraj
