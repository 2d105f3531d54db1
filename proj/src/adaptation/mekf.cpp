#include "hiertraj/adaptation/mekf.hpp"

#include "hiertraj/error.hpp"
#include "hiertraj/numerics/ops.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>

namespace hiertraj {

void MekfConfig::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("mekf: lambda must lie in (0, 1]");
  if (!(sigma_r > 0.0)) throw ConfigError("mekf: sigma_r must be positive");
  if (!(sigma_q >= 0.0)) throw ConfigError("mekf: sigma_q must be non-negative");
  if (!(p_init > 0.0)) throw ConfigError("mekf: p_init must be positive");
  if (tau < 1) throw ConfigError("mekf: tau must be at least 1");
}

nlohmann::json MekfConfig::to_json() const {
  return {{"lambda", lambda}, {"sigma_r", sigma_r}, {"sigma_q", sigma_q},
          {"p_init", p_init}, {"tau", tau},         {"segments", segments},
          {"replay_innovation", replay_innovation}};
}

MekfConfig MekfConfig::from_json(const nlohmann::json& j) {
  MekfConfig c;
  try {
    c.lambda = j.value("lambda", c.lambda);
    c.sigma_r = j.value("sigma_r", c.sigma_r);
    c.sigma_q = j.value("sigma_q", c.sigma_q);
    c.p_init = j.value("p_init", c.p_init);
    c.tau = j.value("tau", c.tau);
    c.segments = j.value("segments", c.segments);
    c.replay_innovation = j.value("replay_innovation", c.replay_innovation);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mekf config: ") + e.what());
  }
  c.validate();
  return c;
}

MekfState MekfState::create(const ParamVector& params, std::vector<std::size_t> segments,
                            const MekfConfig& cfg) {
  cfg.validate();
  MekfState s;
  s.cfg = cfg;
  s.segments = std::move(segments);
  s.theta = params.pack(s.segments);
  s.P = Matrix::Identity(s.theta.size(), s.theta.size()) * cfg.p_init;
  return s;
}

std::vector<std::size_t> adapted_segments(const EdnModel& model, const MekfConfig& cfg) {
  if (cfg.segments.empty()) return model.output_segments();
  if (cfg.segments.size() == 1 && cfg.segments.front() == "all") {
    std::vector<std::size_t> all(model.params.segment_count());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  std::vector<std::size_t> out;
  for (const auto& name : cfg.segments) out.push_back(model.params.index_of(name));
  return out;
}

MekfResult mekf_update(MekfState& state, const Matrix& H, const Vector& innovation) {
  const Index n = state.theta.size();
  if (H.cols() != n || H.rows() != innovation.size()) {
    throw ShapeError("mekf_update: Jacobian is " + std::to_string(H.rows()) + "x" +
                     std::to_string(H.cols()) + ", expected " + std::to_string(innovation.size()) +
                     "x" + std::to_string(n));
  }
  MekfResult r;
  r.innovation_norm = innovation.norm();
  if (!H.allFinite() || !innovation.allFinite()) {
    r.warning = "non-finite Jacobian or innovation; update skipped";
    return r;
  }
  const Matrix HP = H * state.P;  // = (P H^T)^T since P is symmetric
  Matrix S = HP * H.transpose();
  S.diagonal().array() += state.cfg.sigma_r;
  const Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) {
    r.warning = "innovation covariance not positive definite; update skipped";
    return r;
  }
  const Matrix K = llt.solve(HP).transpose();  // n x m
  const Vector delta = K * innovation;
  Matrix P = state.P - K * HP;
  P.diagonal().array() += state.cfg.sigma_q;
  P /= state.cfg.lambda;
  P = 0.5 * (P + P.transpose());
  P.diagonal() = P.diagonal().cwiseMax(0.0);
  if (!delta.allFinite() || !P.allFinite()) {
    r.warning = "update produced non-finite values; skipped";
    return r;
  }
  state.theta += delta;
  state.P = std::move(P);
  r.applied = true;
  r.theta_delta_norm = delta.norm();
  return r;
}

void PredictionBuffer::push(BufferEntry entry) {
  if (!entries_.empty() && entry.frame <= entries_.back().frame) {
    throw Error("prediction buffer entries must be time-ordered");
  }
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

const BufferEntry* PredictionBuffer::at_lag(long frame, Index lag) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->frame == frame - lag) return &*it;
    if (it->frame < frame - lag) break;
  }
  return nullptr;
}

Tensor world_to_frame(const Tensor& world, const FrameRecord& frame, const ReferencePath* path) {
  Tensor out(world.rows(), 2);
  for (Index k = 0; k < world.rows(); ++k) {
    Vec2 raw(world(k, 0), world(k, 1));
    if (frame.coordinate == Coordinate::frenet) {
      if (path == nullptr) throw ConfigError("world_to_frame: Frenet frame needs its reference path");
      const FrenetState f = project_to_frenet(*path, raw, 0.0, 0.0);
      raw = Vec2(f.s, f.d);
    }
    out.row(k) = (raw - frame.anchor).transpose();
  }
  return out;
}

Var replay_positions(Tape& tape, const EdnModel& model, const PreparedWindow& window, Index steps) {
  PreparedWindow w = window;
  w.target.resize(0, 0);
  w.target_frame.resize(0, 0);
  const EdnBatch b = make_edn_batch(std::span(&w, 1), model.cfg);
  const EdnOutputs o = edn_forward(tape, model, b, nullptr, steps);
  std::vector<Var> parts;
  for (const auto& f : o.frame) parts.push_back(ad::slice_cols(f, 0, 2));
  return parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
}

MekfResult adapt_step(EdnModel& model, MekfState& state, const BufferEntry& entry,
                      const Tensor& observed_world, const ReferencePath* path) {
  const Index tau = observed_world.rows();
  if (tau < 1 || tau > entry.predicted_frame.rows()) {
    throw ShapeError("adapt_step: observation window does not fit the buffered prediction");
  }
  Tape tape;
  Var y = replay_positions(tape, model, entry.window, tau);
  const Matrix H = tape.jacobian(y, model.params, state.segments);
  const Tensor obs = world_to_frame(observed_world, entry.window.frame, path);
  Tensor e = obs - entry.predicted_frame.topRows(tau);
  if (state.cfg.replay_innovation) {
    e = obs - Eigen::Map<const Tensor>(y.value().data(), tau, 2);
  }
  const Vector innovation = Eigen::Map<const Vector>(e.data(), e.size());  // row-major: step-major
  MekfResult r = mekf_update(state, H, innovation);
  if (r.applied) model.params.unpack(state.segments, state.theta);
  return r;
}

namespace {

std::optional<double> window_ade(const Tensor& pred, const Tensor& obs, Index steps) {
  if (steps < 1 || pred.rows() < steps || obs.rows() < steps) return std::nullopt;
  return (pred.topRows(steps) - obs.topRows(steps)).rowwise().norm().mean();
}

}  // namespace

AdeWindows ade_metrics_1to4(const Tensor& historic_pred, const Tensor& historic_obs,
                            const Tensor& current_pred, const Tensor& current_obs, Index tau,
                            Index horizon) {
  AdeWindows a;
  a.ade1 = window_ade(historic_pred, historic_obs, tau);
  a.ade2 = window_ade(current_pred, current_obs, tau);
  a.ade3 = window_ade(historic_pred, historic_obs, horizon);
  a.ade4 = window_ade(current_pred, current_obs, horizon);
  return a;
}

void write_adaptation_log(const std::vector<AdaptationLogRow>& rows, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw Error("cannot open " + path.string() + " for writing");
  std::fprintf(f, "t_ms,agent_id,tau,innov_norm,theta_delta_norm,ade1,ade2,ade3,ade4\n");
  const auto opt = [f](const std::optional<double>& v) {
    if (v) std::fprintf(f, ",%.17g", *v);
    else std::fprintf(f, ",");
  };
  for (const auto& r : rows) {
    std::fprintf(f, "%ld,%d,%ld,%.17g,%.17g", r.t_ms, r.agent_id, static_cast<long>(r.tau),
                 r.innov_norm, r.theta_delta_norm);
    opt(r.ade.ade1);
    opt(r.ade.ade2);
    opt(r.ade.ade3);
    opt(r.ade.ade4);
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

namespace {

Tensor observed_rows(const AgentTrack& track, std::size_t first, Index count) {
  const auto n = track.samples.size();
  const Index avail = first >= n ? 0 : std::min<Index>(count, static_cast<Index>(n - first));
  Tensor t(avail, 2);
  for (Index k = 0; k < avail; ++k) {
    const auto& s = track.samples[first + static_cast<std::size_t>(k)];
    t(k, 0) = s.x;
    t(k, 1) = s.y;
  }
  return t;
}

Tensor predict_frame(const EdnModel& model, const PreparedWindow& w) {
  Tape tape(false);
  const Index T = model.cfg.horizon;
  const Var flat = replay_positions(tape, model, w, T);
  return Eigen::Map<const Tensor>(flat.value().data(), T, 2);
}

}  // namespace

OnlineResult run_online(const EdnModel& model, const AgentTrack& track, const ReferencePath& path,
                        const GoalProvider& goal, const MekfConfig& cfg, bool adapt) {
  EdnModel local = model;
  MekfState state = MekfState::create(local.params, adapted_segments(local, cfg), cfg);
  PredictionBuffer buffer(static_cast<std::size_t>(cfg.tau) + 1);
  const Index hist = local.cfg.history, T = local.cfg.horizon;
  OnlineResult out;
  const auto& smp = track.samples;
  for (std::size_t i = static_cast<std::size_t>(hist); i < smp.size(); ++i) {
    if (i > 0 && smp[i].frame != smp[i - 1].frame + 1) buffer.clear();
    const TrackSample& cur = smp[i];
    AdaptationLogRow row;
    row.t_ms = cur.timestamp_ms;
    row.agent_id = track.id;
    row.tau = cfg.tau;

    const BufferEntry* past_entry = buffer.at_lag(cur.frame, cfg.tau);
    if (adapt && past_entry != nullptr) {
      const Tensor obs = observed_rows(track, i + 1 - static_cast<std::size_t>(cfg.tau), cfg.tau);
      const MekfResult r = adapt_step(local, state, *past_entry, obs, &path);
      row.innov_norm = r.innovation_norm;
      row.theta_delta_norm = r.theta_delta_norm;
      if (r.applied) ++out.adaptations;
    }

    PreparedWindow w;
    try {
      const std::span<const TrackSample> history(smp.data() + i - static_cast<std::size_t>(hist),
                                                 static_cast<std::size_t>(hist) + 1);
      w = prepare_sequences(history, {}, goal(track, cur.frame), local.cfg, &path);
    } catch (const ProjectionError&) {
      buffer.clear();
      continue;
    }
    const Tensor frame = predict_frame(local, w);
    const Tensor world = frame_to_world(frame, w.frame, &path);

    if (past_entry != nullptr) {
      const Tensor replay = frame_to_world(predict_frame(local, past_entry->window),
                                           past_entry->window.frame, &path);
      row.ade = ade_metrics_1to4(replay, observed_rows(track, i + 1 - static_cast<std::size_t>(cfg.tau), T),
                                 world, observed_rows(track, i + 1, T), cfg.tau, T);
    } else {
      row.ade.ade2 = window_ade(world, observed_rows(track, i + 1, T), cfg.tau);
      row.ade.ade4 = window_ade(world, observed_rows(track, i + 1, T), T);
    }
    buffer.push(BufferEntry{cur.frame, cur.timestamp_ms, std::move(w), frame});
    out.predictions.push_back(TrajectoryPrediction{track.id, cur.timestamp_ms, world});
    out.log.push_back(row);
  }
  return out;
}

}  // namespace hiertraj
