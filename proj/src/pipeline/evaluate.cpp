#include "hiertraj/pipeline/evaluate.hpp"

#include "hiertraj/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>

namespace hiertraj {

Tensor future_xy(const WindowSample& w) {
  Tensor t(static_cast<Index>(w.future.size()), 2);
  for (std::size_t k = 0; k < w.future.size(); ++k) {
    t(static_cast<Index>(k), 0) = w.future[k].x;
    t(static_cast<Index>(k), 1) = w.future[k].y;
  }
  return t;
}

std::vector<Tensor> predict_windows(const std::string& method, const EvalContext& ctx, const WindowRefs& samples) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  if (method == "ground-truth") {
    for (const auto* s : samples) out.push_back(future_xy(*s));
    return out;
  }
  if (ctx.map == nullptr) throw ConfigError("evaluation needs a scene map");
  if (method == "edn") {
    if (ctx.edn == nullptr) throw ConfigError("method 'edn' needs a trained decoder checkpoint");
    const auto goals = window_goals(samples, ctx.goal_source, ctx.sgn);
    std::vector<PreparedWindow> windows;
    std::vector<const ReferencePath*> paths;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      windows.push_back(prepare_window(*samples[i], goals[i], ctx.edn->cfg, *ctx.map, false));
      paths.push_back(&ctx.map->path(samples[i]->path_id));
    }
    return edn_predict(*ctx.edn, windows, paths);
  }
  const BaselineKind kind = baseline_from_string(method);
  for (const auto* s : samples) {
    const Index steps = static_cast<Index>(s->future.size());
    if (kind == BaselineKind::cv) {
      const auto& p = s->past;
      if (p.size() < 2) throw ConfigError("cv baseline needs two history samples");
      out.push_back(constant_velocity(p[p.size() - 2], p.back(), steps, kSampleDt));
      continue;
    }
    if (ctx.tracks == nullptr) throw ConfigError("method '" + method + "' needs the scene tracks");
    out.push_back(baseline_predict(*ctx.map, *ctx.tracks, s->agent_id, s->frame, steps, kind, ctx.idm, ctx.scene));
  }
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(sq / static_cast<double>(values.size()));
  return r;
}

MethodMetrics score_predictions(const std::string& method, const std::vector<Tensor>& predicted,
                                const std::vector<Tensor>& truth, Index short_steps) {
  if (predicted.size() != truth.size()) {
    throw ShapeError(method + ": " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(truth.size()) + " windows");
  }
  MethodMetrics m;
  m.method = method;
  m.windows = static_cast<long>(truth.size());
  if (truth.empty()) return m;
  const Index H = truth.front().rows();
  if (short_steps < 1 || short_steps > H) throw ConfigError("short horizon must lie in [1, horizon]");
  std::vector<double> ade_l, fde_l, ade_s, fde_s;
  m.per_step.assign(static_cast<std::size_t>(H), 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i].rows() != H || truth[i].rows() != H || predicted[i].cols() != 2 || truth[i].cols() != 2) {
      throw ShapeError(method + ": prediction " + std::to_string(i) + " is " + std::to_string(predicted[i].rows()) +
                       "x" + std::to_string(predicted[i].cols()) + ", ground truth is " +
                       std::to_string(truth[i].rows()) + "x2");
    }
    const Eigen::VectorXd err = (predicted[i] - truth[i]).rowwise().norm();
    ade_l.push_back(err.mean());
    fde_l.push_back(err(H - 1));
    ade_s.push_back(err.head(short_steps).mean());
    fde_s.push_back(err(short_steps - 1));
    for (Index k = 0; k < H; ++k) m.per_step[static_cast<std::size_t>(k)] += err(k);
  }
  for (double& v : m.per_step) v /= static_cast<double>(truth.size());
  m.ade_long = mean_std(ade_l);
  m.fde_long = mean_std(fde_l);
  m.ade_short = mean_std(ade_s);
  m.fde_short = mean_std(fde_s);
  return m;
}

const MethodMetrics& EvalReport::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw ConfigError("report has no method '" + name + "'");
}

namespace {

nlohmann::json stat_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : methods) {
    rows.push_back({{"method", m.method},
                    {"windows", m.windows},
                    {"horizons",
                     {{{"steps", horizon}, {"ade", stat_json(m.ade_long)}, {"fde", stat_json(m.fde_long)}},
                      {{"steps", short_steps}, {"ade", stat_json(m.ade_short)}, {"fde", stat_json(m.fde_short)}}}}});
  }
  nlohmann::json j = {{"scenario", scenario}, {"horizon", horizon}, {"short_steps", short_steps},
                      {"windows", windows},   {"methods", rows}};
  j["insertion_accuracy_percent"] = insertion_accuracy ? stat_json(*insertion_accuracy) : nlohmann::json(nullptr);
  return j;
}

MeanStd insertion_accuracy(const SgnModel& sgn, const WindowRefs& samples) {
  std::vector<double> hits;
  constexpr std::size_t kChunk = 256;
  for (std::size_t at = 0; at < samples.size(); at += kChunk) {
    std::vector<const SemanticGraph*> graphs;
    for (std::size_t i = at; i < std::min(samples.size(), at + kChunk); ++i) graphs.push_back(&samples[i]->graph);
    const auto preds = sgn_predict(sgn, graphs);
    for (std::size_t k = 0; k < preds.size(); ++k) {
      hits.push_back(preds[k].insertion_node == samples[at + k]->label_node ? 100.0 : 0.0);
    }
  }
  return mean_std(hits);
}

EvalReport evaluate(const EvalContext& ctx, const WindowRefs& samples, const std::vector<std::string>& methods,
                    const std::string& scenario, Index short_steps) {
  EvalReport r;
  r.scenario = scenario;
  r.short_steps = short_steps;
  r.windows = static_cast<long>(samples.size());
  std::vector<Tensor> truth;
  for (const auto* s : samples) truth.push_back(future_xy(*s));
  if (!truth.empty()) r.horizon = truth.front().rows();
  for (const auto& m : methods) {
    r.methods.push_back(score_predictions(m, predict_windows(m, ctx, samples), truth, short_steps));
  }
  if (ctx.sgn != nullptr && !samples.empty()) r.insertion_accuracy = insertion_accuracy(*ctx.sgn, samples);
  return r;
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17) << report.to_json().dump(2) << "\n";
}

void write_per_step_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "step";
  for (const auto& m : report.methods) out << ',' << m.method;
  out << '\n' << std::setprecision(17);
  for (Index k = 0; k < report.horizon; ++k) {
    out << k + 1;
    for (const auto& m : report.methods) out << ',' << m.per_step[static_cast<std::size_t>(k)];
    out << '\n';
  }
}

}  // namespace hiertraj
