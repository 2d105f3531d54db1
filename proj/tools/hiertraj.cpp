#include "hiertraj/error.hpp"
#include "hiertraj/pipeline/evaluate.hpp"
#include "hiertraj/pipeline/online.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace hiertraj;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string map;
  std::string tracks;
  std::optional<int> episodes;
  std::string scenario;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("-o,--out", o.out, "output directory");
  cmd->add_option("--map", o.map, "scene map (JSON); use with --tracks instead of synthetic data");
  cmd->add_option("--tracks", o.tracks, "tracks CSV");
  cmd->add_option("--episodes", o.episodes, "synthetic episodes");
  cmd->add_option("--scenario", o.scenario, "synthetic scenario: intersection or roundabout");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.config.empty()) {
    if (const char* dir = std::getenv("HIERTRAJ_OUTPUT_DIR"); dir != nullptr && *dir != '\0') cfg.output_dir = dir;
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.map.empty()) cfg.map_path = o.map;
  if (!o.tracks.empty()) cfg.tracks_path = o.tracks;
  if (o.episodes) cfg.episodes = *o.episodes;
  if (!o.scenario.empty()) cfg.synth.kind = scenario_from_string(o.scenario);
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  return cfg;
}

std::string scenario_name(const RunConfig& cfg) {
  return cfg.map_path.empty() ? to_string(cfg.synth.kind) : cfg.map_path.stem().string();
}

TrainedModels load_checkpoint(const fs::path& dir) {
  const Checkpoint ck = Checkpoint::in(dir);
  if (!ck.exists()) {
    throw Error("no trained checkpoint in " + dir.string() + " (run `hiertraj train` first)");
  }
  TrainedModels m;
  m.sgn = load_sgn(ck.sgn_config, ck.sgn_params);
  m.edn = load_edn(ck.edn_config, ck.edn_params);
  return m;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

std::vector<TrajectoryPrediction> as_predictions(const WindowRefs& windows, const std::vector<Tensor>& xy) {
  std::vector<TrajectoryPrediction> out;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.push_back({windows[i]->agent_id, windows[i]->past.back().timestamp_ms, xy[i]});
  }
  return out;
}

int run_synth(const CommonOptions& o) {
  const RunConfig cfg = resolve(o);
  const PreparedData d = prepare_data(cfg);
  save_map(d.map, cfg.output_dir / "map.json");
  write_tracks_csv(d.tracks, cfg.output_dir / "tracks.csv");
  write_labels_csv(d.windows, cfg.output_dir / "labels.csv");
  save_run_config(cfg, cfg.output_dir / "run_config.json");
  std::cout << "tracks " << d.tracks.size() << ", windows " << d.stats.windows << " -> " << cfg.output_dir.string()
            << '\n';
  return 0;
}

int run_extract(const CommonOptions& o, std::size_t limit) {
  const RunConfig cfg = resolve(o);
  const PreparedData d = prepare_data(cfg);
  const fs::path path = cfg.output_dir / "graphs.jsonl";
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::size_t n = limit == 0 ? d.windows.size() : std::min(limit, d.windows.size());
  for (std::size_t i = 0; i < n; ++i) out << window_to_json(d.windows[i]).dump() << '\n';
  write_json(d.stats.to_json(), cfg.output_dir / "window_stats.json");
  std::cout << "graphs " << n << " of " << d.stats.windows << " windows, dropped "
            << d.stats.dropped_no_front + d.stats.dropped_projection << " -> " << path.string() << '\n';
  return 0;
}

int run_train(const CommonOptions& o) {
  const RunConfig cfg = resolve(o);
  const PreparedData d = prepare_data(cfg);
  save_run_config(cfg, cfg.output_dir / "run_config.json");
  const TrainedModels m = train_hierarchical(cfg, d);
  Index sgn_epochs = 0, edn_epochs = 0;
  for (const auto& r : m.curve) ++(r.stage == "sgn" ? sgn_epochs : edn_epochs);
  std::cout << "trained on " << d.split.train.size() << " windows (" << sgn_epochs << " graph epochs, "
            << edn_epochs << " decoder epochs) -> " << cfg.output_dir.string() << '\n';
  return 0;
}

int run_predict(const CommonOptions& o, const std::string& checkpoint) {
  const RunConfig cfg = resolve(o);
  const TrainedModels m = load_checkpoint(checkpoint.empty() ? cfg.output_dir : fs::path(checkpoint));
  const PreparedData d = prepare_data(cfg);
  const WindowRefs test = d.refs(d.split.test);
  EvalContext ctx{&d.map, &d.tracks, &m.sgn, &m.edn, cfg.inference_goals, cfg.idm, cfg.scene};
  const auto xy = predict_windows("edn", ctx, test);
  write_predictions_csv(as_predictions(test, xy), cfg.output_dir / "predictions.csv");
  std::cout << "predicted " << test.size() << " windows -> " << (cfg.output_dir / "predictions.csv").string() << '\n';
  return 0;
}

int run_evaluate(const CommonOptions& o, const std::string& checkpoint, std::vector<std::string> methods) {
  const RunConfig cfg = resolve(o);
  std::optional<TrainedModels> m;
  const bool needs_models = std::find(methods.begin(), methods.end(), "edn") != methods.end();
  if (needs_models) m = load_checkpoint(checkpoint.empty() ? cfg.output_dir : fs::path(checkpoint));
  const PreparedData d = prepare_data(cfg);
  const WindowRefs test = d.refs(d.split.test);
  EvalContext ctx{&d.map, &d.tracks, m ? &m->sgn : nullptr, m ? &m->edn : nullptr, cfg.inference_goals, cfg.idm,
                  cfg.scene};
  const EvalReport report = evaluate(ctx, test, methods, scenario_name(cfg));
  write_report_json(report, cfg.output_dir / "report.json");
  write_per_step_csv(report, cfg.output_dir / "per_step.csv");
  for (const auto& r : report.methods) {
    std::cout << r.method << ": ADE " << r.ade_long.mean << " m, FDE " << r.fde_long.mean << " m (3 s); ADE "
              << r.ade_short.mean << " m (0.3 s)\n";
  }
  if (report.insertion_accuracy) std::cout << "insertion accuracy " << report.insertion_accuracy->mean << " %\n";
  return 0;
}

int run_adapt(const CommonOptions& o, const std::string& checkpoint, std::optional<double> speed_factor,
              std::optional<Index> tau) {
  RunConfig cfg = resolve(o);
  if (speed_factor) cfg.synth.speed_factor = *speed_factor;
  if (tau) cfg.mekf.tau = *tau;
  cfg.mekf.validate();
  cfg.synth.validate();
  const TrainedModels m = load_checkpoint(checkpoint.empty() ? cfg.output_dir : fs::path(checkpoint));
  SceneData scene;
  if (!cfg.map_path.empty()) {
    scene = ingest_scene(cfg.map_path, cfg.tracks_path, cfg.scene);
  } else {
    scene.map = make_scenario_map(cfg.synth.kind);
    scene.tracks = synth_tracks(scene.map, cfg.synth, cfg.episodes, cfg.seed);
  }
  std::erase_if(scene.tracks, [](const AgentTrack& t) { return t.path_id < 0; });
  const auto goal = make_goal_provider(scene.map, scene.tracks, cfg.inference_goals, &m.sgn, cfg.history,
                                       cfg.horizon, cfg.scene);
  std::vector<AdaptationLogRow> log;
  const OnlineSummary s = compare_online(m.edn, scene.map, scene.tracks, goal, cfg.mekf, 3, &log);
  write_adaptation_log(log, cfg.output_dir / "adaptation_log.csv");
  nlohmann::json j = s.to_json();
  j["tau"] = cfg.mekf.tau;
  j["tracks"] = scene.tracks.size();
  write_json(j, cfg.output_dir / "adapt_summary.json");
  std::cout << "tau " << cfg.mekf.tau << ": ADE 0.3 s " << s.short_fixed << " -> " << s.short_adapted << " m, ADE 3 s "
            << s.long_fixed << " -> " << s.long_adapted << " m over " << s.predictions << " predictions\n";
  return 0;
}

int run_baseline(const CommonOptions& o, const std::string& method) {
  const RunConfig cfg = resolve(o);
  baseline_from_string(method);
  const PreparedData d = prepare_data(cfg);
  const WindowRefs test = d.refs(d.split.test);
  EvalContext ctx{&d.map, &d.tracks, nullptr, nullptr, cfg.inference_goals, cfg.idm, cfg.scene};
  const auto xy = predict_windows(method, ctx, test);
  write_predictions_csv(as_predictions(test, xy), cfg.output_dir / ("baseline_" + method + ".csv"));
  std::vector<Tensor> truth;
  for (const auto* w : test) truth.push_back(future_xy(*w));
  const MethodMetrics r = score_predictions(method, xy, truth, 3);
  std::cout << method << ": ADE " << r.ade_long.mean << " m, FDE " << r.fde_long.mean << " m over " << r.windows
            << " windows\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical interaction-aware trajectory prediction with online adaptation"};
  app.require_subcommand(1);

  CommonOptions synth_o, extract_o, train_o, predict_o, evaluate_o, adapt_o, baseline_o;
  std::string predict_ck, evaluate_ck, adapt_ck, baseline_method;
  std::size_t extract_limit = 0;
  std::vector<std::string> methods{"edn", "cv", "idm", "fsm-d", "fsm-t"};
  std::optional<double> speed_factor;
  std::optional<Index> tau;

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene: map.json, tracks.csv, labels.csv");
  add_common(synth, synth_o);
  auto* extract = app.add_subcommand("extract-graph", "extract semantic graphs for every window");
  add_common(extract, extract_o);
  extract->add_option("--limit", extract_limit, "write at most this many graphs (0 = all)");
  auto* train = app.add_subcommand("train", "train the graph model, then the decoder");
  add_common(train, train_o);
  auto* predict = app.add_subcommand("predict", "predict the test windows with a trained checkpoint");
  add_common(predict, predict_o);
  predict->add_option("--checkpoint", predict_ck, "checkpoint directory (default: output directory)");
  auto* adapt = app.add_subcommand("adapt", "run online adaptation over a stream and compare with the frozen model");
  add_common(adapt, adapt_o);
  adapt->add_option("--checkpoint", adapt_ck, "checkpoint directory (default: output directory)");
  adapt->add_option("--speed-factor", speed_factor, "desired-speed scale of the synthetic stream");
  adapt->add_option("--tau", tau, "feedback steps");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score methods on the test windows");
  add_common(evaluate_cmd, evaluate_o);
  evaluate_cmd->add_option("--checkpoint", evaluate_ck, "checkpoint directory (default: output directory)");
  evaluate_cmd->add_option("--methods", methods, "edn, ground-truth, cv, idm, fsm-d, fsm-t")->delimiter(',');
  auto* baseline = app.add_subcommand("baseline", "run a rule-based predictor on the test windows");
  add_common(baseline, baseline_o);
  baseline->add_option("--method", baseline_method, "cv, idm, fsm-d or fsm-t")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_o);
    if (*extract) return run_extract(extract_o, extract_limit);
    if (*train) return run_train(train_o);
    if (*predict) return run_predict(predict_o, predict_ck);
    if (*adapt) return run_adapt(adapt_o, adapt_ck, speed_factor, tau);
    if (*evaluate_cmd) return run_evaluate(evaluate_o, evaluate_ck, methods);
    if (*baseline) return run_baseline(baseline_o, baseline_method);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
