#include "hiertraj/error.hpp"
#include "hiertraj/pipeline/evaluate.hpp"
#include "hiertraj/pipeline/online.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

using namespace hiertraj;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hiertraj_pipeline_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

bool same_samples(const AgentTrack& a, const AgentTrack& b) {
  if (a.id != b.id || a.samples.size() != b.samples.size()) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto &p = a.samples[i], &q = b.samples[i];
    if (p.frame != q.frame || p.timestamp_ms != q.timestamp_ms || p.x != q.x || p.y != q.y || p.v != q.v ||
        p.yaw != q.yaw) {
      return false;
    }
  }
  return true;
}

std::vector<WindowSample> episode_windows(const SceneMap& map, const SynthConfig& cfg, std::uint64_t seed,
                                          WindowStats& stats) {
  const Episode ep = synth_episode(map, cfg, seed);
  return extract_windows(map, ep.tracks, 0, 10, 30, stats);
}

void check_json_close(const nlohmann::json& got, const nlohmann::json& want, const std::string& at) {
  INFO(at);
  if (want.is_number_float() || (want.is_number() && got.is_number_float())) {
    const double g = got.get<double>(), w = want.get<double>();
    CHECK(std::abs(g - w) <= 1e-9 * std::max(1.0, std::abs(w)));
  } else if (want.is_object()) {
    REQUIRE(got.is_object());
    CHECK(got.size() == want.size());
    for (auto it = want.begin(); it != want.end(); ++it) {
      REQUIRE(got.contains(it.key()));
      check_json_close(got.at(it.key()), it.value(), at + "." + it.key());
    }
  } else if (want.is_array()) {
    REQUIRE(got.is_array());
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) check_json_close(got[i], want[i], at + "[" + std::to_string(i) + "]");
  } else {
    CHECK(got == want);
  }
}

}  // namespace

TEST_CASE("ingest: synthetic output re-ingests to identical tracks with the same paths") {
  const SceneMap map = make_intersection_map();
  SynthConfig cfg;
  cfg.n_agents = 6;
  const Episode ep = synth_episode(map, cfg, 11);
  const fs::path map_path = scratch("map.json"), csv = scratch("tracks.csv");
  save_map(map, map_path);
  write_tracks_csv(ep.tracks, csv);
  const SceneData back = ingest_scene(map_path, csv);
  REQUIRE(back.tracks.size() == ep.tracks.size());
  for (std::size_t i = 0; i < ep.tracks.size(); ++i) {
    CHECK(same_samples(back.tracks[i], ep.tracks[i]));
    CHECK(back.tracks[i].path_id == ep.tracks[i].path_id);
  }
  CHECK(back.map.paths().size() == map.paths().size());
}

TEST_CASE("ingest: empty file and malformed rows") {
  const fs::path map_path = scratch("map_empty.json");
  save_map(make_intersection_map(), map_path);
  const fs::path empty = scratch("empty.csv");
  write_text(empty, "track_id,frame_id,timestamp_ms,x,y,vx,vy,psi_rad\n");
  CHECK(ingest_scene(map_path, empty).tracks.empty());

  const fs::path bad = scratch("bad.csv");
  write_text(bad,
             "track_id,frame_id,timestamp_ms,x,y,vx,vy,psi_rad\n"
             "1,0,0,1.0,2.0,1,0,0\n"
             "1,1,100,abc,2.0,1,0,0\n");
  try {
    ingest_scene(map_path, bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  const fs::path missing = scratch("missing.csv");
  write_text(missing, "track_id,frame_id,timestamp_ms,x,y\n");
  CHECK_THROWS_AS(ingest_scene(map_path, missing), ParseError);
}

TEST_CASE("synth: deterministic per seed") {
  for (auto kind : {ScenarioKind::intersection, ScenarioKind::roundabout}) {
    const SceneMap map = make_scenario_map(kind);
    SynthConfig cfg;
    cfg.kind = kind;
    const Episode a = synth_episode(map, cfg, 7), b = synth_episode(map, cfg, 7), c = synth_episode(map, cfg, 8);
    REQUIRE(a.tracks.size() == b.tracks.size());
    for (std::size_t i = 0; i < a.tracks.size(); ++i) CHECK(same_samples(a.tracks[i], b.tracks[i]));
    bool differs = a.tracks.size() != c.tracks.size();
    for (std::size_t i = 0; !differs && i < a.tracks.size(); ++i) differs = !same_samples(a.tracks[i], c.tracks[i]);
    CHECK(differs);
  }
}

TEST_CASE("synth: a lone agent drives free and every label is its front area") {
  for (auto kind : {ScenarioKind::intersection, ScenarioKind::roundabout}) {
    const SceneMap map = make_scenario_map(kind);
    SynthConfig cfg;
    cfg.kind = kind;
    cfg.n_agents = 1;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      WindowStats stats;
      const auto windows = episode_windows(map, cfg, seed, stats);
      REQUIRE_FALSE(windows.empty());
      for (const auto& w : windows) {
        CHECK(w.yields());
        CHECK(w.graph.node_ids.size() == 1);
      }
      const auto track = synth_episode(map, cfg, seed).tracks.at(0);
      // Free flow: IDM only accelerates toward the desired speed.
      for (std::size_t k = 1; k < track.samples.size(); ++k) CHECK(track.samples[k].v >= track.samples[k - 1].v - 1e-12);
    }
  }
}

TEST_CASE("synth: both insertion classes are well represented") {
  for (auto kind : {ScenarioKind::intersection, ScenarioKind::roundabout}) {
    const SceneMap map = make_scenario_map(kind);
    SynthConfig cfg;
    cfg.kind = kind;
    long yield = 0, pass = 0;
    WindowStats stats;
    for (std::uint64_t e = 0; e < 200; ++e) {
      for (const auto& w : episode_windows(map, cfg, 500 + e, stats)) {
        if (w.graph.node_ids.size() < 2) continue;
        ++(w.yields() ? yield : pass);
      }
    }
    const double n = static_cast<double>(yield + pass);
    INFO(to_string(kind) << " yield " << yield << " pass " << pass);
    CHECK(yield / n >= 0.2);
    CHECK(pass / n >= 0.2);
  }
}

TEST_CASE("windows: labels agree with the recorded future") {
  const SceneMap map = make_intersection_map();
  const SynthConfig cfg;
  const Episode ep = synth_episode(map, cfg, 21);
  WindowStats stats;
  const auto windows = extract_windows(map, ep.tracks, 3, 10, 30, stats);
  REQUIRE(windows.size() > 100);
  CHECK(stats.windows == static_cast<long>(windows.size()));
  const TrackSet set(map, ep.tracks);
  for (const auto& w : windows) {
    CHECK(w.episode == 3);
    CHECK(w.past.size() == 11);
    CHECK(w.future.size() == 30);
    CHECK(w.past.back().frame == w.frame);
    CHECK(w.future.front().frame == w.frame + 1);
    REQUIRE(w.labels.goals.size() == w.graph.node_ids.size());
    CHECK(w.graph.node_ids[static_cast<std::size_t>(w.labels.inserted)] == w.label_node);
    CHECK(w.graph.node_ids[static_cast<std::size_t>(w.graph.reference)] == w.agent_id);
    CHECK(w.goal == doctest::Approx(set.s_at(w.agent_id, w.frame + 30) - set.s_at(w.agent_id, w.frame)).epsilon(1e-12));
    if (!w.yields()) {
      // Passing: the label names another recorded agent.
      CHECK(set.has(w.label_node));
    }
  }
}

TEST_CASE("split: deterministic and disjoint by track") {
  RunConfig cfg;
  cfg.episodes = 3;
  cfg.max_train_windows = 100000;
  cfg.max_test_windows = 100000;
  const PreparedData d = prepare_data(cfg);
  const DatasetSplit again = split_windows(d.windows, 0.72, 0.08, cfg.seed);
  const DatasetSplit other = split_windows(d.windows, 0.72, 0.08, cfg.seed + 9);
  CHECK(again.train == split_windows(d.windows, 0.72, 0.08, cfg.seed).train);
  CHECK(again.train != other.train);
  std::set<std::pair<int, long>> train_keys;
  std::set<int> train_agents;
  for (auto i : d.split.train) {
    train_keys.emplace(d.windows[i].agent_id, d.windows[i].frame);
    train_agents.insert(d.windows[i].agent_id);
  }
  for (auto i : d.split.test) {
    CHECK(train_keys.count({d.windows[i].agent_id, d.windows[i].frame}) == 0);
    CHECK(train_agents.count(d.windows[i].agent_id) == 0);
  }
  const double total = static_cast<double>(d.split.train.size() + d.split.validation.size() + d.split.test.size());
  CHECK(total == static_cast<double>(d.windows.size()));
  CHECK(d.split.test.size() / total == doctest::Approx(0.2).epsilon(0.5));

  const auto sub = subsample(d.split.train, 50, 4);
  CHECK(sub.size() == 50);
  CHECK(std::is_sorted(sub.begin(), sub.end()));
  CHECK(sub == subsample(d.split.train, 50, 4));
}

TEST_CASE("config: validation and round trip") {
  RunConfig cfg;
  cfg.seed = 42;
  cfg.synth.kind = ScenarioKind::roundabout;
  cfg.training.goal_source = GoalSource::generated;
  cfg.mekf.tau = 4;
  const fs::path path = scratch("run.json");
  save_run_config(cfg, path);
  ::unsetenv("HIERTRAJ_OUTPUT_DIR");
  const RunConfig back = load_run_config(path);
  CHECK(back.to_json() == cfg.to_json());
  ::setenv("HIERTRAJ_OUTPUT_DIR", "/tmp/elsewhere", 1);
  CHECK(load_run_config(path).output_dir == fs::path("/tmp/elsewhere"));
  ::unsetenv("HIERTRAJ_OUTPUT_DIR");

  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.dt = 0.2; });
  bad([](RunConfig& c) { c.horizon = 0; });
  bad([](RunConfig& c) { c.train_fraction = 0.7; });
  bad([](RunConfig& c) { c.map_path = "map.json"; });
  bad([](RunConfig& c) { c.synth.n_agents = 0; });
  CHECK_NOTHROW(RunConfig{}.validate());

  nlohmann::json j = cfg.to_json();
  j["history"] = -1;
  CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  write_text(scratch("broken.json"), "{ not json");
  CHECK_THROWS_AS(load_run_config(scratch("broken.json")), ConfigError);
}

TEST_CASE("train: a single window is memorized") {
  RunConfig cfg;
  cfg.episodes = 1;
  const PreparedData d = prepare_data(cfg);
  REQUIRE_FALSE(d.split.train.empty());
  const WindowRefs one{&d.windows[d.split.train.front()]};
  EdnConfig ecfg = cfg.edn;
  ecfg.hidden_dim = 16;
  ecfg.dense_dim = 16;
  ecfg.dropout = 0.0;
  EdnModel m = EdnModel::create(ecfg);
  m.init(3);
  TrainingConfig t;
  t.edn_epochs = 1500;
  t.patience = 1500;
  t.lr_decay = 0.998;
  std::vector<LossRecord> curve;
  const auto goals = window_goals(one, GoalSource::ground_truth, nullptr);
  train_edn(m, d.map, one, goals, {}, {}, t, 5, curve);
  CHECK(edn_dataset_loss(m, d.map, one, goals) < 1e-3);
}

TEST_CASE("train: seeded runs repeat exactly") {
  RunConfig cfg;
  cfg.episodes = 1;
  cfg.max_train_windows = 40;
  cfg.max_test_windows = 10;
  const PreparedData d = prepare_data(cfg);
  const auto train = d.refs(d.split.train), val = d.refs(d.split.validation);
  TrainingConfig t;
  t.sgn_epochs = 3;
  t.edn_epochs = 3;

  auto run = [&] {
    std::vector<LossRecord> curve;
    SgnConfig scfg = cfg.sgn;
    scfg.hidden_dim = scfg.embed_dim = scfg.latent_dim = 8;
    SgnModel s = SgnModel::create(scfg);
    s.init(1);
    train_sgn(s, train, val, t, 2, curve);
    EdnConfig ecfg = cfg.edn;
    ecfg.hidden_dim = ecfg.dense_dim = 8;
    EdnModel e = EdnModel::create(ecfg);
    e.init(1);
    const auto tg = window_goals(train, GoalSource::generated, &s), vg = window_goals(val, GoalSource::generated, &s);
    train_edn(e, d.map, train, tg, val, vg, t, 3, curve);
    return curve;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == 6);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].stage == b[i].stage);
    CHECK(a[i].train_loss == b[i].train_loss);
    CHECK(a[i].val_loss == b[i].val_loss);
  }
  const fs::path csv = scratch("loss.csv");
  write_loss_csv(a, csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "stage,epoch,train_loss,val_loss");
}

TEST_CASE("evaluate: playback and constant velocity score zero") {
  const SceneMap map = make_intersection_map();
  WindowSample w;
  w.agent_id = 1;
  w.path_id = map.paths().front().id();
  for (int k = 0; k <= 40; ++k) {
    TrackSample s;
    s.frame = k;
    s.timestamp_ms = 100 * k;
    s.x = 3.0 + 0.5 * k;
    s.y = -1.0 + 0.25 * k;
    s.v = std::hypot(5.0, 2.5);
    s.yaw = std::atan2(0.25, 0.5);
    (k <= 10 ? w.past : w.future).push_back(s);
  }
  w.frame = 10;
  EvalContext ctx;
  ctx.map = &map;
  const auto report = evaluate(ctx, {&w}, {"ground-truth", "cv"}, "line");
  for (const auto& m : report.methods) {
    CHECK(m.ade_long.mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.fde_long.mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.ade_short.mean == doctest::Approx(0.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(evaluate(ctx, {&w}, {"edn"}, "line"), ConfigError);
  CHECK_THROWS_AS(evaluate(ctx, {&w}, {"idm"}, "line"), ConfigError);
}

TEST_CASE("evaluate: metric definitions") {
  const std::vector<Tensor> truth{Tensor::Zero(30, 2), Tensor::Zero(30, 2)};
  std::vector<Tensor> pred{Tensor::Zero(30, 2), Tensor::Zero(30, 2)};
  for (Index k = 0; k < 30; ++k) {
    pred[0](k, 0) = 0.1 * static_cast<double>(k + 1);
    pred[1](k, 1) = 1.0;
  }
  const auto m = score_predictions("x", pred, truth, 3);
  CHECK(m.ade_long.mean == doctest::Approx((1.55 + 1.0) / 2).epsilon(1e-12));
  CHECK(m.ade_long.std == doctest::Approx(0.275).epsilon(1e-12));
  CHECK(m.fde_long.mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(m.ade_short.mean == doctest::Approx((0.2 + 1.0) / 2).epsilon(1e-12));
  CHECK(m.fde_short.mean == doctest::Approx((0.3 + 1.0) / 2).epsilon(1e-12));
  REQUIRE(m.per_step.size() == 30);
  double mean = 0.0;
  for (double v : m.per_step) mean += v / 30.0;
  CHECK(std::abs(mean - m.ade_long.mean) <= 1e-9);

  pred[1] = Tensor::Zero(29, 2);
  CHECK_THROWS_AS(score_predictions("x", pred, truth, 3), ShapeError);
  pred.pop_back();
  CHECK_THROWS_AS(score_predictions("x", pred, truth, 3), ShapeError);
}

TEST_CASE("evaluate: fixed suite matches the golden report and repeats bit-exactly") {
  const SceneMap map = make_intersection_map();
  SynthConfig cfg;
  cfg.n_agents = 8;
  const Episode ep = synth_episode(map, cfg, 5);
  WindowStats stats;
  const auto windows = extract_windows(map, ep.tracks, 0, 10, 30, stats);
  std::vector<std::size_t> idx(windows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  WindowRefs refs;
  for (auto i : subsample(idx, 40, 9)) refs.push_back(&windows[i]);

  SgnConfig scfg;
  scfg.hidden_dim = scfg.embed_dim = scfg.latent_dim = 8;
  SgnModel sgn = SgnModel::create(scfg);
  sgn.init(4);
  EdnConfig ecfg;
  ecfg.hidden_dim = ecfg.dense_dim = 8;
  EdnModel edn = EdnModel::create(ecfg);
  edn.init(4);
  std::vector<AgentTrack> tracks = ep.tracks;
  EvalContext ctx{&map, &tracks, &sgn, &edn, GoalSource::generated, {}, {}};
  const std::vector<std::string> methods{"ground-truth", "cv", "idm", "fsm-d", "fsm-t", "edn"};
  const EvalReport report = evaluate(ctx, refs, methods, "intersection");
  const nlohmann::json got = report.to_json();
  CHECK(evaluate(ctx, refs, methods, "intersection").to_json().dump() == got.dump());
  CHECK(report.method("ground-truth").ade_long.mean == 0.0);
  REQUIRE(report.insertion_accuracy.has_value());
  for (const auto& m : report.methods) {
    REQUIRE(m.per_step.size() == 30);
    double mean = 0.0;
    for (double v : m.per_step) mean += v;
    CHECK(std::abs(mean / 30.0 - m.ade_long.mean) <= 1e-9);
  }

  const fs::path golden = fs::path(HIERTRAJ_GOLDEN_DIR) / "eval_report.json";
  if (std::getenv("HIERTRAJ_UPDATE_GOLDEN") != nullptr) {
    std::ofstream(golden) << got.dump(2) << '\n';
  }
  std::ifstream in(golden);
  REQUIRE(in.good());
  check_json_close(got, nlohmann::json::parse(in), "report");

  const fs::path csv = scratch("per_step.csv");
  write_per_step_csv(report, csv);
  std::ifstream steps(csv);
  std::string line;
  std::getline(steps, line);
  CHECK(line == "step,ground-truth,cv,idm,fsm-d,fsm-t,edn");
  int rows = 0;
  while (std::getline(steps, line)) ++rows;
  CHECK(rows == 30);
}

TEST_CASE("online: goal providers") {
  const SceneMap map = make_intersection_map();
  SynthConfig cfg;
  cfg.n_agents = 4;
  std::vector<AgentTrack> tracks = synth_episode(map, cfg, 3).tracks;
  const TrackSet set(map, tracks);
  const auto truth = make_goal_provider(map, tracks, GoalSource::ground_truth, nullptr, 10, 30);
  const auto& t = tracks.front();
  const long f = t.first_frame() + 12;
  CHECK(truth(t, f) == goal_label(set, t.id, f, 30));

  CHECK_THROWS_AS(make_goal_provider(map, tracks, GoalSource::generated, nullptr, 10, 30), ConfigError);
  SgnConfig scfg;
  scfg.hidden_dim = scfg.embed_dim = scfg.latent_dim = 8;
  SgnModel sgn = SgnModel::create(scfg);
  sgn.init(2);
  const auto gen = make_goal_provider(map, tracks, GoalSource::generated, &sgn, 10, 30);
  // Too little history for a graph: speed times the horizon.
  CHECK(gen(t, t.first_frame() + 2) == doctest::Approx(t.at(t.first_frame() + 2).v * 3.0).epsilon(1e-12));
  const GraphIndex index(map, tracks);
  const auto graph = index.graph(t.id, f, 10);
  REQUIRE(graph.has_value());
  CHECK(gen(t, f) == sgn_predict(sgn, *graph).goal_mean[graph->reference]);
}

TEST_CASE("online: frozen comparison is neutral and adaptation changes predictions") {
  const SceneMap map = make_intersection_map();
  SynthConfig cfg;
  cfg.n_agents = 3;
  std::vector<AgentTrack> tracks = synth_episode(map, cfg, 9).tracks;
  EdnConfig ecfg;
  ecfg.hidden_dim = ecfg.dense_dim = 8;
  EdnModel edn = EdnModel::create(ecfg);
  edn.init(6);
  const auto goal = make_goal_provider(map, tracks, GoalSource::ground_truth, nullptr, 10, 30);
  MekfConfig mc;
  std::vector<AdaptationLogRow> log;
  const OnlineSummary s = compare_online(edn, map, tracks, goal, mc, 3, &log);
  CHECK(s.predictions > 0);
  CHECK(s.adaptations > 0);
  CHECK_FALSE(log.empty());
  CHECK(s.short_fixed > 0.0);
  CHECK(s.short_adapted != s.short_fixed);
  CHECK(std::isfinite(s.long_adapted));
  const auto j = s.to_json();
  CHECK(j.at("short_gain").get<double>() == doctest::Approx(s.short_gain()));
}
