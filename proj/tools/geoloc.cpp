// geoloc command-line front end.
//
//   geoloc simulate  --out DIR [--count K] [--set key=value ...]
//   geoloc dataset   --out DIR [--scenes DIR] [--pairs-per-scene K] [--n-max N]
//   geoloc train     --out DIR --dataset DIR [--resume CKPT] [--epochs E] [--lambda L]
//   geoloc track     --out DIR --scene FILE --checkpoint CKPT [--min-instances K]
//   geoloc evaluate  --out DIR --gt FILE --hyp FILE [--geolocation FILE --scene FILE] [criterion flags]
//   geoloc plot      --out DIR --report FILE
//
// Global flags: --seed, --config <file>, --out <dir>.
// Exit codes: 0 ok, 2 usage/config, 3 data, 4 internal.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geoloc/geoloc.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using namespace geoloc;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::vector<std::string> argv;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& p, ErrorKind on_error = ErrorKind::Parse) {
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    fail(on_error, p.string() + ": " + e.what());
  }
}

json config_file(const Globals& g) {
  if (g.config.empty()) return json::object();
  if (!fs::exists(g.config)) throw UsageError("config file not found: " + g.config);
  return read_json(g.config, ErrorKind::Config);
}

/// "key=value" pairs; values parse as JSON, falling back to a string.
json overrides(const std::vector<std::string>& sets) {
  json j = json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    try {
      j[key] = json::parse(value);
    } catch (const json::parse_error&) {
      j[key] = value;
    }
  }
  return j;
}

fs::path out_dir(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  fs::create_directories(g.out);
  return g.out;
}

class Manifest {
 public:
  Manifest(std::string command, const Globals& g) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = kToolVersion;
    doc_["argv"] = g.argv;
    doc_["seed"] = g.seed ? json(*g.seed) : json(nullptr);
    doc_["config"] = json::object();
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }

  void config(const json& c) { doc_["config"] = c; }
  void input(const fs::path& p) { doc_["inputs"].push_back(p.string()); }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  void note(const std::string& key, const json& v) { doc_[key] = v; }

  void write(const fs::path& dir) {
    doc_["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file_atomically(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  std::chrono::steady_clock::time_point start_;
  ojson doc_;
};

SimConfig sim_config(const Globals& g, const std::vector<std::string>& sets) {
  SimConfig c = sim_config_from_json(config_file(g));
  c = sim_config_from_json(overrides(sets), c);
  if (g.seed) c.seed = *g.seed;
  return c;
}

std::string scene_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03d.json", k);
  return buf;
}

std::vector<fs::path> scene_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::Io, "no scene files in " + dir.string());
  return files;
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  int count = 1;
  std::vector<std::string> sets;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  const SimConfig c = sim_config(g, a.sets);
  if (a.count < 1) throw UsageError("--count must be >= 1");
  const fs::path dir = out_dir(g);
  Manifest man("simulate", g);
  man.config(to_json(c));
  man.note("count", a.count);
  const auto scenes = generate_scenes(c, a.count);
  for (int k = 0; k < a.count; ++k) {
    const fs::path p = dir / scene_name(k);
    save_scene(scenes[static_cast<std::size_t>(k)], p);
    man.output(p);
  }
  man.write(dir);
  std::cout << "wrote " << a.count << " scene(s) to " << dir.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- dataset

// dataset.json: {"format": "geoloc-dataset", "version": 1, "n_max", "scenes": [relative paths],
//                "pairs": [[scene, frame_a, frame_b, separation], ...]}

struct DatasetArgs {
  std::string scenes;
  int count = 20;
  int pairs_per_scene = 4;
  int n_max = kDefaultMaxSeparation;
  int capacity = kDefaultCapacity;
  std::vector<std::string> sets;
};

int cmd_dataset(const Globals& g, const DatasetArgs& a) {
  const fs::path dir = out_dir(g);
  Manifest man("dataset", g);
  std::vector<SceneSequence> scenes;
  if (!a.scenes.empty()) {
    for (const auto& p : scene_files(a.scenes)) {
      scenes.push_back(load_scene(p, a.capacity));
      man.input(p);
    }
  } else {
    const SimConfig c = sim_config(g, a.sets);
    man.config(to_json(c));
    scenes = generate_scenes(c, a.count);
  }
  if (a.pairs_per_scene < 1) throw UsageError("--pairs-per-scene must be >= 1");
  if (a.n_max < 1) throw UsageError("--n-max must be >= 1");
  const std::uint64_t seed = g.seed.value_or(0);
  const auto entries = sample_dataset(scenes, a.n_max, a.pairs_per_scene, seed, a.capacity);

  json doc{{"format", "geoloc-dataset"}, {"version", 1}, {"n_max", a.n_max}, {"capacity", a.capacity}, {"seed", seed}};
  doc["scenes"] = json::array();
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const std::string rel = "scenes/" + scene_name(static_cast<int>(k));
    save_scene(scenes[k], dir / rel);
    doc["scenes"].push_back(rel);
  }
  doc["pairs"] = json::array();
  for (const auto& e : entries)
    doc["pairs"].push_back({e.scene, e.pair.frame_a, e.pair.frame_b, e.pair.separation});
  write_file_atomically(dir / "dataset.json", doc.dump(1) + "\n");
  man.output(dir / "dataset.json");
  man.note("pairs", entries.size());
  man.write(dir);
  std::cout << "wrote " << entries.size() << " pairs over " << scenes.size() << " scene(s) to " << dir.string()
            << "\n";
  return 0;
}

std::vector<MatchingSample> load_dataset(const fs::path& dir, const MatcherConfig& mc) {
  if (!fs::exists(dir / "dataset.json")) throw UsageError("no dataset.json in " + dir.string());
  const json doc = read_json(dir / "dataset.json");
  std::vector<MatchingSample> out;
  try {
    if (doc.at("format") != "geoloc-dataset" || doc.at("version") != 1)
      fail(ErrorKind::Schema, "dataset.json: not a version 1 dataset");
    std::vector<SceneSequence> scenes;
    for (const auto& rel : doc.at("scenes")) scenes.push_back(load_scene(dir / rel.get<std::string>(), mc.capacity));
    for (const auto& p : doc.at("pairs")) {
      const auto s = p.at(0).get<std::size_t>();
      if (s >= scenes.size()) fail(ErrorKind::Schema, "dataset.json: pair refers to a missing scene");
      TrainingPair tp;
      tp.frame_a = p.at(1).get<int>();
      tp.frame_b = p.at(2).get<int>();
      tp.separation = p.at(3).get<int>();
      const int len = static_cast<int>(scenes[s].frames.size());
      if (tp.frame_a < 0 || tp.frame_b >= len || tp.frame_a >= tp.frame_b)
        fail(ErrorKind::Schema, "dataset.json: pair frame indices out of range");
      tp.match = build_match_matrix(scenes[s].frames[static_cast<std::size_t>(tp.frame_a)],
                                    scenes[s].frames[static_cast<std::size_t>(tp.frame_b)], mc.capacity);
      out.push_back(make_matching_sample(scenes[s], tp, mc.depth_scale));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("dataset.json: ") + e.what());
  }
  if (out.empty()) fail(ErrorKind::Schema, "dataset.json has no pairs");
  return out;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string dataset;
  std::string resume;
  std::optional<int> epochs;
  std::optional<double> lambda;
  std::optional<double> learning_rate;
  std::string pose_source;
  std::string softmax_axis;
  std::string score_space;
};

MatcherModel load_checkpoint(const fs::path& p) {
  if (!fs::exists(p)) throw UsageError("checkpoint not found: " + p.string());
  return checkpoint_from_json(read_json(p, ErrorKind::Schema));
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  json patch = json::object();
  if (a.lambda) patch["lambda"] = *a.lambda;
  if (a.learning_rate) patch["learning_rate"] = *a.learning_rate;
  if (a.epochs) patch["epochs"] = *a.epochs;
  if (!a.pose_source.empty()) patch["pose_source"] = a.pose_source;
  if (!a.softmax_axis.empty()) patch["softmax_axis"] = a.softmax_axis;
  if (!a.score_space.empty()) patch["score_space"] = a.score_space;

  MatcherModel model;
  Manifest man("train", g);
  if (!a.resume.empty()) {
    model = load_checkpoint(a.resume);
    // Only the schedule and loss weights may change on resume.
    for (const auto& [key, value] : patch.items())
      if (key != "epochs" && key != "lambda" && key != "learning_rate")
        throw UsageError("--" + key + " cannot change when resuming");
    model.config = matcher_config_from_json(patch, model.config);
    man.input(a.resume);
  } else {
    MatcherConfig mc = matcher_config_from_json(config_file(g));
    mc = matcher_config_from_json(patch, mc);
    if (g.seed) mc.seed = *g.seed;
    model = make_matcher(mc);
  }
  const fs::path dir = out_dir(g);
  const auto data = load_dataset(a.dataset, model.config);
  man.input(fs::path(a.dataset) / "dataset.json");
  man.config(to_json(model.config));

  const int remaining = std::max(0, model.config.epochs - model.epochs_completed);
  const int first = model.epochs_completed;
  const auto history = train_matcher(model, data, remaining, [](const EpochMetrics& e) {
    std::cout << "epoch " << e.epoch << " loss_affinity " << e.loss_affinity << " pose " << e.pose_loss
              << " accuracy " << e.accuracy << "\n";
  });

  const fs::path ckpt = dir / "checkpoint.json", metrics = dir / "metrics.csv";
  write_file_atomically(ckpt, checkpoint_to_json(model).dump() + "\n");
  std::string csv = metrics_csv(history);
  if (first > 0 && fs::exists(metrics)) {
    // Continue the existing curve: drop our header, keep earlier rows.
    std::string prior = read_text(metrics);
    csv = prior + csv.substr(csv.find('\n') + 1);
  }
  write_file_atomically(metrics, csv);
  man.output(ckpt);
  man.output(metrics);
  man.note("epochs_run", remaining);
  man.note("epochs_completed", model.epochs_completed);
  man.note("pairs", data.size());
  man.write(dir);
  return 0;
}

// --------------------------------------------------------------------- track

struct TrackArgs {
  std::string scene;
  std::string checkpoint;
  int min_instances = 2;
  int instance_cap = 10;
  std::string aggregation = "median";
  std::optional<double> min_similarity;
};

int cmd_track(const Globals& g, const TrackArgs& a) {
  const MatcherModel model = load_checkpoint(a.checkpoint);
  if (a.min_instances < 1) throw UsageError("--min-instances must be >= 1");
  if (a.instance_cap < 1) throw UsageError("--instance-cap must be >= 1");
  TrackerConfig tc;
  tc.min_instances = a.min_instances;
  tc.instance_cap = a.instance_cap;
  tc.aggregation = aggregation_from_string(a.aggregation);
  tc.min_similarity = a.min_similarity;
  const SceneSequence scene = load_scene(a.scene, model.config.capacity);
  const fs::path dir = out_dir(g);

  Manifest man("track", g);
  man.input(a.scene);
  man.input(a.checkpoint);
  man.config({{"min_instances", tc.min_instances},
              {"instance_cap", tc.instance_cap},
              {"aggregation", to_string(tc.aggregation)},
              {"min_similarity", tc.min_similarity ? json(*tc.min_similarity) : json(nullptr)}});

  const ModelMatcher matcher(model);
  const TrackingResult r = track_scene(scene, matcher, tc);
  const MotFiles files = export_mot(scene, r.hypotheses, dir);
  write_file_atomically(dir / "geolocation.json", geolocation_json(r.geolocations).dump(2) + "\n");
  man.output(files.hypotheses);
  man.output(files.ground_truth);
  man.output(dir / "geolocation.json");
  man.note("tracks", r.state.tracks.size());
  man.note("geolocations", r.geolocations.size());
  man.write(dir);
  std::cout << r.geolocations.size() << " geolocated object(s), " << r.state.tracks.size() << " track(s)\n";
  return 0;
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  std::string gt;
  std::string hyp;
  double iou = 0.5;
  std::string geolocation;
  std::string scene;
  std::string criterion = "euclidean";
  double radius = 2.0;
  std::string semi_axes = "0.4,0.39,3.84";
  double limit = 3.0;
  std::optional<double> rotation_gate;
  double match_gate = 10.0;
};

Vec3 parse_axes(const std::string& s) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("--semi-axes expects three comma-separated numbers, got '" + s + "'");
    }
  }
  if (v.size() != 3) throw UsageError("--semi-axes expects three comma-separated numbers, got '" + s + "'");
  return {v[0], v[1], v[2]};
}

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  GeoCriterion crit;
  if (a.criterion == "euclidean") {
    crit = GeoCriterion::euclidean(a.radius);
  } else if (a.criterion == "mahalanobis") {
    crit = GeoCriterion::mahalanobis(a.limit, parse_axes(a.semi_axes));
  } else {
    throw UsageError("--criterion must be euclidean or mahalanobis");
  }
  crit.rotation_gate = a.rotation_gate;
  if (a.gt.empty() != a.hyp.empty()) throw UsageError("--gt and --hyp go together");
  if (a.geolocation.empty() != a.scene.empty()) throw UsageError("--geolocation and --scene go together");
  if (a.gt.empty() && a.geolocation.empty()) throw UsageError("nothing to evaluate: give --gt/--hyp or --geolocation/--scene");
  const fs::path dir = out_dir(g);

  Manifest man("evaluate", g);
  ojson cfg{{"iou", a.iou}, {"criterion", a.criterion}};
  if (crit.kind == GeoCriterion::Kind::Euclidean) {
    cfg["radius"] = crit.radius;
  } else {
    cfg["limit"] = crit.limit;
    cfg["semi_axes"] = {crit.semi_axes.x(), crit.semi_axes.y(), crit.semi_axes.z()};
  }
  cfg["rotation_gate"] = a.rotation_gate ? json(*a.rotation_gate) : json(nullptr);
  cfg["match_gate"] = a.match_gate;
  man.config(cfg);

  ojson report;
  report["criterion"] = cfg;
  std::vector<std::pair<std::string, double>> rows;
  if (!a.gt.empty()) {
    const MotReport m = mot_metrics(import_mot(a.gt), import_mot(a.hyp), a.iou);
    report["mot"] = to_json(m);
    for (const auto& [k, v] : report["mot"].items()) rows.emplace_back("mot." + k, v.get<double>());
    man.input(a.gt);
    man.input(a.hyp);
  }
  std::string pr_csv = "threshold,precision,recall\n";
  if (!a.geolocation.empty()) {
    const SceneSequence scene = load_scene(a.scene);
    const auto geo = geolocations_from_json(read_json(a.geolocation));
    std::vector<ScoredPrediction> preds;
    for (const auto& x : geo) preds.push_back({x.pose, static_cast<double>(x.instances)});
    std::vector<Pose5D> gts;
    for (const auto& o : scene_objects(scene)) gts.push_back(o.pose);
    // Errors are reported along the reference camera's axes (z = depth).
    const Mat3 axes = scene.reference_ego().matrix().transpose();
    const auto pr = pr_curve(preds, gts, crit, axes);
    ojson jpr = ojson::array();
    for (const auto& p : pr) {
      jpr.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
      pr_csv += format_number(p.threshold) + ',' + format_number(p.precision) + ',' + format_number(p.recall) + '\n';
    }
    ojson geo_report{{"predictions", preds.size()}, {"ground_truth", gts.size()}, {"pr", jpr}};
    geo_report["precision"] = pr.empty() ? 0.0 : pr.back().precision;
    geo_report["recall"] = pr.empty() ? 0.0 : pr.back().recall;
    rows.emplace_back("geo.precision", geo_report["precision"].get<double>());
    rows.emplace_back("geo.recall", geo_report["recall"].get<double>());
    std::vector<std::pair<Vec3, Vec3>> pairs;
    for (const auto& m : match_geolocations(preds, gts, a.match_gate))
      pairs.emplace_back(preds[m.prediction].pose.T, gts[m.ground_truth].T);
    if (!pairs.empty()) {
      const auto te = translation_error_stats(pairs, axes);
      geo_report["translation_error"] = to_json(te);
      for (auto [name, s] : {std::pair{"x", te.x}, {"y", te.y}, {"z", te.z}}) {
        rows.emplace_back(std::string("te.") + name + ".mean", s.mean);
        rows.emplace_back(std::string("te.") + name + ".median", s.median);
        rows.emplace_back(std::string("te.") + name + ".std", s.stddev);
      }
    }
    report["geolocation"] = geo_report;
    man.input(a.geolocation);
    man.input(a.scene);
    write_file_atomically(dir / "pr.csv", pr_csv);
    man.output(dir / "pr.csv");
  }
  std::string csv = "metric,value\n";
  for (const auto& [k, v] : rows) csv += k + ',' + format_number(v) + '\n';
  write_file_atomically(dir / "report.json", report.dump(2) + "\n");
  write_file_atomically(dir / "report.csv", csv);
  man.output(dir / "report.json");
  man.output(dir / "report.csv");
  man.write(dir);
  if (report.contains("mot")) std::cout << "MOTA " << report["mot"]["MOTA"].get<double>() << "\n";
  if (report.contains("geolocation"))
    std::cout << "recall " << report["geolocation"]["recall"].get<double>() << "\n";
  return 0;
}

// ---------------------------------------------------------------------- plot

struct PlotArgs {
  std::string report;
  std::string title = "precision / recall";
};

int cmd_plot(const Globals& g, const PlotArgs& a) {
  if (!fs::exists(a.report)) throw UsageError("report not found: " + a.report);
  const json doc = read_json(a.report);
  std::vector<PrPoint> points;
  try {
    const json& pr = doc.contains("geolocation") ? doc.at("geolocation").at("pr") : doc.at("pr");
    for (const auto& p : pr)
      points.push_back({p.at("precision").get<double>(), p.at("recall").get<double>(), p.at("threshold").get<double>()});
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, a.report + ": no precision/recall points (" + e.what() + ")");
  }
  const fs::path dir = out_dir(g);
  Manifest man("plot", g);
  man.input(a.report);
  man.config({{"title", a.title}});
  std::string csv = "threshold,precision,recall\n";
  for (const auto& p : points)
    csv += format_number(p.threshold) + ',' + format_number(p.precision) + ',' + format_number(p.recall) + '\n';
  write_file_atomically(dir / "pr.svg", pr_curve_svg(points, a.title));
  write_file_atomically(dir / "pr_points.csv", csv);
  man.output(dir / "pr.svg");
  man.output(dir / "pr_points.csv");
  man.write(dir);
  return 0;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config: return 2;
    case ErrorKind::NonFiniteLoss: return 4;
    default: return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Static object geolocalization: simulate, train, track, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.argv.assign(argv, argv + argc);
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--config", g.config, "JSON config file for the command");
  app.add_option("--out", g.out, "output directory");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "generate synthetic scenes");
  c_sim->add_option("--count", sim.count, "number of scenes (seeds seed, seed+1, ...)");
  c_sim->add_option("--set", sim.sets, "simulator config override key=value");

  DatasetArgs ds;
  auto* c_ds = app.add_subcommand("dataset", "sample frame pairs into a matching dataset");
  c_ds->add_option("--scenes", ds.scenes, "directory of scene files (default: simulate)");
  c_ds->add_option("--count", ds.count, "scenes to simulate when --scenes is absent");
  c_ds->add_option("--pairs-per-scene", ds.pairs_per_scene, "pairs sampled per scene");
  c_ds->add_option("--n-max", ds.n_max, "largest frame separation");
  c_ds->add_option("--capacity", ds.capacity, "max detections per frame");
  c_ds->add_option("--set", ds.sets, "simulator config override key=value");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train the matcher");
  c_tr->add_option("--dataset", tr.dataset, "dataset directory")->required();
  c_tr->add_option("--resume", tr.resume, "checkpoint to continue from");
  c_tr->add_option("--epochs", tr.epochs, "total epochs");
  c_tr->add_option("--lambda", tr.lambda, "pose loss weight (0 disables the pose head loss)");
  c_tr->add_option("--learning-rate", tr.learning_rate, "initial learning rate");
  c_tr->add_option("--pose-source", tr.pose_source, "observation or head");
  c_tr->add_option("--softmax-axis", tr.softmax_axis, "candidates or literal");
  c_tr->add_option("--score-space", tr.score_space, "logit or probability");

  TrackArgs tk;
  auto* c_tk = app.add_subcommand("track", "track one scene and geolocate its objects");
  c_tk->add_option("--scene", tk.scene, "scene file")->required();
  c_tk->add_option("--checkpoint", tk.checkpoint, "matcher checkpoint")->required();
  c_tk->add_option("--min-instances", tk.min_instances, "drop tracks observed fewer times");
  c_tk->add_option("--instance-cap", tk.instance_cap, "instances kept per track");
  c_tk->add_option("--aggregation", tk.aggregation, "mean, median or inverse-depth");
  c_tk->add_option("--min-similarity", tk.min_similarity, "extra gate on detection scores");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "tracking and geolocalization metrics");
  c_ev->add_option("--gt", ev.gt, "ground-truth MOT file");
  c_ev->add_option("--hyp", ev.hyp, "hypothesis MOT file");
  c_ev->add_option("--iou", ev.iou, "IoU threshold for CLEAR-MOT");
  c_ev->add_option("--geolocation", ev.geolocation, "geolocation.json from track");
  c_ev->add_option("--scene", ev.scene, "scene file holding the ground-truth objects");
  c_ev->add_option("--criterion", ev.criterion, "euclidean or mahalanobis");
  c_ev->add_option("--radius", ev.radius, "euclidean radius in metres");
  c_ev->add_option("--semi-axes", ev.semi_axes, "mahalanobis semi-axes x,y,z in metres");
  c_ev->add_option("--limit", ev.limit, "mahalanobis limit");
  c_ev->add_option("--rotation-gate", ev.rotation_gate, "max orientation error in degrees");
  c_ev->add_option("--match-gate", ev.match_gate, "association radius for translation errors");

  PlotArgs pl;
  auto* c_pl = app.add_subcommand("plot", "render a precision/recall curve as SVG");
  c_pl->add_option("--report", pl.report, "report.json from evaluate")->required();
  c_pl->add_option("--title", pl.title, "plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (c_sim->parsed()) return cmd_simulate(g, sim);
    if (c_ds->parsed()) return cmd_dataset(g, ds);
    if (c_tr->parsed()) return cmd_train(g, tr);
    if (c_tk->parsed()) return cmd_track(g, tk);
    if (c_ev->parsed()) return cmd_evaluate(g, ev);
    if (c_pl->parsed()) return cmd_plot(g, pl);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
