// Command-line front end: synthetic data, labeling, training, rescoring, evaluation, benchmarks.
#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gace/bench.hpp"
#include "gace/dataset.hpp"
#include "gace/eval.hpp"
#include "gace/experiment.hpp"
#include "gace/model_io.hpp"
#include "gace/parallel.hpp"
#include "gace/report.hpp"
#include "gace/supervision.hpp"
#include "gace/synth.hpp"
#include "gace/trainer.hpp"

namespace fs = std::filesystem;
using namespace gace;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

/// A bad flag value detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Per-class IoU thresholds from "0.7,0.5,0.5"; empty text selects the defaults.
IouThresholds parse_thresholds(const std::string& text, std::size_t class_count) {
  if (text.empty()) return IouThresholds::defaults(class_count);
  IouThresholds t;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0.0 && v <= 1.0)) throw std::invalid_argument(item);
      t.per_class.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("IoU threshold '" + item + "' is not a number in (0, 1]");
    }
  }
  if (t.per_class.size() != class_count) {
    throw UsageError("expected " + std::to_string(class_count) + " IoU thresholds, got " +
                     std::to_string(t.per_class.size()));
  }
  return t;
}

std::vector<double> parse_edges(const std::string& text) {
  std::vector<double> edges;
  for (const auto& item : split_list(text)) {
    try {
      edges.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("bin edge '" + item + "' is not a number");
    }
  }
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw UsageError("bin edges need at least two strictly increasing values");
  }
  return edges;
}

/// Every option of the chosen subcommand with defaults filled in, as one JSON line on stderr.
void log_resolved_config(const CLI::App& sub) {
  nlohmann::ordered_json options = nlohmann::ordered_json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    std::string key = opt->get_name(false, true);
    key.erase(0, key.find_first_not_of('-'));
    if (opt->get_expected_max() == 0) {
      options[key] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      options[key] = results.size() == 1 ? nlohmann::ordered_json(results.front())
                                         : nlohmann::ordered_json(results);
    } else {
      options[key] = opt->get_default_str();
    }
  }
  options["threads"] = thread_count();
  nlohmann::ordered_json j;
  j["command"] = sub.get_name();
  j["options"] = std::move(options);
  std::cerr << "gace: resolved config " << j.dump() << std::endl;
}

/// Loads every frame of a dataset directory in parallel, in manifest order.
std::vector<Frame> load_frames(const fs::path& dir, const DatasetManifest& manifest,
                               const FrameParts& parts) {
  std::vector<Frame> frames(manifest.frames.size());
  parallel_for(frames.size(), [&](std::size_t i) { frames[i] = read_frame(dir, manifest, i, parts); });
  return frames;
}

std::string hex_digest(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::ordered_json scene_json(const SceneConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["frames"] = c.frames;
  j["mean_objects"] = c.mean_objects;
  j["long_vehicle_fraction"] = c.long_vehicle_fraction;
  j["fov_radius"] = c.fov_radius;
  j["min_range"] = c.min_range;
  j["ground_z"] = c.ground_z;
  j["occlusion_rate"] = c.occlusion_rate;
  j["grouping_rate"] = c.grouping_rate;
  j["ground_clutter"] = c.ground_clutter;
  j["mean_clutter"] = c.mean_clutter;
  j["ghost_rate"] = c.ghost_rate;
  j["point_density"] = c.point_density;
  j["ground_points"] = c.ground_points;
  j["channels"] = c.channels;
  return j;
}

// ---------------------------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t frames = 100;
  std::string out;
  std::string error_model = "A";
  std::string preset;
  std::string split = "train";
  std::uint32_t channels = 5;
  bool no_ground_clutter = false;
};

int run_synth(const SynthOptions& o) {
  SceneConfig scene;
  DetectorErrorModel detector;
  try {
    detector = error_model_by_name(o.error_model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.preset.empty()) {
    scene.seed = o.seed;
    scene.frames = o.frames;
  } else if (lower(o.preset) == "bench-v1") {
    const auto preset = bench_v1(o.seed);
    if (o.split == "train") {
      scene = preset.train;
    } else if (o.split == "eval") {
      scene = preset.eval;
    } else {
      throw UsageError("--split must be train or eval");
    }
  } else {
    throw UsageError("unknown preset '" + o.preset + "' (known: bench-v1)");
  }
  scene.channels = o.channels;
  if (o.no_ground_clutter) scene.ground_clutter = false;
  try {
    scene.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  nlohmann::ordered_json config;
  config["scene"] = scene_json(scene);
  config["error_model"] = detector.name;
  DatasetManifest manifest;
  manifest.channels = scene.channels;
  manifest.class_names = synth_class_names();
  manifest.seed = scene.seed;
  manifest.config = config.dump();
  manifest.digest = hex_digest(manifest.config);
  manifest.frames.resize(scene.frames);

  const fs::path out(o.out);
  fs::create_directories(out);
  // Each frame owns its files, so writers never share a path.
  parallel_for(scene.frames, [&](std::size_t i) {
    const Frame f = generate_frame(scene, detector, i);
    write_frame(out, manifest, f);
    manifest.frames[i] = {f.frame_id, f.points.size()};
  });
  write_manifest(out, manifest);
  std::cerr << "gace: wrote " << scene.frames << " frames to " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// label

struct LabelOptions {
  std::string data;
  std::string thresholds;
};

int run_label(const LabelOptions& o) {
  const fs::path dir(o.data);
  const auto manifest = read_manifest(dir);
  const auto thresholds = parse_thresholds(o.thresholds, manifest.class_names.size());
  FrameParts parts;
  parts.points = false;
  std::size_t positives = 0, total = 0;
  std::vector<std::size_t> tp_count(manifest.frames.size(), 0), det_count(manifest.frames.size(), 0);
  parallel_for(manifest.frames.size(), [&](std::size_t i) {
    const Frame f = read_frame(dir, manifest, i, parts);
    if (!f.ground_truth) throw DatasetError("frame '" + f.frame_id + "' has no ground truth");
    const auto labeled = assign_labels(f.detections, *f.ground_truth, thresholds);
    std::ostringstream text;
    text << std::setprecision(9);
    for (const auto& l : labeled) {
      text << static_cast<int>(l.u) << ' ' << l.v << '\n';
      tp_count[i] += l.u;
    }
    det_count[i] = labeled.size();
    const fs::path file = dir / "targets" / (f.frame_id + ".txt");
    fs::create_directories(file.parent_path());
    std::ofstream(file, std::ios::binary | std::ios::trunc) << text.str();
  });
  for (std::size_t i = 0; i < tp_count.size(); ++i) {
    positives += tp_count[i];
    total += det_count[i];
  }
  std::cout << "labeled " << total << " detections in " << manifest.frames.size() << " frames, "
            << positives << " true positives\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string train_dir;
  std::string out_model;
  std::size_t epochs = 5;
  double lr = 0.001;
  double lambda_iou = 0.5;
  double radius = 40.0;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  std::string ablate;
  bool no_context = false;
  bool no_elongation = false;
  std::string thresholds;
  std::string log;
};

/// Applies a comma list of disabled groups: box, num_points, viewing_angle, statistics, context.
void apply_ablation(const std::string& list, TrainConfig& cfg) {
  for (const auto& raw : split_list(list)) {
    std::string g = lower(raw);
    std::replace(g.begin(), g.end(), '-', '_');
    if (g == "box") {
      cfg.groups.box = false;
    } else if (g == "num_points") {
      cfg.groups.num_points = false;
    } else if (g == "viewing_angle") {
      cfg.groups.viewing_angle = false;
    } else if (g == "statistics") {
      cfg.groups.statistics = false;
    } else if (g == "context") {
      cfg.use_context = false;
    } else {
      throw UsageError("unknown feature group '" + raw +
                       "' (known: box, num_points, viewing_angle, statistics, context)");
    }
  }
}

int run_train(const TrainOptions& o) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.loss.lambda_iou = o.lambda_iou;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  cfg.norm.radius = o.radius;
  cfg.norm.use_elongation = !o.no_elongation;
  cfg.use_context = !o.no_context;
  apply_ablation(o.ablate, cfg);

  const fs::path dir(o.train_dir);
  const auto manifest = read_manifest(dir);
  cfg.norm.class_count = static_cast<std::uint32_t>(manifest.class_names.size());
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (manifest.channels < 5 && cfg.norm.use_elongation) {
    throw DatasetError("dataset has " + std::to_string(manifest.channels) +
                       " channels; elongation statistics need 5 (pass --no-elongation)");
  }
  const auto thresholds = parse_thresholds(o.thresholds, manifest.class_names.size());
  const FrameStore store = build_training_set(
      manifest.frames.size(), [&](std::size_t i) { return read_frame(dir, manifest, i); },
      cfg.norm, thresholds);
  std::cerr << "gace: " << store.frames.size() << " frames, " << store.sample_count()
            << " detections\n";

  std::ofstream log_file;
  if (!o.log.empty()) {
    log_file.open(o.log, std::ios::trunc);
    if (!log_file) throw DatasetError("cannot write log " + o.log);
    log_file << "epoch\ttotal\tfocal\tiou_l1\tseconds\n";
  }
  const GaceModel model = train(store, cfg, [&](const EpochStats& s) {
    write_epoch_line(std::cerr, s);
    if (log_file) write_epoch_line(log_file, s);
  });
  save_model(model, o.out_model);
  std::cerr << "gace: model written to " << o.out_model << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// rescore

struct RescoreOptions {
  std::string model;
  std::string frames;
  std::string out;
};

void link_or_copy(const fs::path& from, const fs::path& to) {
  fs::create_directories(to.parent_path());
  std::error_code ec;
  fs::remove(to, ec);
  fs::create_hard_link(from, to, ec);
  if (ec) fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

int run_rescore(const RescoreOptions& o) {
  const GaceModel model = load_model(o.model);
  const Rescorer rescorer(model);
  const fs::path in(o.frames), out(o.out);
  if (fs::exists(out) && fs::equivalent(in, out)) {
    throw UsageError("--out must differ from --frames");
  }
  const auto manifest = read_manifest(in);
  if (manifest.class_names.size() != model.norm.class_count) {
    throw DatasetError("model expects " + std::to_string(model.norm.class_count) +
                       " classes, dataset has " + std::to_string(manifest.class_names.size()));
  }
  fs::create_directories(out);
  FrameParts parts;
  parts.ground_truth = false;
  parallel_for(manifest.frames.size(), [&](std::size_t i) {
    Frame f = read_frame(in, manifest, i, parts);
    std::vector<double> scores;
    try {
      scores = rescorer.rescore(f);
    } catch (const std::invalid_argument& e) {
      throw DatasetError("frame '" + f.frame_id + "': " + e.what());
    }
    for (std::size_t k = 0; k < scores.size(); ++k) f.detections[k].score = scores[k];
    save_detections(detections_path(out, f.frame_id), f.detections, manifest.class_names);
    link_or_copy(points_path(in, f.frame_id), points_path(out, f.frame_id));
    const auto labels = labels_path(in, f.frame_id);
    if (fs::exists(labels)) {
      fs::create_directories(labels_path(out, f.frame_id).parent_path());
      fs::copy_file(labels, labels_path(out, f.frame_id), fs::copy_options::overwrite_existing);
    }
  });
  write_manifest(out, manifest);
  std::cerr << "gace: rescored " << manifest.frames.size() << " frames into " << out.string()
            << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// eval / oracle

struct EvalOptions {
  std::string pred;
  std::string gt;
  std::string iou_thr;
  bool r40 = false;
  std::string report;
  std::string curves_out;
  std::string svg;
  std::size_t min_points = 0;
  std::optional<std::size_t> max_points;
  std::string conditional_out;
  std::string length_edges = "0,2,4,6,8,10,13,16,25";
  std::string angle_edges = "-3.1416,-2.3562,-1.5708,-0.7854,0,0.7854,1.5708,2.3562,3.1416";
  double score_threshold = 0.5;
};

/// Detections from `pred`, ground truth (and points when filtering) from `gt`, joined by frame id.
std::vector<EvalFrame> load_eval_frames(const fs::path& pred, const fs::path& gt,
                                        const DifficultyFilter& filter,
                                        std::vector<std::string>& class_names) {
  const auto pm = read_manifest(pred);
  const auto gm = read_manifest(gt);
  if (pm.class_names != gm.class_names) {
    throw DatasetError("prediction and ground-truth manifests list different classes");
  }
  class_names = gm.class_names;
  std::map<std::string, std::size_t> pred_index;
  for (std::size_t i = 0; i < pm.frames.size(); ++i) pred_index[pm.frames[i].id] = i;
  for (const auto& f : pm.frames) {
    bool found = false;
    for (const auto& g : gm.frames) found = found || g.id == f.id;
    if (!found) throw DatasetError("predicted frame '" + f.id + "' is absent from the ground truth");
  }
  std::vector<Frame> frames(gm.frames.size());
  parallel_for(frames.size(), [&](std::size_t i) {
    FrameParts gparts;
    gparts.points = filter.active();
    gparts.detections = false;
    Frame f = read_frame(gt, gm, i, gparts);
    if (!f.ground_truth) throw DatasetError("frame '" + f.frame_id + "' has no ground truth");
    const auto it = pred_index.find(f.frame_id);
    if (it != pred_index.end()) {
      FrameParts pparts;
      pparts.points = false;
      pparts.ground_truth = false;
      f.detections = read_frame(pred, pm, it->second, pparts).detections;
    }
    frames[i] = std::move(f);
  });
  return make_eval_frames(frames, filter);
}

int run_eval(const EvalOptions& o) {
  DifficultyFilter filter{o.min_points, o.max_points};
  if (filter.max_points && *filter.max_points < filter.min_points) {
    throw UsageError("--max-points must not be below --min-points");
  }
  std::vector<double> length_edges, angle_edges;
  if (!o.conditional_out.empty()) {
    length_edges = parse_edges(o.length_edges);
    angle_edges = parse_edges(o.angle_edges);
  }
  std::vector<std::string> names;
  const auto frames = load_eval_frames(o.pred, o.gt, filter, names);
  const auto thresholds = parse_thresholds(o.iou_thr, names.size());
  const EvalReport report = evaluate(frames, names, thresholds);

  write_report_table(std::cout, report);
  std::cout << "headline mAP (" << (o.r40 ? "R40" : "continuous") << ") "
            << std::fixed << std::setprecision(4) << report.headline_map(o.r40) << '\n';
  if (!o.report.empty()) {
    std::ofstream out(o.report, std::ios::binary | std::ios::trunc);
    out << report_json(report) << '\n';
    if (!out) throw DatasetError("cannot write report " + o.report);
  }
  if (!o.curves_out.empty()) write_curves(o.curves_out, report);
  if (!o.svg.empty()) {
    std::ofstream out(o.svg, std::ios::binary | std::ios::trunc);
    out << curves_svg(report);
    if (!out) throw DatasetError("cannot write " + o.svg);
  }
  if (!o.conditional_out.empty()) {
    const fs::path dir(o.conditional_out);
    fs::create_directories(dir);
    for (std::uint32_t c = 0; c < names.size(); ++c) {
      const struct {
        const char* tag;
        Conditioner fn;
        const std::vector<double>* edges;
      } kinds[] = {{"length", length_conditioner, &length_edges},
                   {"viewing_angle", viewing_angle_conditioner, &angle_edges}};
      for (const auto& k : kinds) {
        const auto bins = conditional_precision(frames, c, thresholds.at(c), k.fn, *k.edges,
                                                o.score_threshold);
        std::ofstream out(dir / (names[c] + "_" + k.tag + ".csv"), std::ios::trunc);
        write_conditional_csv(out, bins);
      }
    }
  }
  return kExitOk;
}

struct OracleOptions {
  std::string pred;
  std::string gt;
  std::string iou_thr;
  bool r40 = false;
};

int run_oracle(const OracleOptions& o) {
  std::vector<std::string> names;
  const auto frames = load_eval_frames(o.pred, o.gt, {}, names);
  const auto thresholds = parse_thresholds(o.iou_thr, names.size());
  const ApMode mode = o.r40 ? ApMode::kR40 : ApMode::kContinuous;
  std::vector<OracleGap> gaps(names.size());
  parallel_for(names.size(), [&](std::size_t c) {
    gaps[c] = oracle_gap(frames, static_cast<std::uint32_t>(c), thresholds.at(static_cast<std::uint32_t>(c)), mode);
  });
  std::cout << std::left << std::setw(14) << "class" << std::right << std::setw(10) << "AP"
            << std::setw(10) << "oracleAP" << std::setw(10) << "gap" << '\n'
            << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::cout << std::left << std::setw(14) << names[c] << std::right << std::setw(10)
              << gaps[c].baseline << std::setw(10) << gaps[c].oracle << std::setw(10)
              << gaps[c].gap() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::string model;
  std::string data;
  std::size_t repeats = 5;
  std::uint64_t seed = 7;
};

int run_bench_cmd(const BenchOptions& o) {
  std::vector<Frame> frames;
  std::uint32_t class_count = kSynthClassCount;
  std::uint32_t channels = 5;
  if (o.data.empty()) {
    frames = generate_frames(throughput_scene(o.seed), error_model_a());
  } else {
    const auto manifest = read_manifest(o.data);
    FrameParts parts;
    parts.ground_truth = false;
    frames = load_frames(o.data, manifest, parts);
    class_count = static_cast<std::uint32_t>(manifest.class_names.size());
    channels = manifest.channels;
  }
  GaceModel model;
  if (o.model.empty()) {
    // Timing does not depend on weight values, so an untrained model is representative.
    NormConfig norm;
    norm.class_count = class_count;
    norm.use_elongation = channels >= 5;
    model = GaceModel::create(norm, ModelShape{}, FeatureGroups::all(), true, o.seed);
    model.round_to_storage_precision();
  } else {
    model = load_model(o.model);
  }
  const Rescorer rescorer(model);
  BenchResult result;
  try {
    result = run_bench(rescorer, frames, o.repeats);
  } catch (const std::invalid_argument& e) {
    throw DatasetError(e.what());
  }
  write_bench_table(std::cout, result);
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// ablate-report

struct AblateOptions {
  std::string train_dir;
  std::string eval_dir;
  std::uint64_t seed = 0;
  std::size_t epochs = 5;
  double lr = 0.001;
  std::size_t batch = 8;
  std::string thresholds;
  std::string only;
  bool r40 = false;
  std::string json;
};

int run_ablate(const AblateOptions& o) {
  const auto tm = read_manifest(o.train_dir);
  const auto em = read_manifest(o.eval_dir);
  if (tm.class_names != em.class_names) throw DatasetError("train and eval list different classes");
  const auto train_frames = load_frames(o.train_dir, tm, {});
  const auto eval_frames = load_frames(o.eval_dir, em, {});
  const auto thresholds = parse_thresholds(o.thresholds, tm.class_names.size());

  TrainConfig base;
  base.epochs = o.epochs;
  base.lr = o.lr;
  base.batch = o.batch;
  base.seed = o.seed;
  base.norm.class_count = static_cast<std::uint32_t>(tm.class_names.size());
  base.norm.use_elongation = tm.channels >= 5 && em.channels >= 5;
  auto variants = ablation_grid();
  if (!o.only.empty()) {
    const auto wanted = split_list(o.only);
    std::vector<AblationVariant> kept;
    for (const auto& name : wanted) {
      const auto it = std::find_if(variants.begin(), variants.end(),
                                   [&](const AblationVariant& v) { return v.name == name; });
      if (it == variants.end()) throw UsageError("unknown ablation variant '" + name + "'");
      kept.push_back(*it);
    }
    variants = std::move(kept);
  }
  const auto results = run_ablations(train_frames, eval_frames, tm.class_names, thresholds, base, variants);

  std::cout << std::left << std::setw(22) << "variant";
  for (const auto& n : tm.class_names) std::cout << std::right << std::setw(12) << n;
  std::cout << std::setw(10) << "mAP" << '\n' << std::fixed << std::setprecision(4);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    std::cout << std::left << std::setw(22) << r.variant.name << std::right;
    nlohmann::ordered_json row;
    row["variant"] = r.variant.name;
    for (const auto& c : r.report.classes) {
      const double ap = o.r40 ? c.ap_r40 : c.ap;
      std::cout << std::setw(12) << ap;
      row["ap"][c.name] = ap;
    }
    std::cout << std::setw(10) << r.report.headline_map(o.r40) << '\n';
    row["map"] = r.report.headline_map(o.r40);
    j.push_back(std::move(row));
  }
  if (!o.json.empty()) {
    std::ofstream out(o.json, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw DatasetError("cannot write " + o.json);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry-aware confidence re-estimation for 3D detections"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
  s->add_option("--seed", synth.seed, "Scene and detector seed")->required();
  s->add_option("--frames", synth.frames, "Frame count (ignored with --preset)");
  s->add_option("--out", synth.out, "Output dataset directory")->required();
  s->add_option("--error-model", synth.error_model, "Detector error model: A or B");
  s->add_option("--preset", synth.preset, "Benchmark preset (bench-v1)");
  s->add_option("--split", synth.split, "Preset split: train or eval");
  s->add_option("--channels", synth.channels, "Point channels: 4 or 5")->check(CLI::IsMember({4u, 5u}));
  s->add_flag("--no-ground-clutter", synth.no_ground_clutter, "Omit ground returns and clutter");

  LabelOptions label;
  auto* l = app.add_subcommand("label", "Write TP labels u and IoU targets v per detection");
  l->add_option("--data", label.data, "Dataset directory with ground truth")->required();
  l->add_option("--thresholds", label.thresholds, "Per-class IoU thresholds, comma separated");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a rescoring model on a labeled dataset");
  t->add_option("--train", tr.train_dir, "Training dataset directory")->required();
  t->add_option("--out-model", tr.out_model, "Output model file")->required();
  t->add_option("--epochs", tr.epochs, "Training epochs")->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  t->add_option("--lambda-iou", tr.lambda_iou, "Weight of the IoU regression loss")->check(CLI::NonNegativeNumber);
  t->add_option("--radius", tr.radius, "Context radius in meters")->check(CLI::PositiveNumber);
  t->add_option("--batch", tr.batch, "Frames per optimizer step")->check(CLI::PositiveNumber);
  t->add_option("--seed", tr.seed, "Initialization and shuffling seed")->required();
  t->add_option("--ablate", tr.ablate, "Disabled groups: box,num_points,viewing_angle,statistics,context");
  t->add_flag("--no-context", tr.no_context, "Train without contextual features");
  t->add_flag("--no-elongation", tr.no_elongation, "Drop elongation statistics (4-channel data)");
  t->add_option("--thresholds", tr.thresholds, "Per-class IoU thresholds for the TP labels");
  t->add_option("--log", tr.log, "Per-epoch loss log file");

  RescoreOptions rs;
  auto* r = app.add_subcommand("rescore", "Replace detection scores with model scores");
  r->add_option("--model", rs.model, "Model file")->required();
  r->add_option("--frames", rs.frames, "Input dataset directory")->required();
  r->add_option("--out", rs.out, "Output dataset directory")->required();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "AP, APH and oracle AP per class");
  e->add_option("--pred", ev.pred, "Dataset directory with detections")->required();
  e->add_option("--gt", ev.gt, "Dataset directory with ground truth")->required();
  e->add_option("--iou-thr", ev.iou_thr, "Per-class IoU thresholds, comma separated");
  e->add_flag("--r40", ev.r40, "Report AP@R40 as the headline metric");
  e->add_option("--report", ev.report, "JSON report file");
  e->add_option("--curves-out", ev.curves_out, "Directory for per-class PR curve CSVs");
  e->add_option("--svg", ev.svg, "PR curve plot file");
  e->add_option("--min-points", ev.min_points, "Ignore ground truth with fewer points");
  e->add_option("--max-points", ev.max_points, "Ignore ground truth with more points");
  e->add_option("--conditional-out", ev.conditional_out, "Directory for conditional precision CSVs");
  e->add_option("--length-edges", ev.length_edges, "Box length bin edges in meters");
  e->add_option("--angle-edges", ev.angle_edges, "Viewing angle bin edges in radians");
  e->add_option("--score-threshold", ev.score_threshold, "Score cut for conditional precision");

  OracleOptions orc;
  auto* oc = app.add_subcommand("oracle", "Baseline AP against perfect re-ranking");
  oc->add_option("--pred", orc.pred, "Dataset directory with detections")->required();
  oc->add_option("--gt", orc.gt, "Dataset directory with ground truth")->required();
  oc->add_option("--iou-thr", orc.iou_thr, "Per-class IoU thresholds, comma separated");
  oc->add_flag("--r40", orc.r40, "Use AP@R40");

  BenchOptions bn;
  auto* b = app.add_subcommand("bench", "Per-stage rescoring runtime");
  b->add_option("--model", bn.model, "Model file (default: untrained model)");
  b->add_option("--data", bn.data, "Dataset directory (default: dense synthetic frames)");
  b->add_option("--repeats", bn.repeats, "Timed passes over the frames")->check(CLI::PositiveNumber);
  b->add_option("--seed", bn.seed, "Seed of the default frames and model");

  AblateOptions ab;
  auto* a = app.add_subcommand("ablate-report", "Feature-group ablations and radius sweep");
  a->add_option("--train", ab.train_dir, "Training dataset directory")->required();
  a->add_option("--eval", ab.eval_dir, "Evaluation dataset directory")->required();
  a->add_option("--seed", ab.seed, "Training seed")->required();
  a->add_option("--epochs", ab.epochs, "Training epochs")->check(CLI::PositiveNumber);
  a->add_option("--lr", ab.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  a->add_option("--batch", ab.batch, "Frames per optimizer step")->check(CLI::PositiveNumber);
  a->add_option("--thresholds", ab.thresholds, "Per-class IoU thresholds");
  a->add_option("--only", ab.only, "Comma list of variant names to run");
  a->add_flag("--r40", ab.r40, "Report AP@R40");
  a->add_option("--json", ab.json, "JSON results file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  log_resolved_config(*chosen);
  try {
    if (chosen == s) return run_synth(synth);
    if (chosen == l) return run_label(label);
    if (chosen == t) return run_train(tr);
    if (chosen == r) return run_rescore(rs);
    if (chosen == e) return run_eval(ev);
    if (chosen == oc) return run_oracle(orc);
    if (chosen == b) return run_bench_cmd(bn);
    if (chosen == a) return run_ablate(ab);
  } catch (const UsageError& err) {
    std::cerr << "gace: usage error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "gace: error: " << err.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
