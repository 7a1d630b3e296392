#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coteach/batch_analysis.hpp"
#include "coteach/eval.hpp"
#include "coteach/io_util.hpp"
#include "coteach/label_io.hpp"
#include "coteach/noise.hpp"
#include "coteach/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coteach;

namespace {

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> split_doubles(const std::string& csv) {
  std::vector<double> out;
  for (const auto& item : split_list(csv)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  return out;
}

struct ManifestWriter {
  json j;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  explicit ManifestWriter(const std::string& command) {
    j["schema_version"] = 1;
    j["tool"] = "coteach";
    j["version"] = kVersion;
    j["command"] = command;
  }
  void write(const fs::path& path) {
    j["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    atomic_write_file(path, j.dump(2) + "\n");
  }
};

const json& require_key(const json& j, const std::string& section, const char* key) {
  if (!j.contains(key))
    throw UsageError("missing config key '" + section + "." + key + "'");
  return j.at(key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// ---------------------------------------------------------------- inject

int cmd_inject(const std::string& labels_dir, const std::string& out_dir,
               const std::string& spec_file, std::optional<std::string> kind,
               std::optional<double> prob, std::optional<double> shift_sigma,
               std::optional<double> scale_sigma, std::optional<std::uint64_t> seed,
               std::optional<int> spurious_count, const std::string& categories_csv,
               double image_w, double image_h, bool lenient) {
  ManifestWriter manifest("inject");
  NoiseSpec spec;
  if (!spec_file.empty()) spec = NoiseSpec::from_json(read_file(spec_file));
  if (kind) spec.kind = noise_kind_from_name(*kind);
  if (prob) spec.probability = *prob;
  if (shift_sigma) spec.jitter_shift_sigma = *shift_sigma;
  if (scale_sigma) spec.jitter_scale_sigma = *scale_sigma;
  if (seed) spec.seed = *seed;
  if (spurious_count) spec.spurious_per_frame = *spurious_count;
  if (spec_file.empty() && !kind)
    throw UsageError("provide --spec or --kind (with --prob/--seed)");

  const auto categories = split_list(categories_csv);
  if (categories.empty()) throw UsageError("--categories must name at least one category");
  LoadOptions load;
  load.image_width = image_w;
  load.image_height = image_h;
  load.strict = !lenient;
  if (!fs::is_directory(labels_dir))
    throw UsageError("labels directory not found: " + labels_dir);
  const Dataset dataset = load_dataset(labels_dir, categories, load);

  const InjectionResult result = inject(dataset, spec);
  save_dataset(result.dataset, fs::path(out_dir) / "labels");
  atomic_write_file(fs::path(out_dir) / "ledger.csv", result.ledger.to_csv());

  manifest.j["config"] = json::parse(spec.to_json());
  manifest.j["inputs"] = {{"labels_dir", labels_dir}};
  manifest.j["outputs"] = {{"labels_dir", (fs::path(out_dir) / "labels").string()},
                           {"ledger", (fs::path(out_dir) / "ledger.csv").string()}};
  manifest.j["categories"] = categories;
  manifest.j["image_size"] = {image_w, image_h};
  manifest.j["strict"] = !lenient;
  manifest.j["seeds"] = {{"noise", spec.seed}};
  manifest.write(fs::path(out_dir) / "manifest.json");
  return 0;
}

// ----------------------------------------------------------------- train

SceneConfig scene_from_json(const json& j) {
  SceneConfig cfg;
  cfg.rows = get_or(j, "rows", cfg.rows);
  cfg.cols = get_or(j, "cols", cfg.cols);
  cfg.feature_dim = get_or(j, "feature_dim", cfg.feature_dim);
  cfg.num_categories = get_or(j, "num_categories", cfg.num_categories);
  cfg.objects_min = get_or(j, "objects_min", cfg.objects_min);
  cfg.objects_max = get_or(j, "objects_max", cfg.objects_max);
  cfg.object_cells_min = get_or(j, "object_cells_min", cfg.object_cells_min);
  cfg.object_cells_max = get_or(j, "object_cells_max", cfg.object_cells_max);
  cfg.template_snr = get_or(j, "template_snr", cfg.template_snr);
  cfg.cell_px = get_or(j, "cell_px", cfg.cell_px);
  cfg.seed = require_key(j, "scene", "seed").get<std::uint64_t>();
  return cfg;
}

ToyModelConfig model_from_json(const json& j) {
  ToyModelConfig cfg;
  cfg.hidden_dim = get_or(j, "hidden_dim", cfg.hidden_dim);
  cfg.pos_iou_threshold = get_or(j, "pos_iou_threshold", cfg.pos_iou_threshold);
  cfg.neg_ratio = get_or(j, "neg_ratio", cfg.neg_ratio);
  cfg.box_weight = get_or(j, "box_weight", cfg.box_weight);
  if (j.contains("anchor_sizes")) {
    cfg.anchor_sizes.clear();
    for (const auto& pair : j.at("anchor_sizes"))
      cfg.anchor_sizes.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  }
  return cfg;
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec spec;
  spec.kind = noise_kind_from_name(require_key(j, "noise", "kind").get<std::string>());
  spec.probability = require_key(j, "noise", "probability").get<double>();
  spec.seed = require_key(j, "noise", "seed").get<std::uint64_t>();
  spec.jitter_shift_sigma = get_or(j, "jitter_shift_sigma", spec.jitter_shift_sigma);
  spec.jitter_scale_sigma = get_or(j, "jitter_scale_sigma", spec.jitter_scale_sigma);
  spec.spurious_per_frame = get_or(j, "spurious_per_frame", spec.spurious_per_frame);
  return spec;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig cfg;
  cfg.mode = coteach_mode_from_name(require_key(j, "train", "mode").get<std::string>());
  cfg.epochs = get_or(j, "epochs", cfg.epochs);
  cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
  cfg.learning_rate = get_or(j, "learning_rate", cfg.learning_rate);
  cfg.schedule.tau_pos = get_or(j, "tau_pos", cfg.schedule.tau_pos);
  cfg.schedule.tau_neg = get_or(j, "tau_neg", cfg.schedule.tau_neg);
  cfg.schedule.tau_box = get_or(j, "tau_box", cfg.schedule.tau_box);
  cfg.schedule.tau_image = get_or(j, "tau_image", cfg.schedule.tau_image);
  cfg.schedule.epoch_constant = get_or(j, "epoch_constant", cfg.schedule.epoch_constant);
  cfg.seed_net1 = get_or(j, "seed_net1", cfg.seed_net1);
  cfg.seed_net2 = get_or(j, "seed_net2", cfg.seed_net2);
  cfg.shuffle_seed = get_or(j, "shuffle_seed", cfg.shuffle_seed);
  cfg.train_scenes = get_or(j, "train_scenes", cfg.train_scenes);
  cfg.val_scenes = get_or(j, "val_scenes", cfg.val_scenes);
  cfg.test_scenes = get_or(j, "test_scenes", cfg.test_scenes);
  cfg.extract.min_score = get_or(j, "min_score", cfg.extract.min_score);
  cfg.extract.nms_iou = get_or(j, "nms_iou", cfg.extract.nms_iou);
  cfg.extract.max_per_frame = get_or(j, "max_per_frame", cfg.extract.max_per_frame);
  cfg.eval_iou = get_or(j, "eval_iou", cfg.eval_iou);
  return cfg;
}

std::string params_json(const std::vector<double>& params) {
  json j = json::object();
  j["params"] = params;
  return j.dump() + "\n";
}

int cmd_train(const std::string& config_file, const std::string& out_dir,
              std::optional<std::string> mode_flag, std::optional<int> epochs_flag,
              std::optional<double> prob_flag, std::optional<std::uint64_t> seed1_flag,
              std::optional<std::uint64_t> seed2_flag) {
  ManifestWriter manifest("train");
  json config;
  try {
    config = json::parse(read_file(config_file));
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config JSON: ") + e.what());
  }
  for (const char* section : {"scene", "noise", "train"})
    if (!config.contains(section))
      throw UsageError("missing config key '" + std::string(section) + "'");

  const SceneConfig scene = scene_from_json(config.at("scene"));
  const ToyModelConfig model =
      config.contains("model") ? model_from_json(config.at("model")) : ToyModelConfig{};
  NoiseSpec noise = noise_from_json(config.at("noise"));
  TrainConfig train = train_from_json(config.at("train"));
  if (mode_flag) train.mode = coteach_mode_from_name(*mode_flag);
  if (epochs_flag) train.epochs = *epochs_flag;
  if (prob_flag) noise.probability = *prob_flag;
  if (seed1_flag) train.seed_net1 = *seed1_flag;
  if (seed2_flag) train.seed_net2 = *seed2_flag;

  // The resolved configuration (flags folded in) goes into the manifest so
  // a rerun from the manifest reproduces this run exactly.
  json resolved = config;
  resolved["noise"]["probability"] = noise.probability;
  resolved["train"]["mode"] = coteach_mode_name(train.mode);
  resolved["train"]["epochs"] = train.epochs;
  resolved["train"]["seed_net1"] = train.seed_net1;
  resolved["train"]["seed_net2"] = train.seed_net2;
  manifest.j["config"] = resolved;
  manifest.j["inputs"] = {{"config", config_file}};
  manifest.j["outputs"] = {{"history", (fs::path(out_dir) / "history.csv").string()},
                           {"model_net1", (fs::path(out_dir) / "model_net1.json").string()},
                           {"model_net2", (fs::path(out_dir) / "model_net2.json").string()},
                           {"ledger", (fs::path(out_dir) / "ledger.csv").string()}};
  manifest.j["seeds"] = {{"scene", scene.seed},
                         {"noise", noise.seed},
                         {"net1", train.seed_net1},
                         {"net2", train.seed_net2},
                         {"shuffle", train.shuffle_seed}};

  try {
    const RunResult result = train_coteach(scene, noise, train, model);
    atomic_write_file(fs::path(out_dir) / "history.csv", result.history.to_csv());
    atomic_write_file(fs::path(out_dir) / "ledger.csv", result.ledger.to_csv());
    atomic_write_file(fs::path(out_dir) / "model_net1.json", params_json(result.params_net1));
    atomic_write_file(fs::path(out_dir) / "model_net2.json", params_json(result.params_net2));
    manifest.j["final_test_ap"] = {{"net1", result.final_test_ap_net1},
                                   {"net2", result.final_test_ap_net2}};
    manifest.write(fs::path(out_dir) / "manifest.json");
  } catch (const TrainingDiverged& e) {
    atomic_write_file(fs::path(out_dir) / "history.csv", e.partial_history.to_csv());
    manifest.j["error"] = e.what();
    manifest.write(fs::path(out_dir) / "manifest.json");
    std::cerr << "coteach train: " << e.what() << " (partial history flushed)\n";
    return 1;
  }
  return 0;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const std::string& detections_file, const std::string& labels_dir,
             const std::string& out_dir, double iou_threshold,
             const std::string& categories_csv, const std::string& buckets_csv,
             bool kitti_moderate, double image_w, double image_h, bool lenient) {
  ManifestWriter manifest("eval");
  if (!fs::is_directory(labels_dir))
    throw UsageError("labels directory not found: " + labels_dir);
  const auto categories = split_list(categories_csv);
  if (categories.empty()) throw UsageError("--categories must name at least one category");
  LoadOptions load;
  load.image_width = image_w;
  load.image_height = image_h;
  load.strict = !lenient;
  const Dataset gts = load_dataset(labels_dir, categories, load);
  const std::vector<Detection> dets = detections_from_csv(read_file(detections_file));

  EvalOptions options;
  options.iou_threshold = iou_threshold;
  options.kitti_moderate = kitti_moderate;

  json summary;
  const fs::path out(out_dir);
  if (buckets_csv.empty()) {
    const EvalReport report = evaluate(dets, gts, options);
    for (const auto& c : report.per_category)
      atomic_write_file(out / ("pr_" + c.category + ".csv"), pr_curve_to_csv(c.curve));
    summary = json::parse(eval_report_to_json(report, options));
  } else {
    const auto edges = split_doubles(buckets_csv);
    std::vector<SizeBucket> buckets;
    double lo = 0;
    for (const double edge : edges) {
      buckets.push_back({"h" + std::to_string(static_cast<int>(lo)) + "_" +
                             std::to_string(static_cast<int>(edge)),
                         lo, edge});
      lo = edge;
    }
    buckets.push_back({"h" + std::to_string(static_cast<int>(lo)) + "_inf", lo, 0});
    const BucketedReport report = size_bucketed_report(dets, gts, buckets, options);
    for (const auto& c : report.all.per_category)
      atomic_write_file(out / ("pr_all_" + c.category + ".csv"), pr_curve_to_csv(c.curve));
    summary["all"] = json::parse(eval_report_to_json(report.all, options));
    for (const auto& [bucket, rep] : report.buckets) {
      for (const auto& c : rep.per_category)
        atomic_write_file(out / ("pr_" + bucket.name + "_" + c.category + ".csv"),
                          pr_curve_to_csv(c.curve));
      summary["buckets"][bucket.name] = json::parse(eval_report_to_json(rep, options));
    }
  }
  atomic_write_file(out / "summary.json", summary.dump(2) + "\n");

  manifest.j["inputs"] = {{"detections", detections_file}, {"labels_dir", labels_dir}};
  manifest.j["outputs"] = {{"summary", (out / "summary.json").string()}};
  manifest.j["config"] = {{"iou_threshold", iou_threshold},
                          {"kitti_moderate", kitti_moderate},
                          {"buckets", buckets_csv},
                          {"categories", categories},
                          {"image_size", {image_w, image_h}}};
  manifest.write(out / "manifest.json");
  return 0;
}

// --------------------------------------------------------------- analyze

int cmd_analyze(const std::string& batch_sizes_csv, const std::string& probs_csv, double phi,
                const std::string& mode_name, const std::string& out_file) {
  ManifestWriter manifest("analyze");
  const AnalysisMode mode = analysis_mode_from_name(mode_name);
  std::vector<int> batch_sizes;
  for (double v : split_doubles(batch_sizes_csv)) batch_sizes.push_back(static_cast<int>(v));
  const std::vector<double> probs = split_doubles(probs_csv);
  if (batch_sizes.empty() || probs.empty())
    throw UsageError("--batch-sizes and --probs must be non-empty");

  std::ostringstream csv;
  csv << "N,p,phi,mode,expected_count,expected_fraction\n";
  for (const double p : probs) {
    for (const int n_images : batch_sizes) {
      const BatchNoiseParams params = per_object_params(n_images, p, phi, mode);
      const NoisyRemaining r = expected_noisy_remaining(params);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%s,%.17g,%.17g\n", params.batch_size,
                    p, phi, analysis_mode_name(mode).c_str(), r.expected_count,
                    r.expected_fraction);
      csv << buf;
    }
  }
  atomic_write_file(out_file, csv.str());

  manifest.j["config"] = {{"batch_sizes", batch_sizes},
                          {"probs", probs},
                          {"phi", phi},
                          {"mode", analysis_mode_name(mode)}};
  manifest.j["outputs"] = {{"csv", out_file}};
  const fs::path out_path(out_file);
  manifest.write(out_path.parent_path().empty()
                     ? fs::path(out_file + ".manifest.json")
                     : out_path.parent_path() / "manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"co-teaching laboratory for object detection with noisy labels"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* inject_cmd = app.add_subcommand("inject", "corrupt a KITTI-format label directory");
  std::string in_labels, in_out, in_spec, in_kind, in_categories = "Car";
  double in_prob = -1, in_shift = -1, in_scale = -1;
  std::int64_t in_seed = -1, in_spurious = -1;
  double in_w = 1242, in_h = 375;
  bool in_lenient = false;
  inject_cmd->add_option("--labels", in_labels, "input label directory")->required();
  inject_cmd->add_option("--out", in_out, "output directory")->required();
  inject_cmd->add_option("--spec", in_spec, "noise spec JSON file");
  inject_cmd->add_option("--kind", in_kind,
                         "whole_image_pair|box_jitter|spurious|missing|combined");
  inject_cmd->add_option("--prob", in_prob, "noise probability");
  inject_cmd->add_option("--shift-sigma", in_shift, "jitter shift sigma");
  inject_cmd->add_option("--scale-sigma", in_scale, "jitter scale sigma");
  inject_cmd->add_option("--seed", in_seed, "noise seed");
  inject_cmd->add_option("--spurious-count", in_spurious, "spurious boxes per frame");
  inject_cmd->add_option("--categories", in_categories, "comma-separated category tokens");
  inject_cmd->add_option("--image-width", in_w, "image width in px");
  inject_cmd->add_option("--image-height", in_h, "image height in px");
  inject_cmd->add_flag("--lenient", in_lenient, "map unknown categories to DontCare");

  auto* train_cmd = app.add_subcommand("train", "run the dual-network toy training loop");
  std::string tr_config, tr_out, tr_mode;
  int tr_epochs = -1;
  double tr_prob = -1;
  std::int64_t tr_s1 = -1, tr_s2 = -1;
  train_cmd->add_option("--config", tr_config, "config JSON file")->required();
  train_cmd->add_option("--out", tr_out, "output directory")->required();
  train_cmd->add_option("--mode", tr_mode, "none|per-image|per-object (overrides config)");
  train_cmd->add_option("--epochs", tr_epochs, "epochs (overrides config)");
  train_cmd->add_option("--noise-prob", tr_prob, "noise probability (overrides config)");
  train_cmd->add_option("--seed-net1", tr_s1, "network 1 init seed (overrides config)");
  train_cmd->add_option("--seed-net2", tr_s2, "network 2 init seed (overrides config)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate detections against labels");
  std::string ev_dets, ev_labels, ev_out, ev_categories = "Car", ev_buckets;
  double ev_iou = 0.5, ev_w = 1242, ev_h = 375;
  bool ev_moderate = false, ev_lenient = false;
  eval_cmd->add_option("--detections", ev_dets, "detections CSV")->required();
  eval_cmd->add_option("--labels", ev_labels, "ground-truth label directory")->required();
  eval_cmd->add_option("--out", ev_out, "output directory")->required();
  eval_cmd->add_option("--iou", ev_iou, "IoU threshold");
  eval_cmd->add_option("--categories", ev_categories, "comma-separated category tokens");
  eval_cmd->add_option("--buckets", ev_buckets, "height bucket edges, e.g. 25,75");
  eval_cmd->add_flag("--kitti-moderate", ev_moderate, "KITTI moderate-difficulty filtering");
  eval_cmd->add_option("--image-width", ev_w, "image width in px");
  eval_cmd->add_option("--image-height", ev_h, "image height in px");
  eval_cmd->add_flag("--lenient", ev_lenient, "map unknown categories to DontCare");

  auto* analyze_cmd =
      app.add_subcommand("analyze", "expected residual noise vs batch size sweep");
  std::string an_batches = "2,4,8,16,32,64,128,256", an_probs = "0.1,0.25,0.4";
  std::string an_mode = "capacity", an_out = "analysis.csv";
  double an_phi = 1.0;
  analyze_cmd->add_option("--batch-sizes", an_batches, "comma-separated image batch sizes");
  analyze_cmd->add_option("--probs", an_probs, "comma-separated noise probabilities");
  analyze_cmd->add_option("--phi", an_phi, "mean objects per image");
  analyze_cmd->add_option("--mode", an_mode, "capacity|literal");
  analyze_cmd->add_option("--out", an_out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    if (inject_cmd->parsed()) {
      auto opt = [](double v) { return v >= 0 ? std::optional<double>(v) : std::nullopt; };
      return cmd_inject(in_labels, in_out, in_spec,
                        in_kind.empty() ? std::nullopt : std::optional<std::string>(in_kind),
                        opt(in_prob), opt(in_shift), opt(in_scale),
                        in_seed >= 0 ? std::optional<std::uint64_t>(in_seed) : std::nullopt,
                        in_spurious >= 0 ? std::optional<int>(in_spurious) : std::nullopt,
                        in_categories, in_w, in_h, in_lenient);
    }
    if (train_cmd->parsed()) {
      return cmd_train(tr_config, tr_out,
                       tr_mode.empty() ? std::nullopt : std::optional<std::string>(tr_mode),
                       tr_epochs >= 0 ? std::optional<int>(tr_epochs) : std::nullopt,
                       tr_prob >= 0 ? std::optional<double>(tr_prob) : std::nullopt,
                       tr_s1 >= 0 ? std::optional<std::uint64_t>(tr_s1) : std::nullopt,
                       tr_s2 >= 0 ? std::optional<std::uint64_t>(tr_s2) : std::nullopt);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(ev_dets, ev_labels, ev_out, ev_iou, ev_categories, ev_buckets,
                      ev_moderate, ev_w, ev_h, ev_lenient);
    }
    if (analyze_cmd->parsed()) {
      return cmd_analyze(an_batches, an_probs, an_phi, an_mode, an_out);
    }
  } catch (const UsageError& e) {
    std::cerr << "coteach: " << e.what() << "\n";
    return 2;
  } catch (const MalformedLine& e) {
    std::cerr << "coteach: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "coteach: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "coteach: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
