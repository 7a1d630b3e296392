#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coteach/batch_analysis.hpp"
#include "coteach/eval.hpp"
#include "coteach/label_io.hpp"
#include "coteach/loss.hpp"
#include "coteach/noise.hpp"
#include "coteach/selection.hpp"
#include "coteach/toy_scene.hpp"
#include "coteach/trainer.hpp"

namespace py = pybind11;
using namespace coteach;

namespace {

py::set mask_to_set(const SelectionMask& mask) {
  py::set out;
  for (const auto& key : mask.kept)
    out.add(py::make_tuple(key.frame_id, key.anchor_id, loss_component_name(key.component)));
  return out;
}

py::list history_rows(const RunHistory& history) {
  py::list rows;
  for (const auto& r : history.rows) {
    py::dict row;
    row["epoch"] = r.epoch;
    row["net"] = r.net;
    row["pos_loss"] = r.pos_loss;
    row["neg_loss"] = r.neg_loss;
    row["box_loss"] = r.box_loss;
    row["objective"] = r.objective;
    row["keep_pos"] = r.keep_pos;
    row["keep_neg"] = r.keep_neg;
    row["keep_box"] = r.keep_box;
    row["excluded_pos_noisy_frac"] = r.excluded_pos_noisy_frac;
    row["base_pos_noisy_frac"] = r.base_pos_noisy_frac;
    row["noisy_excess_ratio"] = r.noisy_excess_ratio;
    row["val_ap"] = r.val_ap;
    row["test_ap"] = r.test_ap;
    rows.append(row);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(coteach, m) {
  m.doc() = "co-teaching laboratory for object detection with noisy labels";
  m.attr("__version__") = "0.1.0";

  // ---- geometry
  py::class_<BoundingBox>(m, "BoundingBox")
      .def(py::init<>())
      .def(py::init([](double l, double t, double r, double b) {
             return BoundingBox{l, t, r, b};
           }),
           py::arg("left"), py::arg("top"), py::arg("right"), py::arg("bottom"))
      .def_readwrite("left", &BoundingBox::left)
      .def_readwrite("top", &BoundingBox::top)
      .def_readwrite("right", &BoundingBox::right)
      .def_readwrite("bottom", &BoundingBox::bottom)
      .def("width", &BoundingBox::width)
      .def("height", &BoundingBox::height)
      .def("area", &BoundingBox::area)
      .def("__repr__", [](const BoundingBox& b) {
        return "BoundingBox(" + std::to_string(b.left) + ", " + std::to_string(b.top) + ", " +
               std::to_string(b.right) + ", " + std::to_string(b.bottom) + ")";
      });
  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def("encode_box", &encode_box, py::arg("gt"), py::arg("anchor"));
  m.def("decode_box", &decode_box, py::arg("offsets"), py::arg("anchor"));

  // ---- labels
  py::class_<Annotation>(m, "Annotation")
      .def(py::init<>())
      .def_readwrite("category", &Annotation::category)
      .def_readwrite("truncated", &Annotation::truncated)
      .def_readwrite("occluded", &Annotation::occluded)
      .def_readwrite("alpha", &Annotation::alpha)
      .def_readwrite("box", &Annotation::box)
      .def_readwrite("dims3d", &Annotation::dims3d)
      .def_readwrite("location3d", &Annotation::location3d)
      .def_readwrite("rotation_y", &Annotation::rotation_y)
      .def_readwrite("score", &Annotation::score);
  py::class_<Frame>(m, "Frame")
      .def(py::init<>())
      .def_readwrite("frame_id", &Frame::frame_id)
      .def_readwrite("image_width", &Frame::image_width)
      .def_readwrite("image_height", &Frame::image_height)
      .def_readwrite("annotations", &Frame::annotations);
  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("frames", &Dataset::frames)
      .def_readwrite("categories", &Dataset::categories)
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });
  py::class_<LoadOptions>(m, "LoadOptions")
      .def(py::init<>())
      .def_readwrite("image_width", &LoadOptions::image_width)
      .def_readwrite("image_height", &LoadOptions::image_height)
      .def_readwrite("strict", &LoadOptions::strict);
  m.def("parse_label_line", &parse_label_line, py::arg("line"));
  m.def("serialize_annotation", &serialize_annotation, py::arg("annotation"));
  m.def("load_dataset", &load_dataset, py::arg("labels_dir"), py::arg("categories"),
        py::arg("options") = LoadOptions{});
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("out_dir"));

  // ---- noise
  py::enum_<NoiseKind>(m, "NoiseKind")
      .value("WHOLE_IMAGE_PAIR", NoiseKind::WholeImagePair)
      .value("BOX_JITTER", NoiseKind::BoxJitter)
      .value("SPURIOUS", NoiseKind::Spurious)
      .value("MISSING", NoiseKind::Missing)
      .value("COMBINED", NoiseKind::Combined);
  py::class_<NoiseSpec>(m, "NoiseSpec")
      .def(py::init<>())
      .def_readwrite("kind", &NoiseSpec::kind)
      .def_readwrite("probability", &NoiseSpec::probability)
      .def_readwrite("jitter_shift_sigma", &NoiseSpec::jitter_shift_sigma)
      .def_readwrite("jitter_scale_sigma", &NoiseSpec::jitter_scale_sigma)
      .def_readwrite("seed", &NoiseSpec::seed)
      .def_readwrite("spurious_per_frame", &NoiseSpec::spurious_per_frame)
      .def("to_json", &NoiseSpec::to_json)
      .def_static("from_json", &NoiseSpec::from_json, py::arg("text"));
  py::class_<LedgerEntry>(m, "LedgerEntry")
      .def_readonly("frame_id", &LedgerEntry::frame_id)
      .def_readonly("kind", &LedgerEntry::kind)
      .def_readonly("original", &LedgerEntry::original)
      .def_readonly("corrupted", &LedgerEntry::corrupted);
  py::class_<CorruptionLedger>(m, "CorruptionLedger")
      .def_readonly("entries", &CorruptionLedger::entries)
      .def("to_csv", &CorruptionLedger::to_csv);
  py::class_<InjectionResult>(m, "InjectionResult")
      .def_readonly("dataset", &InjectionResult::dataset)
      .def_readonly("ledger", &InjectionResult::ledger);
  m.def("inject", &inject, py::arg("dataset"), py::arg("spec"));
  m.def("replay_ledger", &replay_ledger, py::arg("input"), py::arg("ledger"));

  // ---- loss records and selection
  py::enum_<LossComponent>(m, "LossComponent")
      .value("POS_CE", LossComponent::PosCE)
      .value("NEG_CE", LossComponent::NegCE)
      .value("BOX", LossComponent::Box);
  py::class_<LossRecord>(m, "LossRecord")
      .def(py::init([](std::string frame_id, int anchor_id, LossComponent component,
                       double value, int gt_index) {
             return LossRecord{std::move(frame_id), anchor_id, component, value, gt_index};
           }),
           py::arg("frame_id"), py::arg("anchor_id"), py::arg("component"), py::arg("value"),
           py::arg("gt_index") = -1)
      .def_readwrite("frame_id", &LossRecord::frame_id)
      .def_readwrite("anchor_id", &LossRecord::anchor_id)
      .def_readwrite("component", &LossRecord::component)
      .def_readwrite("value", &LossRecord::value)
      .def_readwrite("gt_index", &LossRecord::gt_index);
  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def(py::init<>())
      .def_readwrite("records", &LossBreakdown::records)
      .def_readwrite("positives_per_frame", &LossBreakdown::positives_per_frame)
      .def("to_csv", &LossBreakdown::to_csv)
      .def_static("from_csv", &LossBreakdown::from_csv, py::arg("text"));
  m.def("softmax_cross_entropy",
        [](const std::vector<double>& logits, int target) {
          return softmax_cross_entropy(logits, target);
        },
        py::arg("logits"), py::arg("target"));
  m.def("smooth_l1", &smooth_l1, py::arg("pred"), py::arg("target"));
  m.def("mine_hard_negatives", &mine_hard_negatives, py::arg("neg_losses"), py::arg("n_pos"),
        py::arg("ratio"));
  m.def("keep_fraction",
        py::overload_cast<int, double, int>(&keep_fraction), py::arg("epoch"),
        py::arg("tau"), py::arg("epoch_constant"));
  m.def("select_per_image",
        [](const LossBreakdown& b, double keep) { return mask_to_set(select_per_image(b, keep)); },
        py::arg("breakdown"), py::arg("keep_ratio"));
  m.def("select_per_object",
        [](const LossBreakdown& b, double keep_pos, double keep_neg, double keep_box) {
          return mask_to_set(select_per_object(b, keep_pos, keep_neg, keep_box));
        },
        py::arg("breakdown"), py::arg("keep_pos"), py::arg("keep_neg"), py::arg("keep_box"));

  // ---- batch-size analysis
  py::enum_<AnalysisMode>(m, "AnalysisMode")
      .value("LITERAL", AnalysisMode::Literal)
      .value("CAPACITY", AnalysisMode::Capacity);
  m.def("expected_noisy_remaining",
        [](int batch_size, double probability, AnalysisMode mode) {
          const auto r = expected_noisy_remaining({batch_size, probability, 1.0, mode});
          return py::make_tuple(r.expected_count, r.expected_fraction);
        },
        py::arg("batch_size"), py::arg("probability"),
        py::arg("mode") = AnalysisMode::Capacity);

  // ---- evaluation
  py::class_<Detection>(m, "Detection")
      .def(py::init([](std::string frame_id, std::string category, BoundingBox box,
                       double score) {
             return Detection{std::move(frame_id), std::move(category), box, score};
           }),
           py::arg("frame_id"), py::arg("category"), py::arg("box"), py::arg("score"))
      .def_readwrite("frame_id", &Detection::frame_id)
      .def_readwrite("category", &Detection::category)
      .def_readwrite("box", &Detection::box)
      .def_readwrite("score", &Detection::score);
  m.def("evaluate",
        [](const std::vector<Detection>& dets, const Dataset& gts, double iou_threshold) {
          EvalOptions options;
          options.iou_threshold = iou_threshold;
          const EvalReport report = evaluate(dets, gts, options);
          py::dict out;
          out["mean_ap"] = report.mean_ap;
          out["mean_max_f1"] = report.mean_max_f1;
          py::dict cats;
          for (const auto& c : report.per_category) {
            py::dict entry;
            entry["num_gt"] = c.curve.num_gt;
            entry["ap"] = c.curve.ap;
            entry["max_f1"] = c.curve.max_f1;
            entry["operating_point"] = py::make_tuple(c.curve.op_recall, c.curve.op_precision);
            cats[py::str(c.category)] = entry;
          }
          out["categories"] = cats;
          return out;
        },
        py::arg("detections"), py::arg("ground_truth"), py::arg("iou_threshold") = 0.5);

  // ---- toy world
  py::class_<SceneConfig>(m, "SceneConfig")
      .def(py::init<>())
      .def_readwrite("rows", &SceneConfig::rows)
      .def_readwrite("cols", &SceneConfig::cols)
      .def_readwrite("feature_dim", &SceneConfig::feature_dim)
      .def_readwrite("num_categories", &SceneConfig::num_categories)
      .def_readwrite("objects_min", &SceneConfig::objects_min)
      .def_readwrite("objects_max", &SceneConfig::objects_max)
      .def_readwrite("object_cells_min", &SceneConfig::object_cells_min)
      .def_readwrite("object_cells_max", &SceneConfig::object_cells_max)
      .def_readwrite("template_snr", &SceneConfig::template_snr)
      .def_readwrite("cell_px", &SceneConfig::cell_px)
      .def_readwrite("seed", &SceneConfig::seed);
  py::class_<ToyModelConfig>(m, "ToyModelConfig")
      .def(py::init<>())
      .def_readwrite("hidden_dim", &ToyModelConfig::hidden_dim)
      .def_readwrite("anchor_sizes", &ToyModelConfig::anchor_sizes)
      .def_readwrite("pos_iou_threshold", &ToyModelConfig::pos_iou_threshold)
      .def_readwrite("neg_ratio", &ToyModelConfig::neg_ratio)
      .def_readwrite("box_weight", &ToyModelConfig::box_weight);
  py::enum_<CoteachMode>(m, "CoteachMode")
      .value("NONE", CoteachMode::None)
      .value("PER_IMAGE", CoteachMode::PerImage)
      .value("PER_OBJECT", CoteachMode::PerObject);
  py::class_<ScheduleParams>(m, "ScheduleParams")
      .def(py::init<>())
      .def_readwrite("tau_pos", &ScheduleParams::tau_pos)
      .def_readwrite("tau_neg", &ScheduleParams::tau_neg)
      .def_readwrite("tau_box", &ScheduleParams::tau_box)
      .def_readwrite("tau_image", &ScheduleParams::tau_image)
      .def_readwrite("epoch_constant", &ScheduleParams::epoch_constant);
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("schedule", &TrainConfig::schedule)
      .def_readwrite("mode", &TrainConfig::mode)
      .def_readwrite("seed_net1", &TrainConfig::seed_net1)
      .def_readwrite("seed_net2", &TrainConfig::seed_net2)
      .def_readwrite("shuffle_seed", &TrainConfig::shuffle_seed)
      .def_readwrite("train_scenes", &TrainConfig::train_scenes)
      .def_readwrite("val_scenes", &TrainConfig::val_scenes)
      .def_readwrite("test_scenes", &TrainConfig::test_scenes);
  m.def("generate_scene",
        [](const SceneConfig& cfg, int index) {
          auto [features, frame] = generate_scene(cfg, index);
          py::dict out;
          out["frame"] = frame;
          out["rows"] = features.rows;
          out["cols"] = features.cols;
          out["dim"] = features.dim;
          out["data"] = features.data;
          return out;
        },
        py::arg("config"), py::arg("index"));
  m.def("train_coteach",
        [](const SceneConfig& scene, const NoiseSpec& noise, const TrainConfig& train,
           const ToyModelConfig& model) {
          const RunResult result = train_coteach(scene, noise, train, model);
          py::dict out;
          out["history"] = history_rows(result.history);
          out["history_csv"] = result.history.to_csv();
          out["final_test_ap_net1"] = result.final_test_ap_net1;
          out["final_test_ap_net2"] = result.final_test_ap_net2;
          out["ledger_csv"] = result.ledger.to_csv();
          return out;
        },
        py::arg("scene"), py::arg("noise"), py::arg("train"),
        py::arg("model") = ToyModelConfig{});
}
