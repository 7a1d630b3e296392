#include "coteach/toy_scene.hpp"

#include <algorithm>
#include <cstdio>

#include "coteach/errors.hpp"
#include "coteach/rng.hpp"

namespace coteach {

std::vector<std::string> scene_categories(int num_categories) {
  std::vector<std::string> names;
  names.reserve(num_categories);
  for (int c = 0; c < num_categories; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

std::string scene_frame_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene%06d", index);
  return buf;
}

std::pair<FeatureMap, Frame> generate_scene(const SceneConfig& cfg, int index) {
  if (cfg.num_categories < 2) throw Error("scene config needs at least 2 categories");
  if (cfg.feature_dim < cfg.num_categories + 4)
    throw Error("feature_dim must be at least num_categories + 4");

  Rng rng(derive_seed(cfg.seed, "scene", static_cast<std::uint64_t>(index)));

  struct Object {
    int row0, col0, rows, cols, category;
  };
  const int n_objects = static_cast<int>(rng.uniform_int(cfg.objects_min, cfg.objects_max));
  std::vector<Object> objects;
  objects.reserve(n_objects);
  for (int i = 0; i < n_objects; ++i) {
    Object o;
    o.cols = static_cast<int>(
        rng.uniform_int(cfg.object_cells_min, std::min(cfg.object_cells_max, cfg.cols)));
    o.rows = static_cast<int>(
        rng.uniform_int(cfg.object_cells_min, std::min(cfg.object_cells_max, cfg.rows)));
    o.col0 = static_cast<int>(rng.uniform_int(0, cfg.cols - o.cols));
    o.row0 = static_cast<int>(rng.uniform_int(0, cfg.rows - o.rows));
    o.category = static_cast<int>(rng.uniform_int(0, cfg.num_categories - 1));
    objects.push_back(o);
  }

  FeatureMap features;
  features.rows = cfg.rows;
  features.cols = cfg.cols;
  features.dim = cfg.feature_dim;
  features.data.resize(static_cast<std::size_t>(cfg.rows) * cfg.cols * cfg.feature_dim);
  for (double& v : features.data) v = rng.normal();

  // One-hot category code on the first num_categories dimensions, then the
  // covering object's geometry relative to this cell, in cell units.
  std::vector<int> owner(static_cast<std::size_t>(cfg.rows) * cfg.cols, -1);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const Object& o = objects[i];
    for (int r = o.row0; r < o.row0 + o.rows; ++r)
      for (int c = o.col0; c < o.col0 + o.cols; ++c)
        owner[static_cast<std::size_t>(r) * cfg.cols + c] = static_cast<int>(i);
  }
  // Size channels are centered on the mid extent so every signal dimension
  // stays on the template_snr scale.
  const int geom = cfg.num_categories;
  const double mid_extent = 0.5 * (cfg.object_cells_min + cfg.object_cells_max);
  for (int r = 0; r < cfg.rows; ++r) {
    for (int c = 0; c < cfg.cols; ++c) {
      const int obj = owner[static_cast<std::size_t>(r) * cfg.cols + c];
      if (obj < 0) continue;
      const Object& o = objects[obj];
      double* cell = features.cell(r, c);
      cell[o.category] += cfg.template_snr;
      cell[geom + 0] += cfg.template_snr * (o.col0 + 0.5 * o.cols - (c + 0.5));
      cell[geom + 1] += cfg.template_snr * (o.row0 + 0.5 * o.rows - (r + 0.5));
      cell[geom + 2] += cfg.template_snr * (o.cols - mid_extent);
      cell[geom + 3] += cfg.template_snr * (o.rows - mid_extent);
    }
  }

  Frame frame;
  frame.frame_id = scene_frame_id(index);
  frame.image_width = cfg.image_width();
  frame.image_height = cfg.image_height();
  const auto categories = scene_categories(cfg.num_categories);
  for (const Object& o : objects) {
    Annotation a;
    a.category = categories[o.category];
    a.box = {o.col0 * cfg.cell_px, o.row0 * cfg.cell_px, (o.col0 + o.cols) * cfg.cell_px,
             (o.row0 + o.rows) * cfg.cell_px};
    frame.annotations.push_back(std::move(a));
  }
  return {std::move(features), std::move(frame)};
}

}  // namespace coteach
