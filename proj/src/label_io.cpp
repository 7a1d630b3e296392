#include "coteach/label_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "coteach/errors.hpp"

namespace coteach {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

double parse_number(std::string_view field, std::string_view name) {
  double value = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw MalformedLine("non-numeric field '" + std::string(field) + "' for " +
                        std::string(name));
  return value;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

int Dataset::category_index(std::string_view category) const {
  for (size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == category) return static_cast<int>(i);
  return -1;
}

Annotation parse_label_line(std::string_view line) {
  const auto fields = split_fields(line);
  if (fields.size() != 15 && fields.size() != 16)
    throw MalformedLine("expected 15 or 16 fields, got " + std::to_string(fields.size()));
  Annotation a;
  a.category = std::string(fields[0]);
  a.truncated = parse_number(fields[1], "truncated");
  a.occluded = static_cast<int>(parse_number(fields[2], "occluded"));
  a.alpha = parse_number(fields[3], "alpha");
  a.box.left = parse_number(fields[4], "left");
  a.box.top = parse_number(fields[5], "top");
  a.box.right = parse_number(fields[6], "right");
  a.box.bottom = parse_number(fields[7], "bottom");
  for (int i = 0; i < 3; ++i) a.dims3d[i] = parse_number(fields[8 + i], "dims3d");
  for (int i = 0; i < 3; ++i) a.location3d[i] = parse_number(fields[11 + i], "location3d");
  a.rotation_y = parse_number(fields[14], "rotation_y");
  if (fields.size() == 16) a.score = parse_number(fields[15], "score");
  if (!a.box.valid())
    throw InvalidBox("degenerate box (" + format_number(a.box.left) + ", " +
                     format_number(a.box.top) + ", " + format_number(a.box.right) + ", " +
                     format_number(a.box.bottom) + ")");
  return a;
}

std::string serialize_annotation(const Annotation& a) {
  std::ostringstream out;
  out << a.category << ' ' << format_number(a.truncated) << ' ' << a.occluded << ' '
      << format_number(a.alpha) << ' ' << format_number(a.box.left) << ' '
      << format_number(a.box.top) << ' ' << format_number(a.box.right) << ' '
      << format_number(a.box.bottom);
  for (double d : a.dims3d) out << ' ' << format_number(d);
  for (double d : a.location3d) out << ' ' << format_number(d);
  out << ' ' << format_number(a.rotation_y);
  if (a.score) out << ' ' << format_number(*a.score);
  return out.str();
}

std::optional<BoundingBox> clamp_box_to_image(const BoundingBox& box, double image_width,
                                              double image_height) {
  BoundingBox clamped{std::clamp(box.left, 0.0, image_width),
                      std::clamp(box.top, 0.0, image_height),
                      std::clamp(box.right, 0.0, image_width),
                      std::clamp(box.bottom, 0.0, image_height)};
  if (clamped.width() < 1.0 || clamped.height() < 1.0) return std::nullopt;
  return clamped;
}

Frame parse_frame(std::string_view frame_id, std::string_view contents,
                  const std::vector<std::string>& categories, const LoadOptions& options) {
  Frame frame;
  frame.frame_id = std::string(frame_id);
  frame.image_width = options.image_width;
  frame.image_height = options.image_height;
  std::istringstream in{std::string(contents)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    Annotation a;
    try {
      a = parse_label_line(line);
    } catch (const Error& e) {
      throw MalformedLine(std::string(frame_id) + ".txt:" + std::to_string(line_no) + ": " +
                          e.what());
    }
    if (!a.is_dont_care() &&
        std::find(categories.begin(), categories.end(), a.category) == categories.end()) {
      if (options.strict)
        throw MalformedLine(std::string(frame_id) + ".txt:" + std::to_string(line_no) +
                            ": unknown category '" + a.category + "'");
      a.category = kDontCare;
    }
    auto clamped = clamp_box_to_image(a.box, options.image_width, options.image_height);
    if (!clamped) continue;  // fully outside the image
    a.box = *clamped;
    frame.annotations.push_back(std::move(a));
  }
  return frame;
}

std::string serialize_frame(const Frame& frame) {
  std::string out;
  for (const auto& a : frame.annotations) {
    auto clamped = clamp_box_to_image(a.box, frame.image_width, frame.image_height);
    if (!clamped) continue;
    Annotation copy = a;
    copy.box = *clamped;
    out += serialize_annotation(copy);
    out += '\n';
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& labels_dir,
                     const std::vector<std::string>& categories,
                     const LoadOptions& options) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(labels_dir))
    throw IoFailure("not a directory: " + labels_dir.string());
  Dataset dataset;
  dataset.categories = categories;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(labels_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.stem() < b.stem(); });
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::ostringstream contents;
    contents << in.rdbuf();
    dataset.frames.push_back(
        parse_frame(path.stem().string(), contents.str(), categories, options));
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& frame : dataset.frames) {
    const fs::path path = out_dir / (frame.frame_id + ".txt");
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path.string());
    out << serialize_frame(frame);
  }
}

}  // namespace coteach
