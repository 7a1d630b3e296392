#include "coteach/label_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "coteach/errors.hpp"

using namespace coteach;
namespace fs = std::filesystem;

namespace {

Annotation fuzz_annotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0, 1);
  std::uniform_real_distribution<double> coord(0, 1200);
  std::uniform_int_distribution<int> occ(0, 3);
  Annotation a;
  a.category = (occ(rng) % 2) ? "Car" : "Pedestrian";
  a.truncated = unit(rng);
  a.occluded = occ(rng);
  a.alpha = unit(rng) * 6.28 - 3.14;
  const double x1 = coord(rng), y1 = coord(rng) * 0.3;
  a.box = {x1, y1, x1 + 2 + coord(rng) * 0.2, y1 + 2 + coord(rng) * 0.1};
  for (auto& v : a.dims3d) v = unit(rng) * 5;
  for (auto& v : a.location3d) v = unit(rng) * 50 - 25;
  a.rotation_y = unit(rng) * 6.28 - 3.14;
  if (unit(rng) < 0.5) a.score = unit(rng);
  return a;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("coteach_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("parse maps the positional KITTI fields") {
  const Annotation a =
      parse_label_line("Car 0.0 0 -1.57 100.0 150.0 300.0 250.0 1.5 1.6 3.8 2.0 1.5 30.0 -1.5");
  CHECK(a.category == "Car");
  CHECK(a.box == BoundingBox{100, 150, 300, 250});
  CHECK(a.alpha == doctest::Approx(-1.57));
  CHECK(a.rotation_y == doctest::Approx(-1.5));
  CHECK(!a.score.has_value());
}

TEST_CASE("parse rejects degenerate boxes") {
  CHECK_THROWS_AS(parse_label_line("Car 0 0 0 5 5 5 9 0 0 0 0 0 0 0"), InvalidBox);
  CHECK_THROWS_AS(parse_label_line("Car 0 0 0 5 9 5 5 0 0 0 0 0 0 0"), InvalidBox);
}

TEST_CASE("parse rejects wrong field counts and non-numeric fields") {
  CHECK_THROWS_AS(parse_label_line("Car 0 0 0 5 5 9 9 0 0 0 0 0 0"), MalformedLine);
  CHECK_THROWS_AS(parse_label_line("Car 0 0 0 5 5 9 9 0 0 0 0 0 0 0 0 0"), MalformedLine);
  CHECK_THROWS_AS(parse_label_line("Car x 0 0 5 5 9 9 0 0 0 0 0 0 0"), MalformedLine);
}

TEST_CASE("serialize emits 15 fields, 16 with a score") {
  Annotation a;
  a.category = "Car";
  a.box = {0, 0, 10, 10};
  std::string line = serialize_annotation(a);
  int fields = 1;
  for (char c : line) fields += (c == ' ');
  CHECK(fields == 15);
  a.score = 0.5;
  line = serialize_annotation(a);
  fields = 1;
  for (char c : line) fields += (c == ' ');
  CHECK(fields == 16);
}

TEST_CASE("parse/serialize round-trip on fuzzed annotations") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const Annotation a = fuzz_annotation(rng);
    const Annotation back = parse_label_line(serialize_annotation(a));
    CHECK(back.category == a.category);
    CHECK(std::abs(back.truncated - a.truncated) < 1e-6);
    CHECK(back.occluded == a.occluded);
    CHECK(std::abs(back.alpha - a.alpha) < 1e-6);
    CHECK(std::abs(back.box.left - a.box.left) < 1e-6);
    CHECK(std::abs(back.box.top - a.box.top) < 1e-6);
    CHECK(std::abs(back.box.right - a.box.right) < 1e-6);
    CHECK(std::abs(back.box.bottom - a.box.bottom) < 1e-6);
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(back.dims3d[k] - a.dims3d[k]) < 1e-6);
      CHECK(std::abs(back.location3d[k] - a.location3d[k]) < 1e-6);
    }
    CHECK(std::abs(back.rotation_y - a.rotation_y) < 1e-6);
    CHECK(back.score.has_value() == a.score.has_value());
    if (a.score) CHECK(std::abs(*back.score - *a.score) < 1e-6);
  }
}

TEST_CASE("serialize-parse is stable after one canonicalization") {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 200; ++i) {
    const Annotation a = fuzz_annotation(rng);
    const std::string once = serialize_annotation(a);
    const std::string twice = serialize_annotation(parse_label_line(once));
    CHECK(once == twice);
  }
}

TEST_CASE("load_dataset on an empty directory") {
  TempDir dir;
  const Dataset d = load_dataset(dir.path, {"Car"});
  CHECK(d.frames.empty());
  CHECK(d.categories == std::vector<std::string>{"Car"});
}

TEST_CASE("load_dataset reads one frame with three annotations") {
  TempDir dir;
  std::ofstream(dir.path / "000042.txt")
      << "Car 0 0 0 10 10 50 50 0 0 0 0 0 0 0\n"
      << "Car 0 0 0 60 10 90 50 0 0 0 0 0 0 0\n"
      << "Pedestrian 0 0 0 100 10 120 60 0 0 0 0 0 0 0\n";
  const Dataset d = load_dataset(dir.path, {"Car", "Pedestrian"});
  REQUIRE(d.frames.size() == 1);
  CHECK(d.frames[0].frame_id == "000042");
  CHECK(d.frames[0].annotations.size() == 3);
}

TEST_CASE("load_dataset names the file and line of a malformed line") {
  TempDir dir;
  std::ofstream(dir.path / "000001.txt") << "Car 0 0 0 10 10 50 50 0 0 0 0 0 0 0\n"
                                         << "Car bogus\n";
  try {
    load_dataset(dir.path, {"Car"});
    FAIL("expected MalformedLine");
  } catch (const MalformedLine& e) {
    const std::string msg = e.what();
    CHECK(msg.find("000001.txt") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }
}

TEST_CASE("strictness flag controls unknown-category handling") {
  TempDir dir;
  std::ofstream(dir.path / "0.txt") << "Tram 0 0 0 10 10 50 50 0 0 0 0 0 0 0\n";
  CHECK_THROWS_AS(load_dataset(dir.path, {"Car"}), MalformedLine);
  LoadOptions lenient;
  lenient.strict = false;
  const Dataset d = load_dataset(dir.path, {"Car"}, lenient);
  REQUIRE(d.frames[0].annotations.size() == 1);
  CHECK(d.frames[0].annotations[0].is_dont_care());
}

TEST_CASE("frames sort by frame_id and reloading is deterministic") {
  TempDir dir;
  for (const char* name : {"zz", "aa", "mm"})
    std::ofstream(dir.path / (std::string(name) + ".txt"))
        << "Car 0 0 0 10 10 50 50 0 0 0 0 0 0 0\n";
  const Dataset d1 = load_dataset(dir.path, {"Car"});
  const Dataset d2 = load_dataset(dir.path, {"Car"});
  REQUIRE(d1.frames.size() == 3);
  CHECK(d1.frames[0].frame_id == "aa");
  CHECK(d1.frames[1].frame_id == "mm");
  CHECK(d1.frames[2].frame_id == "zz");
  CHECK(d1 == d2);
}

TEST_CASE("boxes are clamped to the image on load") {
  TempDir dir;
  std::ofstream(dir.path / "0.txt") << "Car 0 0 0 -10 -5 50 50 0 0 0 0 0 0 0\n"
                                    << "Car 0 0 0 1500 10 1600 50 0 0 0 0 0 0 0\n";
  const Dataset d = load_dataset(dir.path, {"Car"});
  // The second box lies fully outside the default 1242-wide image.
  REQUIRE(d.frames[0].annotations.size() == 1);
  CHECK(d.frames[0].annotations[0].box == BoundingBox{0, 0, 50, 50});
}

TEST_CASE("save_dataset round-trips through load_dataset") {
  TempDir in_dir, out_dir;
  std::ofstream(in_dir.path / "7.txt") << "Car 0.12 1 0.5 10.25 10.5 50.75 50.1 1 2 3 4 5 6 0.7\n";
  const Dataset d = load_dataset(in_dir.path, {"Car"});
  save_dataset(d, out_dir.path / "labels");
  const Dataset back = load_dataset(out_dir.path / "labels", {"Car"});
  CHECK(back == d);
}

TEST_CASE("DontCare is preserved on load") {
  TempDir dir;
  std::ofstream(dir.path / "0.txt") << "DontCare -1 -1 -10 10 10 50 50 -1 -1 -1 -1000 -1000 -1000 -10\n";
  const Dataset d = load_dataset(dir.path, {"Car"});
  REQUIRE(d.frames[0].annotations.size() == 1);
  CHECK(d.frames[0].annotations[0].is_dont_care());
}
