#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lmk/dataset.hpp"
#include "lmk/schema.hpp"

using namespace lmk;
namespace fs = std::filesystem;

namespace {

const char* kMiniSchemaPath = LMKIT_DATA_DIR "/schema_mini.json";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("lmkit_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticConfig small_config() {
  SyntheticConfig cfg;
  cfg.instances_per_category = {{1, 6}, {2, 4}, {3, 3}};
  cfg.image_width = 64;
  cfg.image_height = 80;
  cfg.landmark_jitter = 0.02;
  return cfg;
}

}  // namespace

TEST_CASE("import reads per-image item files") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  TempDir dir;
  write_file(dir.path / "000001.json", R"({
    "image_width": 100, "image_height": 120,
    "item1": {
      "category_id": 1,
      "bounding_box": [10, 20, 60, 90],
      "landmarks": [15,25,2, 55,25,2, 15,85,1, 55,85,0]
    }
  })");

  const Dataset ds = import_annotations(dir.path, s);
  REQUIRE(ds.annotations.size() == 1);
  const auto& a = ds.annotations[0];
  CHECK(a.image_id == 1);
  CHECK(a.category_id == 1);
  CHECK(a.bbox.x == 10);
  CHECK(a.bbox.w == 50);  // x1y1x2y2 converted to xywh
  CHECK(a.bbox.h == 70);
  REQUIRE(a.keypoints.size() == 4);
  CHECK(a.keypoints[2].v == 1);
}

TEST_CASE("import of an empty directory yields empty lists") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  TempDir dir;
  const Dataset ds = import_annotations(dir.path, s);
  CHECK(ds.images.empty());
  CHECK(ds.annotations.empty());
}

TEST_CASE("import rejects wrong keypoint count, naming the item") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  TempDir dir;
  write_file(dir.path / "000002.json", R"({
    "item1": {
      "category_id": 2,
      "bounding_box": [0, 0, 10, 10],
      "landmarks": [1,1,2, 2,2,2]
    }
  })");
  CHECK_THROWS_WITH_AS(import_annotations(dir.path, s), doctest::Contains("item1"),
                       DataError);
}

TEST_CASE("import rejects unknown categories") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  TempDir dir;
  write_file(dir.path / "1.json", R"({
    "item1": {"category_id": 9, "bounding_box": [0,0,5,5], "landmarks": [1,1,2]}
  })");
  CHECK_THROWS_WITH_AS(import_annotations(dir.path, s), doctest::Contains("category"),
                       DataError);
}

TEST_CASE("dataset file round-trips through save and load") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  const Dataset ds = synth_generate(small_config(), s, 3);
  TempDir dir;
  const fs::path p1 = dir.path / "a.json";
  const fs::path p2 = dir.path / "b.json";
  save_dataset(ds, s, p1, true);
  const Dataset ds2 = load_dataset(p1, s);
  save_dataset(ds2, s, p2, true);
  CHECK(slurp(p1) == slurp(p2));  // import -> re-serialize is a fixed point
  CHECK(ds2.annotations.size() == ds.annotations.size());
}

TEST_CASE("synthetic generation is a pure function of config and seed") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  const SyntheticConfig cfg = small_config();
  TempDir dir;
  save_dataset(synth_generate(cfg, s, 7), s, dir.path / "a.json", true);
  save_dataset(synth_generate(cfg, s, 7), s, dir.path / "b.json", true);
  save_dataset(synth_generate(cfg, s, 8), s, dir.path / "c.json", true);
  CHECK(slurp(dir.path / "a.json") == slurp(dir.path / "b.json"));
  CHECK(slurp(dir.path / "a.json") != slurp(dir.path / "c.json"));
}

TEST_CASE("zero count means no instances of that category") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  SyntheticConfig cfg = small_config();
  cfg.instances_per_category[2] = 0;
  const Dataset ds = synth_generate(cfg, s, 1);
  for (const auto& a : ds.annotations) CHECK(a.category_id != 2);
  CHECK(ds.annotations.size() == 9);
}

TEST_CASE("zero jitter puts landmarks exactly at canonical box positions") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  SyntheticConfig cfg = small_config();
  cfg.landmark_jitter = 0.0;
  const auto canon = canonical_layout(s);
  const Dataset ds = synth_generate(cfg, s, 5);
  for (const auto& a : ds.annotations) {
    const auto& cs = s.schema.category(a.category_id);
    for (size_t j = 0; j < a.keypoints.size(); ++j) {
      const auto& c = canon[s.agg.map[cs.global_offset + static_cast<int>(j)]];
      CHECK(a.keypoints[j].x == doctest::Approx(a.bbox.x + c.first * a.bbox.w).epsilon(1e-12));
      CHECK(a.keypoints[j].y == doctest::Approx(a.bbox.y + c.second * a.bbox.h).epsilon(1e-12));
    }
  }
}

TEST_CASE("canonical layout is mirror-symmetric under the flip permutation") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  const auto canon = canonical_layout(s);
  const auto perm = flip_permutation(s.flips, s.agg.aggregate_count);
  for (int a = 0; a < s.agg.aggregate_count; ++a) {
    CHECK(canon[a].second == canon[perm[a]].second);
    CHECK(canon[a].first + canon[perm[a]].first == doctest::Approx(1.0));
  }
}

TEST_CASE("full-image crop with zero padding is a pure scale") {
  ImageRecord im;
  im.image_id = 1;
  im.width = 8;
  im.height = 4;
  im.pixels.assign(32, 0.0f);
  for (int i = 0; i < 32; ++i) im.pixels[i] = i / 32.0f;

  const Crop crop = make_crop(im, {0, 0, 8, 4}, 8, 4, 0.0);
  CHECK(crop.transform.m[0] == 1.0);
  CHECK(crop.transform.m[4] == 1.0);
  CHECK(crop.transform.m[2] == 0.0);
  for (int i = 0; i < 32; ++i) CHECK(crop.pixels[i] == doctest::Approx(im.pixels[i]));
}

TEST_CASE("box center maps to the crop center") {
  ImageRecord im;
  im.image_id = 1;
  im.width = 100;
  im.height = 100;
  const BBox box{13, 27, 40, 30};
  const Crop crop = make_crop(im, box, 48, 64, 0.25);
  const auto [cx, cy] = crop.transform.apply(box.x + box.w / 2, box.y + box.h / 2);
  CHECK(cx == doctest::Approx(24.0).epsilon(1e-12));
  CHECK(cy == doctest::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("crop transform round-trips 1000 random points within 1e-9 px") {
  ImageRecord im;
  im.image_id = 1;
  im.width = 100;
  im.height = 100;
  const Crop crop = make_crop(im, {13.5, 27.25, 41.7, 33.3}, 48, 64, 0.25);
  CHECK(crop.transform.det() != 0.0);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coord(-50.0, 150.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = coord(rng), y = coord(rng);
    const auto [cx, cy] = crop.transform.apply(x, y);
    const auto [bx, by] = crop.transform.apply_inverse(cx, cy);
    CHECK(std::abs(bx - x) < 1e-9);
    CHECK(std::abs(by - y) < 1e-9);
  }
}

TEST_CASE("make_crop rejects degenerate boxes") {
  ImageRecord im;
  im.width = 10;
  im.height = 10;
  CHECK_THROWS_AS(make_crop(im, {0, 0, 0, 5}, 8, 8, 0.0), DataError);
}

TEST_CASE("perturb_boxes with zero jitter and drop is the identity") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  const Dataset ds = synth_generate(small_config(), s, 9);
  const auto boxes = perturb_boxes(ds.annotations, 0.0, 0.0, 42);
  REQUIRE(boxes.size() == ds.annotations.size());
  for (size_t i = 0; i < boxes.size(); ++i) {
    CHECK(boxes[i].bbox.x == ds.annotations[i].bbox.x);
    CHECK(boxes[i].bbox.w == ds.annotations[i].bbox.w);
    CHECK(boxes[i].score == 1.0);
    CHECK(boxes[i].category_id == ds.annotations[i].category_id);
  }
}

TEST_CASE("perturb_boxes rejects invalid parameters") {
  CHECK_THROWS_AS(perturb_boxes({}, -0.1, 0.0, 1), DataError);
  CHECK_THROWS_AS(perturb_boxes({}, 0.1, 1.0, 1), DataError);
}

TEST_CASE("jitter 0.2 mean IoU stays in the frozen Monte-Carlo band") {
  // band frozen from an independent Monte-Carlo run of the same distribution:
  // mean IoU 0.5198 +- 0.0047 (sem over 1000 boxes); +-4 sem gives (0.50, 0.54)
  std::vector<InstanceAnnotation> gts;
  for (int i = 0; i < 1000; ++i) {
    InstanceAnnotation a;
    a.instance_id = i + 1;
    a.image_id = i + 1;
    a.category_id = 1;
    a.bbox = {10, 10, 60, 90};
    gts.push_back(a);
  }
  const auto boxes = perturb_boxes(gts, 0.2, 0.0, 123);
  REQUIRE(boxes.size() == 1000);
  double mean_iou = 0.0;
  for (size_t i = 0; i < boxes.size(); ++i) mean_iou += box_iou(boxes[i].bbox, gts[i].bbox);
  mean_iou /= boxes.size();
  CHECK(mean_iou > 0.50);
  CHECK(mean_iou < 0.54);
}

TEST_CASE("detections file round-trip") {
  TempDir dir;
  std::vector<DetectionBox> dets = {{1, 2, {3.5, 4.5, 10, 12}, 0.75},
                                    {2, 1, {0, 0, 5, 5}, 1.0}};
  const fs::path p = dir.path / "dets.json";
  save_detections(dets, p);
  const auto back = load_detections(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].bbox.x == 3.5);
  CHECK(back[0].score == 0.75);
  CHECK(back[1].category_id == 1);
}

TEST_CASE("synthetic config validation") {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  SyntheticConfig bad = small_config();
  bad.landmark_jitter = -1;
  CHECK_THROWS_AS(synth_generate(bad, s, 1), DataError);
  bad = small_config();
  bad.instances_per_category[7] = 1;
  CHECK_THROWS_AS(synth_generate(bad, s, 1), DataError);
  bad = small_config();
  bad.box_scale_max = 1.5;
  CHECK_THROWS_AS(synth_generate(bad, s, 1), DataError);
}
