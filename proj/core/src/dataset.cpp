#include "lmk/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace lmk {

using nlohmann::json;

std::pair<double, double> CropTransform::apply_inverse(double x, double y) const {
  const double d = det();
  if (d == 0.0) throw DataError("crop transform is singular");
  const double tx = x - m[2];
  const double ty = y - m[5];
  return {(m[4] * tx - m[1] * ty) / d, (m[0] * ty - m[3] * tx) / d};
}

const ImageRecord& Dataset::image(int image_id) const {
  for (const auto& im : images)
    if (im.image_id == image_id) return im;
  throw DataError("unknown image id " + std::to_string(image_id));
}

// --- DeepFashion2-style ingest --------------------------------------------

namespace {

InstanceAnnotation parse_item(const json& item, int image_id, int instance_id,
                              const SchemaBundle& schema, const std::string& where) {
  InstanceAnnotation ann;
  ann.instance_id = instance_id;
  ann.image_id = image_id;
  ann.category_id = item.at("category_id").get<int>();
  if (!schema.schema.has_category(ann.category_id))
    throw DataError(where + ": unknown category " + std::to_string(ann.category_id));

  const auto box = item.at("bounding_box").get<std::vector<double>>();
  if (box.size() != 4) throw DataError(where + ": bounding_box needs 4 values");
  ann.bbox = {box[0], box[1], box[2] - box[0], box[3] - box[1]};
  if (ann.bbox.w <= 0 || ann.bbox.h <= 0)
    throw DataError(where + ": degenerate bounding box");

  const auto flat = item.at("landmarks").get<std::vector<double>>();
  if (flat.size() % 3 != 0)
    throw DataError(where + ": landmarks length not a multiple of 3");
  const int expected = schema.schema.category(ann.category_id).landmark_count;
  if (static_cast<int>(flat.size() / 3) != expected)
    throw DataError(where + ": has " + std::to_string(flat.size() / 3) +
                    " keypoints, category " + std::to_string(ann.category_id) +
                    " defines " + std::to_string(expected));
  for (size_t i = 0; i + 2 < flat.size(); i += 3) {
    Keypoint k{flat[i], flat[i + 1], static_cast<int>(flat[i + 2])};
    if (k.v < 0 || k.v > 2)
      throw DataError(where + ": visibility flag " + std::to_string(k.v) + " out of {0,1,2}");
    if (k.v > 0 && (!std::isfinite(k.x) || !std::isfinite(k.y)))
      throw DataError(where + ": labeled keypoint has non-finite coordinates");
    ann.keypoints.push_back(k);
  }
  return ann;
}

}  // namespace

Dataset import_annotations(const std::filesystem::path& dir, const SchemaBundle& schema) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("not a directory: " + dir.string());

  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  Dataset ds;
  int next_instance = 1;
  int seq = 0;
  for (const auto& f : files) {
    ++seq;
    std::ifstream in(f);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError(f.string() + ": " + e.what());
    }

    int image_id = seq;
    try {
      image_id = std::stoi(f.stem().string());
    } catch (...) {
      // non-numeric stem, keep sequential id
    }

    ImageRecord im;
    im.image_id = image_id;
    im.width = j.value("image_width", 0);
    im.height = j.value("image_height", 0);
    ds.images.push_back(std::move(im));

    for (int item_idx = 1;; ++item_idx) {
      const std::string key = "item" + std::to_string(item_idx);
      if (!j.contains(key)) break;
      ds.annotations.push_back(
          parse_item(j[key], image_id, next_instance++, schema, f.string() + " " + key));
    }
  }
  return ds;
}

// --- Canonical dataset file -----------------------------------------------

void save_dataset(const Dataset& ds, const SchemaBundle& schema,
                  const std::filesystem::path& path, bool with_pixels) {
  json j;
  j["categories"] = json::array();
  for (const auto& c : schema.schema.categories)
    j["categories"].push_back({{"id", c.category_id},
                               {"name", c.name},
                               {"landmark_count", c.landmark_count}});
  j["images"] = json::array();
  for (const auto& im : ds.images) {
    json ji = {{"id", im.image_id}, {"width", im.width}, {"height", im.height}};
    if (with_pixels && !im.pixels.empty()) ji["pixels"] = im.pixels;
    j["images"].push_back(std::move(ji));
  }
  j["annotations"] = json::array();
  for (const auto& a : ds.annotations) {
    std::vector<double> flat;
    flat.reserve(a.keypoints.size() * 3);
    for (const auto& k : a.keypoints) {
      flat.push_back(k.x);
      flat.push_back(k.y);
      flat.push_back(k.v);
    }
    j["annotations"].push_back({{"id", a.instance_id},
                                {"image_id", a.image_id},
                                {"category_id", a.category_id},
                                {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
                                {"keypoints", flat}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& path, const SchemaBundle& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }

  Dataset ds;
  for (const auto& ji : j.at("images")) {
    ImageRecord im;
    im.image_id = ji.at("id").get<int>();
    im.width = ji.at("width").get<int>();
    im.height = ji.at("height").get<int>();
    if (ji.contains("pixels")) im.pixels = ji["pixels"].get<std::vector<float>>();
    ds.images.push_back(std::move(im));
  }
  for (const auto& ja : j.at("annotations")) {
    InstanceAnnotation a;
    a.instance_id = ja.at("id").get<int>();
    a.image_id = ja.at("image_id").get<int>();
    a.category_id = ja.at("category_id").get<int>();
    if (!schema.schema.has_category(a.category_id))
      throw DataError(path.string() + ": unknown category " + std::to_string(a.category_id));
    const auto b = ja.at("bbox").get<std::vector<double>>();
    a.bbox = {b.at(0), b.at(1), b.at(2), b.at(3)};
    const auto flat = ja.at("keypoints").get<std::vector<double>>();
    const int expected = schema.schema.category(a.category_id).landmark_count;
    if (static_cast<int>(flat.size()) != expected * 3)
      throw DataError(path.string() + ": annotation " + std::to_string(a.instance_id) +
                      " keypoint length mismatch");
    for (int k = 0; k < expected; ++k)
      a.keypoints.push_back({flat[3 * k], flat[3 * k + 1], static_cast<int>(flat[3 * k + 2])});
    ds.annotations.push_back(std::move(a));
  }
  return ds;
}

void save_detections(const std::vector<DetectionBox>& dets, const std::filesystem::path& path) {
  json j = json::array();
  for (const auto& d : dets)
    j.push_back({{"image_id", d.image_id},
                 {"category_id", d.category_id},
                 {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                 {"score", d.score}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<DetectionBox> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<DetectionBox> dets;
  for (const auto& jd : j) {
    DetectionBox d;
    d.image_id = jd.at("image_id").get<int>();
    d.category_id = jd.at("category_id").get<int>();
    const auto b = jd.at("bbox").get<std::vector<double>>();
    d.bbox = {b.at(0), b.at(1), b.at(2), b.at(3)};
    d.score = jd.at("score").get<double>();
    dets.push_back(d);
  }
  return dets;
}

// --- Synthetic generation -------------------------------------------------

std::vector<std::pair<double, double>> canonical_layout(const SchemaBundle& schema) {
  const int n = schema.agg.aggregate_count;
  const auto perm = flip_permutation(schema.flips, n);

  std::vector<std::pair<double, double>> pos(n, {-1, -1});
  int n_pairs = 0, n_fixed = 0;
  for (int a = 0; a < n; ++a) {
    if (perm[a] == a)
      ++n_fixed;
    else if (perm[a] > a)
      ++n_pairs;
  }

  // paired ids on a vertical ladder around the mirror axis, unpaired ids on it
  const int rows = n_pairs + n_fixed;
  int row = 0;
  for (int a = 0; a < n; ++a) {
    if (pos[a].first >= 0) continue;
    const double y = rows > 1 ? 0.1 + 0.8 * row / (rows - 1) : 0.5;
    if (perm[a] == a) {
      pos[a] = {0.5, y};
    } else {
      const double dx = 0.18 + 0.17 * ((row % 3) / 2.0);
      pos[a] = {0.5 - dx, y};
      pos[perm[a]] = {0.5 + dx, y};
    }
    ++row;
  }
  return pos;
}

namespace {

// even-odd rule polygon fill, sampled at pixel centers
void fill_polygon(ImageRecord& im, const std::vector<std::pair<double, double>>& poly,
                  float intensity) {
  if (poly.size() < 3) return;
  double ymin = poly[0].second, ymax = poly[0].second;
  for (const auto& p : poly) {
    ymin = std::min(ymin, p.second);
    ymax = std::max(ymax, p.second);
  }
  const int y0 = std::max(0, static_cast<int>(std::floor(ymin)));
  const int y1 = std::min(im.height - 1, static_cast<int>(std::ceil(ymax)));
  for (int y = y0; y <= y1; ++y) {
    const double cy = y + 0.5;
    std::vector<double> xs;
    for (size_t i = 0; i < poly.size(); ++i) {
      const auto& a = poly[i];
      const auto& b = poly[(i + 1) % poly.size()];
      if ((a.second <= cy && b.second > cy) || (b.second <= cy && a.second > cy)) {
        const double t = (cy - a.second) / (b.second - a.second);
        xs.push_back(a.first + t * (b.first - a.first));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      const int xa = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
      const int xb = std::min(im.width - 1, static_cast<int>(std::floor(xs[i + 1] - 0.5)));
      for (int x = xa; x <= xb; ++x)
        im.pixels[static_cast<size_t>(y) * im.width + x] = intensity;
    }
  }
}

}  // namespace

Dataset synth_generate(const SyntheticConfig& cfg, const SchemaBundle& schema, uint64_t seed) {
  if (cfg.image_width < 8 || cfg.image_height < 8)
    throw DataError("synthetic image size too small");
  if (cfg.landmark_jitter < 0) throw DataError("landmark_jitter must be >= 0");
  if (cfg.occluded_rate < 0 || cfg.occluded_rate > 1 || cfg.invisible_rate < 0 ||
      cfg.invisible_rate > 1)
    throw DataError("visibility rates must be in [0,1]");
  if (!(cfg.box_scale_min > 0) || cfg.box_scale_max < cfg.box_scale_min ||
      cfg.box_scale_max > 1)
    throw DataError("invalid box scale range");
  for (const auto& [cat, count] : cfg.instances_per_category) {
    if (count < 0) throw DataError("negative instance count");
    if (!schema.schema.has_category(cat))
      throw DataError("synthetic config names unknown category " + std::to_string(cat));
  }

  const auto canon = canonical_layout(schema);
  const int ncat = static_cast<int>(schema.schema.categories.size());

  Dataset ds;
  int image_id = 0;
  for (const auto& [cat, count] : cfg.instances_per_category) {
    const auto& cs = schema.schema.category(cat);
    for (int i = 0; i < count; ++i) {
      ++image_id;
      // per-image seed, so generation parallelizes without order dependence
      std::mt19937_64 rng(seed ^ static_cast<uint64_t>(image_id));
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);

      ImageRecord im;
      im.image_id = image_id;
      im.width = cfg.image_width;
      im.height = cfg.image_height;
      im.pixels.assign(static_cast<size_t>(im.width) * im.height, 0.0f);

      const double bw =
          (cfg.box_scale_min + (cfg.box_scale_max - cfg.box_scale_min) * uni(rng)) * im.width;
      const double bh =
          (cfg.box_scale_min + (cfg.box_scale_max - cfg.box_scale_min) * uni(rng)) * im.height;
      const double bx = uni(rng) * (im.width - bw);
      const double by = uni(rng) * (im.height - bh);

      InstanceAnnotation ann;
      ann.instance_id = image_id;
      ann.image_id = image_id;
      ann.category_id = cat;
      ann.bbox = {bx, by, bw, bh};

      std::vector<std::pair<double, double>> poly;
      for (int j = 0; j < cs.landmark_count; ++j) {
        const auto& c = canon[schema.agg.map[cs.global_offset + j]];
        double x = bx + c.first * bw + cfg.landmark_jitter * bw * gauss(rng);
        double y = by + c.second * bh + cfg.landmark_jitter * bh * gauss(rng);
        int v = 2;
        if (uni(rng) < cfg.invisible_rate)
          v = 0;
        else if (uni(rng) < cfg.occluded_rate)
          v = 1;
        ann.keypoints.push_back({x, y, v});
        poly.emplace_back(x, y);
      }

      const float shade = 0.35f + 0.5f * static_cast<float>(cat % (ncat + 1)) / (ncat + 1);
      fill_polygon(im, poly, shade);

      ds.images.push_back(std::move(im));
      ds.annotations.push_back(std::move(ann));
    }
  }
  return ds;
}

// --- Cropping -------------------------------------------------------------

Crop make_crop(const ImageRecord& image, const BBox& box, int out_w, int out_h,
               double pad_ratio) {
  if (!(box.w > 0) || !(box.h > 0)) throw DataError("degenerate box");
  if (out_w < 1 || out_h < 1) throw DataError("invalid crop size");

  const double x0 = box.x - pad_ratio * box.w;
  const double y0 = box.y - pad_ratio * box.h;
  const double src_w = box.w * (1 + 2 * pad_ratio);
  const double src_h = box.h * (1 + 2 * pad_ratio);

  Crop crop;
  crop.transform.out_w = out_w;
  crop.transform.out_h = out_h;
  crop.transform.m = {out_w / src_w, 0, -x0 * out_w / src_w,
                      0, out_h / src_h, -y0 * out_h / src_h};

  crop.pixels.assign(static_cast<size_t>(out_w) * out_h, 0.0f);
  if (image.pixels.empty()) return crop;

  for (int j = 0; j < out_h; ++j) {
    for (int i = 0; i < out_w; ++i) {
      const auto [sx, sy] = crop.transform.apply_inverse(i + 0.5, j + 0.5);
      const double px = sx - 0.5, py = sy - 0.5;
      const int ix = static_cast<int>(std::floor(px));
      const int iy = static_cast<int>(std::floor(py));
      const double fx = px - ix, fy = py - iy;
      auto sample = [&](int x, int y) -> double {
        if (x < 0 || y < 0 || x >= image.width || y >= image.height) return 0.0;
        return image.at(x, y);
      };
      const double v = (1 - fx) * (1 - fy) * sample(ix, iy) +
                       fx * (1 - fy) * sample(ix + 1, iy) +
                       (1 - fx) * fy * sample(ix, iy + 1) +
                       fx * fy * sample(ix + 1, iy + 1);
      crop.pixels[static_cast<size_t>(j) * out_w + i] = static_cast<float>(v);
    }
  }
  return crop;
}

// --- Detection simulation -------------------------------------------------

std::vector<DetectionBox> perturb_boxes(const std::vector<InstanceAnnotation>& gt,
                                        double jitter, double drop_rate, uint64_t seed) {
  if (jitter < 0) throw DataError("jitter must be >= 0");
  if (drop_rate < 0 || drop_rate >= 1) throw DataError("drop_rate must be in [0,1)");

  std::vector<DetectionBox> out;
  for (const auto& a : gt) {
    std::mt19937_64 rng(seed ^ static_cast<uint64_t>(a.instance_id) * 0x9E3779B97F4A7C15ull);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    if (uni(rng) < drop_rate) continue;

    const double z1 = gauss(rng), z2 = gauss(rng), z3 = gauss(rng), z4 = gauss(rng);
    DetectionBox d;
    d.image_id = a.image_id;
    d.category_id = a.category_id;
    const double dx = jitter * a.bbox.w * z1;
    const double dy = jitter * a.bbox.h * z2;
    const double w = a.bbox.w * std::max(0.1, 1.0 + jitter * z3);
    const double h = a.bbox.h * std::max(0.1, 1.0 + jitter * z4);
    // written so that jitter 0 reproduces the gt box bit-for-bit
    d.bbox = {a.bbox.x + dx + (a.bbox.w - w) / 2, a.bbox.y + dy + (a.bbox.h - h) / 2, w, h};
    d.score = std::clamp(1.0 - 0.5 * jitter * std::abs(gauss(rng)), 0.0, 1.0);
    out.push_back(d);
  }
  return out;
}

double box_iou(const BBox& a, const BBox& b) {
  const double x1 = std::max(a.x, b.x);
  const double y1 = std::max(a.y, b.y);
  const double x2 = std::min(a.x + a.w, b.x + b.w);
  const double y2 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace lmk
