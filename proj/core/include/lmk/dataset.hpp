#pragma once
// Annotation ingest, synthetic garment generation, instance cropping and
// detection-quality simulation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lmk/schema.hpp"

namespace lmk {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct ImageRecord {
  int image_id = 0;
  int width = 0;
  int height = 0;
  // row-major single-channel intensities in [0,1]; may be empty for
  // imported datasets where only geometry is used
  std::vector<float> pixels;

  float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

struct BBox {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;  // xywh, pixels
  double area() const { return w * h; }
};

struct InstanceAnnotation {
  int instance_id = 0;
  int image_id = 0;
  int category_id = 0;
  BBox bbox;
  std::vector<Keypoint> keypoints;  // length = landmark_count(category)
};

struct DetectionBox {
  int image_id = 0;
  int category_id = 0;
  BBox bbox;
  double score = 1.0;
};

// 2x3 affine mapping image pixel coordinates to crop coordinates.
struct CropTransform {
  // [a b c; d e f] : crop = (a*x + b*y + c, d*x + e*y + f)
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};
  int out_w = 0, out_h = 0;

  std::pair<double, double> apply(double x, double y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  }
  std::pair<double, double> apply_inverse(double x, double y) const;
  double det() const { return m[0] * m[4] - m[1] * m[3]; }
};

struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<InstanceAnnotation> annotations;

  const ImageRecord& image(int image_id) const;
};

// --- DeepFashion2-style ingest --------------------------------------------

// Reads a directory of per-image JSON files (item1, item2, ... with
// category_id, bounding_box [x1,y1,x2,y2], landmarks flat [x,y,v,...]).
Dataset import_annotations(const std::filesystem::path& dir, const SchemaBundle& schema);

// Canonical single-file dataset (COCO-keypoints-like images/annotations/categories).
void save_dataset(const Dataset& ds, const SchemaBundle& schema,
                  const std::filesystem::path& path, bool with_pixels = false);
Dataset load_dataset(const std::filesystem::path& path, const SchemaBundle& schema);

void save_detections(const std::vector<DetectionBox>& dets, const std::filesystem::path& path);
std::vector<DetectionBox> load_detections(const std::filesystem::path& path);

// --- Synthetic generation -------------------------------------------------

struct SyntheticConfig {
  std::map<int, int> instances_per_category;  // category_id -> count
  int image_width = 96;
  int image_height = 128;
  double landmark_jitter = 0.0;  // std-dev as a fraction of the instance box size
  double occluded_rate = 0.0;    // probability of v=1 per keypoint
  double invisible_rate = 0.0;   // probability of v=0 per keypoint
  double box_scale_min = 0.6;    // instance box size as a fraction of the image
  double box_scale_max = 0.9;
};

// Canonical position of each aggregate landmark in the unit square. Mirror
// symmetric under the flip-pair permutation: paired ids sit at x = 0.5 +- dx,
// unpaired ids on the x = 0.5 axis.
std::vector<std::pair<double, double>> canonical_layout(const SchemaBundle& schema);

// Pure function of (config, seed). Each instance is a filled polygon whose
// vertices are the category's landmarks at canonical aggregate positions
// scaled into a random box, perturbed by the configured jitter.
Dataset synth_generate(const SyntheticConfig& cfg, const SchemaBundle& schema, uint64_t seed);

// --- Cropping -------------------------------------------------------------

struct Crop {
  std::vector<float> pixels;  // out_h * out_w, row-major
  CropTransform transform;
};

Crop make_crop(const ImageRecord& image, const BBox& box, int out_w, int out_h,
               double pad_ratio);

// --- Detection simulation -------------------------------------------------

// Gaussian center/size noise of scale jitter*(w,h); boxes dropped with
// probability drop_rate. jitter=0, drop=0 reproduces the GT boxes with score 1.
std::vector<DetectionBox> perturb_boxes(const std::vector<InstanceAnnotation>& gt,
                                        double jitter, double drop_rate, uint64_t seed);

double box_iou(const BBox& a, const BBox& b);

}  // namespace lmk
