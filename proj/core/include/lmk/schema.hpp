#pragma once
// Landmark vocabularies, the aggregation map between category-local and
// shared landmark spaces, and flip-pair symmetry metadata.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lmk {

class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

struct CategorySchema {
  int category_id = 0;  // 1-based
  std::string name;
  int landmark_count = 0;
  int global_offset = 0;  // start of this category's slots in the flat layout
};

struct LandmarkSchema {
  std::vector<CategorySchema> categories;  // ordered by category_id
  int total_landmarks = 0;

  bool has_category(int category_id) const;
  const CategorySchema& category(int category_id) const;
};

struct AggregationMap {
  int total_landmarks = 0;
  int aggregate_count = 0;
  // map[global_offset + local] -> aggregate id
  std::vector<int> map;
};

struct FlipPairSet {
  // unordered pairs of aggregate ids
  std::vector<std::pair<int, int>> pairs;
};

struct SchemaBundle {
  LandmarkSchema schema;
  AggregationMap agg;
  FlipPairSet flips;
  // per-aggregate-landmark OKS tolerance constants (default 0.05)
  std::vector<double> oks_k;
};

// Checks every structural invariant; throws SchemaError naming the offender.
void validate_schema(const SchemaBundle& bundle);

SchemaBundle load_schema(const std::filesystem::path& path);
SchemaBundle parse_schema(const std::string& json_text, const std::string& origin = "<string>");

int aggregate_index(const SchemaBundle& bundle, int category_id, int local_index);

// p[a]=b, p[b]=a for each pair, identity elsewhere; an involution.
std::vector<int> flip_permutation(const FlipPairSet& flips, int aggregate_count);

// Keypoint in category-local space. v: 0 = not labeled, 1 = occluded, 2 = visible.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  int v = 0;
};

// One slot of the aggregate landmark space. A slot is "supervised" when the
// instance's category can express it at all; v then carries the visibility.
struct AggregateKeypoint {
  double x = 0.0;
  double y = 0.0;
  int v = 0;
  double score = 0.0;
  bool supervised = false;
};

using AggregateKeypoints = std::vector<AggregateKeypoint>;

struct InstanceAnnotation;  // dataset.hpp

AggregateKeypoints project_annotation(const InstanceAnnotation& instance,
                                      const SchemaBundle& bundle);

std::vector<Keypoint> lift_keypoints(const AggregateKeypoints& agg,
                                     const SchemaBundle& bundle, int category_id);

// Prediction read-out: slot scores for one category's local landmarks.
struct LocalPrediction {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

std::vector<LocalPrediction> lift_prediction(const AggregateKeypoints& agg,
                                             const SchemaBundle& bundle,
                                             int category_id);

}  // namespace lmk
