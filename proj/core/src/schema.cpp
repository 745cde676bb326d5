#include "lmk/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "lmk/dataset.hpp"

namespace lmk {

using nlohmann::json;

bool LandmarkSchema::has_category(int category_id) const {
  return std::any_of(categories.begin(), categories.end(),
                     [&](const CategorySchema& c) { return c.category_id == category_id; });
}

const CategorySchema& LandmarkSchema::category(int category_id) const {
  for (const auto& c : categories) {
    if (c.category_id == category_id) return c;
  }
  throw SchemaError("unknown category id " + std::to_string(category_id));
}

void validate_schema(const SchemaBundle& bundle) {
  const auto& schema = bundle.schema;
  const auto& agg = bundle.agg;

  if (schema.categories.empty()) throw SchemaError("schema has no categories");

  int offset = 0;
  int prev_id = 0;
  for (const auto& c : schema.categories) {
    if (c.category_id <= prev_id)
      throw SchemaError("category ids must be strictly increasing; saw " +
                        std::to_string(c.category_id) + " after " + std::to_string(prev_id));
    if (c.landmark_count < 1)
      throw SchemaError("category " + std::to_string(c.category_id) +
                        " has landmark_count " + std::to_string(c.landmark_count));
    if (c.global_offset != offset)
      throw SchemaError("category " + std::to_string(c.category_id) + " offset " +
                        std::to_string(c.global_offset) + " leaves a gap (expected " +
                        std::to_string(offset) + ")");
    offset += c.landmark_count;
    prev_id = c.category_id;
  }
  if (offset != schema.total_landmarks)
    throw SchemaError("landmark counts sum to " + std::to_string(offset) +
                      ", total_landmarks is " + std::to_string(schema.total_landmarks));

  if (agg.total_landmarks != schema.total_landmarks)
    throw SchemaError("aggregation map covers " + std::to_string(agg.total_landmarks) +
                      " landmarks, schema defines " + std::to_string(schema.total_landmarks));
  if (static_cast<int>(agg.map.size()) != agg.total_landmarks)
    throw SchemaError("aggregation list length " + std::to_string(agg.map.size()) +
                      " != total_landmarks " + std::to_string(agg.total_landmarks));
  if (agg.aggregate_count < 1) throw SchemaError("aggregate_count must be positive");

  std::vector<int> hits(agg.aggregate_count, 0);
  for (int i = 0; i < agg.total_landmarks; ++i) {
    const int a = agg.map[i];
    if (a < 0 || a >= agg.aggregate_count)
      throw SchemaError("aggregation entry " + std::to_string(i) + " = " +
                        std::to_string(a) + " out of range [0," +
                        std::to_string(agg.aggregate_count) + ")");
    ++hits[a];
  }
  for (int a = 0; a < agg.aggregate_count; ++a) {
    if (hits[a] == 0)
      throw SchemaError("aggregate id " + std::to_string(a) +
                        " is never used (surjectivity violated)");
  }

  // lifting back to a category must be unambiguous
  for (const auto& c : schema.categories) {
    std::set<int> seen;
    for (int j = 0; j < c.landmark_count; ++j) {
      const int a = agg.map[c.global_offset + j];
      if (!seen.insert(a).second)
        throw SchemaError("category " + std::to_string(c.category_id) +
                          ": two local landmarks map to aggregate id " + std::to_string(a) +
                          " (per-category injectivity violated at local index " +
                          std::to_string(j) + ")");
    }
  }

  std::set<int> paired;
  for (const auto& [a, b] : bundle.flips.pairs) {
    if (a == b) throw SchemaError("flip pair (" + std::to_string(a) + "," +
                                  std::to_string(b) + ") is reflexive");
    for (int id : {a, b}) {
      if (id < 0 || id >= agg.aggregate_count)
        throw SchemaError("flip pair id " + std::to_string(id) + " out of range");
      if (!paired.insert(id).second)
        throw SchemaError("aggregate id " + std::to_string(id) + " appears in two flip pairs");
    }
  }

  if (!bundle.oks_k.empty()) {
    if (static_cast<int>(bundle.oks_k.size()) != agg.aggregate_count)
      throw SchemaError("oks_k length " + std::to_string(bundle.oks_k.size()) +
                        " != aggregate_count");
    for (double k : bundle.oks_k)
      if (!(k > 0)) throw SchemaError("oks_k entries must be positive");
  }
}

SchemaBundle parse_schema(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(origin + ": " + e.what());
  }

  SchemaBundle bundle;
  try {
    int offset = 0;
    for (const auto& jc : j.at("categories")) {
      CategorySchema c;
      c.category_id = jc.at("id").get<int>();
      c.name = jc.at("name").get<std::string>();
      c.landmark_count = jc.at("landmark_count").get<int>();
      c.global_offset = offset;
      offset += std::max(0, c.landmark_count);
      bundle.schema.categories.push_back(std::move(c));
    }
    bundle.schema.total_landmarks = offset;

    bundle.agg.total_landmarks = offset;
    bundle.agg.map = j.at("aggregation").get<std::vector<int>>();
    int max_id = -1;
    for (int a : bundle.agg.map) max_id = std::max(max_id, a);
    bundle.agg.aggregate_count =
        j.contains("aggregate_count") ? j["aggregate_count"].get<int>() : max_id + 1;

    if (j.contains("flip_pairs")) {
      for (const auto& jp : j["flip_pairs"]) {
        if (jp.size() != 2) throw SchemaError(origin + ": flip pair must have 2 entries");
        bundle.flips.pairs.emplace_back(jp[0].get<int>(), jp[1].get<int>());
      }
    }

    if (j.contains("oks_k")) {
      bundle.oks_k = j["oks_k"].get<std::vector<double>>();
    } else {
      bundle.oks_k.assign(bundle.agg.aggregate_count, 0.05);
    }
  } catch (const json::exception& e) {
    throw SchemaError(origin + ": " + e.what());
  }

  validate_schema(bundle);
  return bundle;
}

SchemaBundle load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema(ss.str(), path.string());
}

int aggregate_index(const SchemaBundle& bundle, int category_id, int local_index) {
  const auto& c = bundle.schema.category(category_id);
  if (local_index < 0 || local_index >= c.landmark_count)
    throw SchemaError("local index " + std::to_string(local_index) +
                      " out of range for category " + std::to_string(category_id));
  return bundle.agg.map[c.global_offset + local_index];
}

std::vector<int> flip_permutation(const FlipPairSet& flips, int aggregate_count) {
  std::vector<int> p(aggregate_count);
  for (int i = 0; i < aggregate_count; ++i) p[i] = i;
  for (const auto& [a, b] : flips.pairs) {
    p[a] = b;
    p[b] = a;
  }
  return p;
}

AggregateKeypoints project_annotation(const InstanceAnnotation& instance,
                                      const SchemaBundle& bundle) {
  const auto& c = bundle.schema.category(instance.category_id);
  if (static_cast<int>(instance.keypoints.size()) != c.landmark_count)
    throw SchemaError("instance " + std::to_string(instance.instance_id) + " has " +
                      std::to_string(instance.keypoints.size()) + " keypoints, category " +
                      std::to_string(instance.category_id) + " defines " +
                      std::to_string(c.landmark_count));

  AggregateKeypoints out(bundle.agg.aggregate_count);
  for (int j = 0; j < c.landmark_count; ++j) {
    const int a = bundle.agg.map[c.global_offset + j];
    const Keypoint& k = instance.keypoints[j];
    out[a].x = k.x;
    out[a].y = k.y;
    out[a].v = k.v;
    out[a].supervised = true;
  }
  return out;
}

std::vector<Keypoint> lift_keypoints(const AggregateKeypoints& agg,
                                     const SchemaBundle& bundle, int category_id) {
  const auto& c = bundle.schema.category(category_id);
  std::vector<Keypoint> out(c.landmark_count);
  for (int j = 0; j < c.landmark_count; ++j) {
    const auto& slot = agg[bundle.agg.map[c.global_offset + j]];
    out[j] = {slot.x, slot.y, slot.v};
  }
  return out;
}

std::vector<LocalPrediction> lift_prediction(const AggregateKeypoints& agg,
                                             const SchemaBundle& bundle,
                                             int category_id) {
  const auto& c = bundle.schema.category(category_id);
  std::vector<LocalPrediction> out(c.landmark_count);
  for (int j = 0; j < c.landmark_count; ++j) {
    const auto& slot = agg[bundle.agg.map[c.global_offset + j]];
    out[j] = {slot.x, slot.y, slot.score};
  }
  return out;
}

}  // namespace lmk
