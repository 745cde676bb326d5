#include "lmk/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lmk {

using nlohmann::json;

namespace {

std::vector<float> mirror_pixels(const std::vector<float>& px, int w, int h) {
  std::vector<float> out(px.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<size_t>(y) * w + x] = px[static_cast<size_t>(y) * w + (w - 1 - x)];
  return out;
}

}  // namespace

std::vector<DetectionBox> gt_boxes(const Dataset& ds) {
  std::vector<DetectionBox> boxes;
  boxes.reserve(ds.annotations.size());
  for (const auto& a : ds.annotations)
    boxes.push_back({a.image_id, a.category_id, a.bbox, 1.0});
  return boxes;
}

std::vector<KeypointDetection> infer(
    const std::vector<const ModelWeights*>& models,
    const Dataset& ds,
    const std::vector<DetectionBox>& boxes,
    const SchemaBundle& schema,
    const InferOptions& opt,
    const std::map<int, const ModelWeights*>* specialists) {
  const auto perm = flip_permutation(schema.flips, schema.agg.aggregate_count);

  std::vector<KeypointDetection> out;
  out.reserve(boxes.size());
  for (const auto& box : boxes) {
    std::vector<const ModelWeights*> active;
    if (specialists) {
      auto it = specialists->find(box.category_id);
      if (it != specialists->end()) active.push_back(it->second);
    }
    if (active.empty()) active = models;
    if (active.empty())
      throw DataError("no weights for category " + std::to_string(box.category_id) +
                      " and no universal fallback");

    const auto& im = ds.image(box.image_id);
    const Crop crop = make_crop(im, box.bbox, opt.in_w, opt.in_h, opt.pad_ratio);
    std::vector<float> mirrored;
    if (opt.hflip_tta) mirrored = mirror_pixels(crop.pixels, opt.in_w, opt.in_h);

    std::vector<HeatmapStack> stacks;
    for (const ModelWeights* w : active) {
      stacks.push_back(forward(*w, crop.pixels));
      if (opt.hflip_tta)
        stacks.push_back(hflip_stack(forward(*w, mirrored), perm));
    }
    const HeatmapStack fused = average_stacks(stacks);
    const auto decoded = decode(fused, crop.transform);

    AggregateKeypoints agg(decoded.size());
    for (size_t c = 0; c < decoded.size(); ++c)
      agg[c] = {decoded[c].x, decoded[c].y, 2, decoded[c].score, true};

    KeypointDetection det;
    det.image_id = box.image_id;
    det.category_id = box.category_id;
    det.keypoints = lift_prediction(agg, schema, box.category_id);
    double acc = 0.0;
    for (const auto& k : det.keypoints) acc += k.score;
    det.score = det.keypoints.empty()
                    ? 0.0
                    : std::clamp(acc / static_cast<double>(det.keypoints.size()), 0.0, 1.0);
    out.push_back(std::move(det));
  }
  return out;
}

void save_keypoint_detections(const std::vector<KeypointDetection>& dets,
                              const std::filesystem::path& path) {
  json j = json::array();
  for (const auto& d : dets) {
    std::vector<double> flat;
    flat.reserve(d.keypoints.size() * 3);
    for (const auto& k : d.keypoints) {
      flat.push_back(k.x);
      flat.push_back(k.y);
      flat.push_back(k.score);
    }
    j.push_back({{"image_id", d.image_id},
                 {"category_id", d.category_id},
                 {"keypoints", flat},
                 {"score", d.score}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<KeypointDetection> load_keypoint_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<KeypointDetection> dets;
  for (const auto& jd : j) {
    KeypointDetection d;
    d.image_id = jd.at("image_id").get<int>();
    d.category_id = jd.at("category_id").get<int>();
    d.score = jd.at("score").get<double>();
    const auto flat = jd.at("keypoints").get<std::vector<double>>();
    if (flat.size() % 3 != 0)
      throw DataError(path.string() + ": keypoints length not a multiple of 3");
    for (size_t i = 0; i + 2 < flat.size(); i += 3)
      d.keypoints.push_back({flat[i], flat[i + 1], flat[i + 2]});
    dets.push_back(std::move(d));
  }
  return dets;
}

AblationOutcome run_ablation_suite(const Dataset& train_ds, const Dataset& val_ds,
                                   const SchemaBundle& schema, const AblationConfig& cfg) {
  const TrainResult universal = train_universal(train_ds, schema, cfg.train);
  const FinetuneAllResult ft = finetune_all(universal.weights, train_ds, schema, cfg.train);

  std::map<int, const ModelWeights*> specialists;
  for (const auto& [cat, w] : ft.specialists) specialists[cat] = &w;

  struct BoxSet {
    std::string name;
    std::vector<DetectionBox> boxes;
  };
  std::vector<BoxSet> box_sets;
  box_sets.push_back({"gt", gt_boxes(val_ds)});
  box_sets.push_back({"perturbed-light",
                      perturb_boxes(val_ds.annotations, cfg.light_jitter, 0.0, cfg.perturb_seed)});
  box_sets.push_back({"perturbed-heavy",
                      perturb_boxes(val_ds.annotations, cfg.heavy_jitter, 0.0, cfg.perturb_seed)});

  AblationOutcome outcome;
  for (const auto& bs : box_sets) {
    const EvalResult box_eval = evaluate_boxes(bs.boxes, val_ds.annotations);
    for (bool finetune : {false, true}) {
      for (bool tta : {false, true}) {
        if (!cfg.hflip_tta && tta) continue;
        InferOptions opt;
        opt.hflip_tta = tta;
        opt.in_w = cfg.train.in_w;
        opt.in_h = cfg.train.in_h;
        opt.pad_ratio = cfg.train.pad_ratio;
        const auto dets =
            infer({&universal.weights}, val_ds, bs.boxes, schema, opt,
                  finetune ? &specialists : nullptr);
        const EvalResult ev = evaluate(dets, val_ds.annotations, schema);

        AblationRun run;
        run.name = bs.name + (finetune ? "/ft" : "") + (tta ? "/tta" : "");
        run.det_source = bs.name;
        run.ap_box = box_eval.overall_ap;
        run.aggregation = true;
        run.finetune = finetune;
        run.hflip_train = cfg.train.hflip_prob > 0;
        run.hflip_test = tta;
        run.ap_kps = ev.overall_ap;
        outcome.runs.push_back(std::move(run));
      }
    }
  }
  outcome.report_text = ablation_report_text(outcome.runs);
  outcome.report_json = ablation_report_json(outcome.runs);
  return outcome;
}

uint64_t content_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  return h;
}

std::string run_manifest_json(const std::string& command,
                              const std::string& config_snapshot,
                              uint64_t seed,
                              const std::vector<std::filesystem::path>& inputs) {
  json j;
  j["command"] = command;
  j["seed"] = seed;
  if (!config_snapshot.empty()) {
    try {
      j["config"] = json::parse(config_snapshot);
    } catch (const json::parse_error&) {
      j["config"] = config_snapshot;
    }
  } else {
    j["config"] = nullptr;
  }
  j["inputs"] = json::array();
  for (const auto& p : inputs) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(content_hash(p)));
    j["inputs"].push_back({{"path", p.string()}, {"hash", hex}});
  }
  return j.dump(2) + "\n";
}

}  // namespace lmk
