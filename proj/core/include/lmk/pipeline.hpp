#pragma once
// End-to-end orchestration: two-stage inference, flip TTA, ensembling, and
// the ablation experiment grid.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmk/eval.hpp"
#include "lmk/train.hpp"

namespace lmk {

enum class BoxSource { GroundTruth, DetectionsFile, Perturbed };

struct InferOptions {
  bool hflip_tta = false;
  int in_w = 48, in_h = 64;
  double pad_ratio = 0.25;
};

// Boxes -> crop -> forward each model (plus mirrored pass under TTA) ->
// average stacks -> decode -> lift to the box's category. When a specialists
// map is given the box's category selects the model, falling back to the
// universal weights.
std::vector<KeypointDetection> infer(
    const std::vector<const ModelWeights*>& models,
    const Dataset& ds,
    const std::vector<DetectionBox>& boxes,
    const SchemaBundle& schema,
    const InferOptions& opt,
    const std::map<int, const ModelWeights*>* specialists = nullptr);

std::vector<DetectionBox> gt_boxes(const Dataset& ds);

void save_keypoint_detections(const std::vector<KeypointDetection>& dets,
                              const std::filesystem::path& path);
std::vector<KeypointDetection> load_keypoint_detections(const std::filesystem::path& path);

struct AblationConfig {
  TrainConfig train;
  double light_jitter = 0.05;
  double heavy_jitter = 0.15;
  uint64_t perturb_seed = 1;
  bool hflip_tta = true;
};

struct AblationOutcome {
  std::vector<AblationRun> runs;
  std::string report_text;
  std::string report_json;
};

// {gt, perturbed-light, perturbed-heavy} x {finetune on/off} x {TTA on/off}.
AblationOutcome run_ablation_suite(const Dataset& train_ds, const Dataset& val_ds,
                                   const SchemaBundle& schema, const AblationConfig& cfg);

// Reproducibility manifest: config snapshot, seed, content hashes of inputs.
std::string run_manifest_json(const std::string& command,
                              const std::string& config_snapshot,
                              uint64_t seed,
                              const std::vector<std::filesystem::path>& inputs);

uint64_t content_hash(const std::filesystem::path& path);

}  // namespace lmk
