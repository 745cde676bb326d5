#pragma once
// Two-stage training: universal training over aggregated landmarks, then
// independent per-category finetuning.

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "lmk/dataset.hpp"
#include "lmk/model.hpp"

namespace lmk {

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs = 30;
  double hflip_prob = 0.0;  // probability of replacing a sample by its mirror
  uint64_t seed = 0;
  double sigma = 2.0;       // Gaussian target std-dev, output grid cells
  int in_w = 48, in_h = 64;
  int hidden = 128;
  double pad_ratio = 0.25;
  double finetune_lr_scale = 0.1;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<EpochLog> trace;
};

class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

// non-finite loss; distinct so callers can report numerical failure
class DivergenceError : public TrainError {
 public:
  explicit DivergenceError(const std::string& what) : TrainError(what) {}
};

// Optional hook, called once per sample drawn; used by tests to assert which
// instances a run touches.
using SampleHook = std::function<void(const InstanceAnnotation&)>;

TrainResult train_universal(const Dataset& ds, const SchemaBundle& schema,
                            const TrainConfig& cfg, const SampleHook& hook = {});

TrainResult finetune_category(const ModelWeights& universal, const Dataset& ds,
                              const SchemaBundle& schema, int category_id,
                              const TrainConfig& cfg, const SampleHook& hook = {});

struct FinetuneAllResult {
  std::map<int, ModelWeights> specialists;
  std::vector<int> skipped_categories;  // present in schema, absent in data
};

FinetuneAllResult finetune_all(const ModelWeights& universal, const Dataset& ds,
                               const SchemaBundle& schema, const TrainConfig& cfg);

// Mean masked loss of a model over a dataset (targets built like training).
double dataset_loss(const ModelWeights& w, const Dataset& ds, const SchemaBundle& schema,
                    const TrainConfig& cfg, int category_filter = 0);

}  // namespace lmk
