#include "lmk/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lmk {

namespace {

struct Sample {
  const InstanceAnnotation* ann = nullptr;
  std::vector<float> crop;
  HeatmapStack target;
};

std::vector<float> mirror_crop(const std::vector<float>& crop, int w, int h) {
  std::vector<float> out(crop.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<size_t>(y) * w + x] = crop[static_cast<size_t>(y) * w + (w - 1 - x)];
  return out;
}

std::vector<Sample> build_samples(const Dataset& ds, const SchemaBundle& schema,
                                  const TrainConfig& cfg, int category_filter) {
  std::vector<Sample> samples;
  for (const auto& ann : ds.annotations) {
    if (category_filter != 0 && ann.category_id != category_filter) continue;
    const auto& im = ds.image(ann.image_id);
    Crop crop = make_crop(im, ann.bbox, cfg.in_w, cfg.in_h, cfg.pad_ratio);
    const auto agg = project_annotation(ann, schema);
    HeatmapStack target = encode_gaussian(agg, crop.transform, cfg.in_w / kHeatmapStride,
                                          cfg.in_h / kHeatmapStride, cfg.sigma);
    samples.push_back({&ann, std::move(crop.pixels), std::move(target)});
  }
  return samples;
}

void validate_config(const TrainConfig& cfg) {
  if (!(cfg.lr > 0)) throw TrainError("learning rate must be positive");
  if (cfg.momentum < 0 || cfg.momentum >= 1) throw TrainError("momentum must be in [0,1)");
  if (cfg.batch_size < 1) throw TrainError("batch size must be positive");
  if (cfg.epochs < 0) throw TrainError("epochs must be >= 0");
  if (cfg.hflip_prob < 0 || cfg.hflip_prob > 1)
    throw TrainError("hflip probability must be in [0,1]");
  if (!(cfg.sigma > 0)) throw TrainError("sigma must be positive");
  if (cfg.in_w % kHeatmapStride || cfg.in_h % kHeatmapStride)
    throw TrainError("input size must be divisible by the heatmap stride");
}

// deterministic Fisher-Yates, independent of library distribution internals
void shuffle_indices(std::vector<size_t>& idx, std::mt19937_64& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

TrainResult run_sgd(ModelWeights weights, const std::vector<Sample>& samples,
                    const SchemaBundle& schema, const TrainConfig& cfg, double lr,
                    uint64_t seed, const SampleHook& hook) {
  const auto perm = flip_permutation(schema.flips, schema.agg.aggregate_count);

  TrainResult result;
  Velocity vel = zero_velocity(weights);
  std::vector<size_t> idx(samples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(seed ^ (0xE70C5EEDull + static_cast<uint64_t>(epoch) * 0x9E3779B97F4A7C15ull));
    shuffle_indices(idx, rng);

    double epoch_loss = 0.0;
    size_t n_seen = 0;
    for (size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      const size_t end = std::min(idx.size(), start + cfg.batch_size);
      Gradients grad = zero_gradients(weights);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (size_t k = start; k < end; ++k) {
        const Sample& s = samples[idx[k]];
        if (hook) hook(*s.ann);
        const bool flip =
            cfg.hflip_prob > 0 &&
            (rng() >> 11) * 0x1.0p-53 < cfg.hflip_prob;  // uniform [0,1)
        double sample_loss;
        if (flip) {
          const auto fcrop = mirror_crop(s.crop, cfg.in_w, cfg.in_h);
          const auto ftarget = hflip_stack(s.target, perm);
          sample_loss = accumulate_gradient(weights, fcrop, ftarget, grad, inv_batch);
        } else {
          sample_loss = accumulate_gradient(weights, s.crop, s.target, grad, inv_batch);
        }
        epoch_loss += sample_loss;
        ++n_seen;
      }
      if (lr > 0) sgd_step(weights, grad, lr, cfg.momentum, vel);
    }

    const double mean_loss = n_seen ? epoch_loss / n_seen : 0.0;
    if (!std::isfinite(mean_loss))
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                            " (non-finite loss); lower the learning rate");
    result.trace.push_back({epoch, mean_loss, lr});
  }

  result.weights = std::move(weights);
  return result;
}

}  // namespace

TrainResult train_universal(const Dataset& ds, const SchemaBundle& schema,
                            const TrainConfig& cfg, const SampleHook& hook) {
  validate_config(cfg);
  const auto samples = build_samples(ds, schema, cfg, 0);
  if (samples.empty()) throw TrainError("empty dataset");

  ModelWeights w = init_weights(cfg.in_w, cfg.in_h, schema.agg.aggregate_count,
                                cfg.hidden, cfg.seed);
  return run_sgd(std::move(w), samples, schema, cfg, cfg.lr, cfg.seed, hook);
}

TrainResult finetune_category(const ModelWeights& universal, const Dataset& ds,
                              const SchemaBundle& schema, int category_id,
                              const TrainConfig& cfg, const SampleHook& hook) {
  validate_config(cfg);
  if (!schema.schema.has_category(category_id))
    throw TrainError("unknown category " + std::to_string(category_id));
  if (universal.channels != schema.agg.aggregate_count)
    throw TrainError("universal weights have " + std::to_string(universal.channels) +
                     " channels, schema defines " +
                     std::to_string(schema.agg.aggregate_count));

  const auto samples = build_samples(ds, schema, cfg, category_id);
  if (samples.empty())
    throw TrainError("no instances of category " + std::to_string(category_id));

  // lr 0 (scale 0) is allowed and leaves the universal weights untouched
  const double lr = cfg.lr * cfg.finetune_lr_scale;
  if (lr < 0) throw TrainError("finetune learning rate must be >= 0");
  const uint64_t seed =
      cfg.seed ^ (0xF17Eull + static_cast<uint64_t>(category_id) * 0xD1B54A32D192ED03ull);
  return run_sgd(universal, samples, schema, cfg, lr, seed, hook);
}

FinetuneAllResult finetune_all(const ModelWeights& universal, const Dataset& ds,
                               const SchemaBundle& schema, const TrainConfig& cfg) {
  FinetuneAllResult out;
  for (const auto& c : schema.schema.categories) {
    const bool present = std::any_of(
        ds.annotations.begin(), ds.annotations.end(),
        [&](const InstanceAnnotation& a) { return a.category_id == c.category_id; });
    if (!present) {
      out.skipped_categories.push_back(c.category_id);
      continue;
    }
    out.specialists[c.category_id] =
        finetune_category(universal, ds, schema, c.category_id, cfg).weights;
  }
  return out;
}

double dataset_loss(const ModelWeights& w, const Dataset& ds, const SchemaBundle& schema,
                    const TrainConfig& cfg, int category_filter) {
  const auto samples = build_samples(ds, schema, cfg, category_filter);
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) acc += loss(forward(w, s.crop), s.target);
  return acc / samples.size();
}

}  // namespace lmk
