#include <benchmark/benchmark.h>

#include <random>

#include "lmk/pipeline.hpp"

using namespace lmk;

namespace {

const char* kMiniSchemaPath = LMKIT_DATA_DIR "/schema_mini.json";

Dataset bench_dataset(const SchemaBundle& s, int per_category) {
  SyntheticConfig cfg;
  cfg.instances_per_category = {{1, per_category}, {2, per_category}, {3, per_category}};
  cfg.image_width = 96;
  cfg.image_height = 128;
  return synth_generate(cfg, s, 1);
}

}  // namespace

static void BM_EncodeGaussian(benchmark::State& state) {
  CropTransform t;
  t.out_w = 48;
  t.out_h = 64;
  AggregateKeypoints agg(6);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> c(4.0, 44.0);
  for (auto& k : agg) k = {c(rng), c(rng), 2, 0.0, true};
  for (auto _ : state)
    benchmark::DoNotOptimize(encode_gaussian(agg, t, 12, 16, 2.0));
}
BENCHMARK(BM_EncodeGaussian);

static void BM_Decode(benchmark::State& state) {
  CropTransform t;
  t.out_w = 48;
  t.out_h = 64;
  HeatmapStack s = make_stack(6, 12, 16);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> v(0.0, 1.0);
  for (double& x : s.data) x = v(rng);
  for (auto _ : state) benchmark::DoNotOptimize(decode(s, t));
}
BENCHMARK(BM_Decode);

static void BM_ForwardPass(benchmark::State& state) {
  const ModelWeights w = init_weights(48, 64, 6, 128, 3);
  std::vector<float> crop(48 * 64);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> v(0.0f, 1.0f);
  for (float& x : crop) x = v(rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(w, crop));
}
BENCHMARK(BM_ForwardPass);

static void BM_GradientStep(benchmark::State& state) {
  const ModelWeights w = init_weights(48, 64, 6, 128, 5);
  std::vector<float> crop(48 * 64);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> v(0.0f, 1.0f);
  for (float& x : crop) x = v(rng);
  HeatmapStack target = make_stack(6, 12, 16);
  std::uniform_real_distribution<double> tv(0.0, 1.0);
  for (double& x : target.data) x = tv(rng);
  for (auto _ : state) {
    Gradients g = zero_gradients(w);
    benchmark::DoNotOptimize(accumulate_gradient(w, crop, target, g));
  }
}
BENCHMARK(BM_GradientStep);

static void BM_Evaluate(benchmark::State& state) {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  const Dataset ds = bench_dataset(s, 20);
  std::vector<KeypointDetection> dets;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 4.0);
  std::uniform_real_distribution<double> sc(0.0, 1.0);
  for (const auto& a : ds.annotations) {
    KeypointDetection d;
    d.image_id = a.image_id;
    d.category_id = a.category_id;
    d.score = sc(rng);
    for (const auto& k : a.keypoints)
      d.keypoints.push_back({k.x + noise(rng), k.y + noise(rng), sc(rng)});
    dets.push_back(std::move(d));
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate(dets, ds.annotations, s));
}
BENCHMARK(BM_Evaluate);

static void BM_MakeCrop(benchmark::State& state) {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  const Dataset ds = bench_dataset(s, 2);
  const auto& a = ds.annotations.front();
  const auto& im = ds.image(a.image_id);
  for (auto _ : state)
    benchmark::DoNotOptimize(make_crop(im, a.bbox, 48, 64, 0.25));
}
BENCHMARK(BM_MakeCrop);

BENCHMARK_MAIN();
