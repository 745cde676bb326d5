// Acceptance gate: one pass/fail line per criterion, non-zero exit on any
// failure. Criteria mix exact oracle checks with directional experiments on
// synthetic presets.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "lmk/pipeline.hpp"

using namespace lmk;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const char* kMiniSchemaPath = LMKIT_DATA_DIR "/schema_mini.json";
const char* kFullSchemaPath = LMKIT_DATA_DIR "/schema_deepfashion2.json";

int g_failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s: %d. %s (%s)\n", pass ? "PASS" : "FAIL", index, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Criterion 1: evaluator vs an independent brute-force reference
// ---------------------------------------------------------------------------

double ref_oks(const KeypointDetection& det, const InstanceAnnotation& gt,
               const std::vector<double>& k) {
  const double s2 = gt.bbox.w * gt.bbox.h * 0.53;
  double acc = 0.0;
  int labeled = 0;
  for (size_t i = 0; i < gt.keypoints.size(); ++i) {
    if (gt.keypoints[i].v <= 0) continue;
    ++labeled;
    const double dx = det.keypoints[i].x - gt.keypoints[i].x;
    const double dy = det.keypoints[i].y - gt.keypoints[i].y;
    acc += std::exp(-(dx * dx + dy * dy) / (2.0 * s2 * k[i] * k[i]));
  }
  return acc / labeled;
}

double ref_ap_one_threshold(const std::vector<const KeypointDetection*>& dets_sorted,
                            const std::vector<const InstanceAnnotation*>& gts,
                            const std::vector<double>& k, double thr) {
  std::vector<bool> used(gts.size(), false);
  std::vector<int> tp_flags;
  for (const auto* d : dets_sorted) {
    int best = -1;
    double best_oks = thr;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g]->image_id != d->image_id) continue;
      const double o = ref_oks(*d, *gts[g], k);
      if (o >= best_oks) {
        best_oks = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[best] = true;
      tp_flags.push_back(1);
    } else {
      tp_flags.push_back(0);
    }
  }
  std::vector<double> recall, precision;
  int tp = 0;
  for (size_t i = 0; i < tp_flags.size(); ++i) {
    tp += tp_flags[i];
    recall.push_back(double(tp) / gts.size());
    precision.push_back(double(tp) / (i + 1));
  }
  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    double best_p = 0.0;
    for (size_t i = 0; i < recall.size(); ++i)
      if (recall[i] + 1e-12 >= level) best_p = std::max(best_p, precision[i]);
    ap += best_p;
  }
  return ap / 101.0;
}

double ref_overall_ap(const std::vector<KeypointDetection>& dets,
                      const std::vector<InstanceAnnotation>& gts,
                      const SchemaBundle& schema) {
  std::set<int> cats;
  for (const auto& g : gts) cats.insert(g.category_id);
  double acc = 0.0;
  int populated = 0;
  for (int cat : cats) {
    std::vector<const InstanceAnnotation*> cat_gts;
    for (const auto& g : gts)
      if (g.category_id == cat) cat_gts.push_back(&g);
    std::vector<const KeypointDetection*> cat_dets;
    for (const auto& d : dets)
      if (d.category_id == cat) cat_dets.push_back(&d);
    std::stable_sort(cat_dets.begin(), cat_dets.end(),
                     [](const auto* a, const auto* b) { return a->score > b->score; });
    const auto k = local_oks_k(schema, cat);
    double cat_ap = 0.0;
    for (int t = 0; t < 10; ++t)
      cat_ap += ref_ap_one_threshold(cat_dets, cat_gts, k, 0.50 + 0.05 * t);
    acc += cat_ap / 10.0;
    ++populated;
  }
  return populated ? acc / populated : 0.0;
}

void criterion_1() {
  const auto t0 = Clock::now();
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  std::mt19937_64 rng(314159);
  std::uniform_int_distribution<int> cat(1, 3);
  std::uniform_real_distribution<double> pos(10.0, 150.0), size(20.0, 80.0);
  std::uniform_real_distribution<double> noise(0.5, 30.0), sc(0.0, 1.0);

  double worst = 0.0;
  int scenes_ok = 0;
  const int n_scenes = 250;
  for (int scene = 0; scene < n_scenes; ++scene) {
    std::vector<InstanceAnnotation> gts;
    std::vector<KeypointDetection> dets;
    const int n_gt = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n_gt; ++i) {
      InstanceAnnotation g;
      g.image_id = 1 + static_cast<int>(rng() % 3);
      g.instance_id = i + 1;
      g.category_id = cat(rng);
      g.bbox = {pos(rng), pos(rng), size(rng), size(rng)};
      const int n = s.schema.category(g.category_id).landmark_count;
      for (int j = 0; j < n; ++j)
        g.keypoints.push_back({pos(rng), pos(rng), static_cast<int>(rng() % 3)});
      g.keypoints[0].v = 2;
      gts.push_back(g);
    }
    const int n_det = static_cast<int>(rng() % 9);
    for (int i = 0; i < n_det; ++i) {
      const auto& base = gts[rng() % gts.size()];
      KeypointDetection d;
      d.image_id = base.image_id;
      d.category_id = base.category_id;
      d.score = sc(rng);
      std::normal_distribution<double> nd(0.0, noise(rng));
      for (const auto& k : base.keypoints)
        d.keypoints.push_back({k.x + nd(rng), k.y + nd(rng), sc(rng)});
      dets.push_back(d);
    }

    const double ours = evaluate(dets, gts, s).overall_ap;
    const double ref = ref_overall_ap(dets, gts, s);
    worst = std::max(worst, std::abs(ours - ref));
    if (std::abs(ours - ref) <= 1e-9) ++scenes_ok;
  }
  const double dt = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%d/%d scenes within 1e-9, worst |diff| %.2e, %.1fs", scenes_ok,
                n_scenes, worst, dt);
  report(1, "evaluator matches brute-force reference", scenes_ok == n_scenes && dt <= 60.0,
         detail);
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic gradients vs central finite differences
// ---------------------------------------------------------------------------

void criterion_2() {
  const auto t0 = Clock::now();
  const int in_w = 16, in_h = 12, channels = 3, hidden = 8;
  double worst_rel = 0.0;
  int cases_ok = 0;
  const int n_cases = 10;

  for (int c = 0; c < n_cases; ++c) {
    std::mt19937_64 rng(1000 + c);
    ModelWeights w = init_weights(in_w, in_h, channels, hidden, 1000 + c);
    std::uniform_real_distribution<double> bd(-0.1, 0.1);
    for (double& v : w.b1) v = bd(rng);
    for (double& v : w.b2) v = bd(rng);

    std::vector<float> crop(in_w * in_h);
    std::uniform_real_distribution<float> cd(0.0f, 1.0f);
    for (float& v : crop) v = cd(rng);

    HeatmapStack target = make_stack(channels, in_w / 4, in_h / 4);
    std::uniform_real_distribution<double> td(0.0, 1.0);
    for (double& v : target.data) v = td(rng);
    for (int ch = 0; ch < channels; ++ch) target.supervised[ch] = ch == 1 ? 0 : 1;

    Gradients g = zero_gradients(w);
    accumulate_gradient(w, crop, target, g);

    const double eps = 1e-4;
    bool ok = true;
    auto check = [&](std::vector<double>& params, const std::vector<double>& analytic,
                     size_t step) {
      for (size_t i = 0; i < params.size(); i += step) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double up = loss(forward(w, crop), target);
        params[i] = saved - eps;
        const double down = loss(forward(w, crop), target);
        params[i] = saved;
        const double numeric = (up - down) / (2 * eps);
        const double rel = std::abs(analytic[i] - numeric) /
                           std::max(1.0, std::max(std::abs(analytic[i]), std::abs(numeric)));
        worst_rel = std::max(worst_rel, rel);
        if (rel > 1e-4) ok = false;
      }
    };
    check(w.b1, g.b1, 1);
    check(w.b2, g.b2, 1);
    check(w.w2, g.w2, 5);
    check(w.w1, g.w1, 23);
    if (ok) ++cases_ok;
  }
  const double dt = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "%d/%d cases, worst rel err %.2e, %.1fs", cases_ok,
                n_cases, worst_rel, dt);
  report(2, "analytic gradients match finite differences", cases_ok == n_cases && dt <= 60.0,
         detail);
}

// ---------------------------------------------------------------------------
// Criterion 3: encode/decode fidelity, flip involution, symmetric TTA no-op
// ---------------------------------------------------------------------------

void criterion_3() {
  const SchemaBundle s = load_schema(kMiniSchemaPath);
  const auto perm = flip_permutation(s.flips, s.agg.aggregate_count);

  // (a) sub-pixel roundtrip: mean per-axis absolute error over 500 keypoints
  CropTransform ident;
  ident.out_w = 64;
  ident.out_h = 64;
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> coord(12.0, 52.0);
  double err_sum = 0.0;
  int n_axes = 0;
  for (int i = 0; i < 500; ++i) {
    AggregateKeypoints agg(1);
    const double x = coord(rng), y = coord(rng);
    agg[0] = {x, y, 2, 0.0, true};
    const HeatmapStack enc = encode_gaussian(agg, ident, 16, 16, 2.0);
    const auto dec = decode(enc, ident);
    err_sum += std::abs(dec[0].x - x) + std::abs(dec[0].y - y);
    n_axes += 2;
  }
  const double mean_err = err_sum / n_axes;
  const bool roundtrip_ok = mean_err <= 0.5;

  // (b) flip involution is exact on random stacks
  bool involution_ok = true;
  for (int rep = 0; rep < 20; ++rep) {
    HeatmapStack st = make_stack(s.agg.aggregate_count, 12, 16);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (double& v : st.data) v = val(rng);
    const HeatmapStack back = hflip_stack(hflip_stack(st, perm), perm);
    involution_ok = involution_ok && back.data == st.data;
  }

  // (c) TTA on a mirror-symmetric instance changes nothing. The stack mirror
  // reflects grid column x to W-1-x, i.e. crop coordinate c to (in_w-4)-c, so
  // a symmetric instance pairs keypoints at c and (in_w-4)-c.
  const int in_w = 32, in_h = 32;
  CropTransform ct;
  ct.out_w = in_w;
  ct.out_h = in_h;
  const double axis = in_w - 4.0;
  AggregateKeypoints agg(6);
  agg[0] = {9.0, 7.0, 2, 0.0, true};
  agg[1] = {axis - 9.0, 7.0, 2, 0.0, true};
  agg[2] = {5.5, 21.0, 2, 0.0, true};
  agg[3] = {axis - 5.5, 21.0, 2, 0.0, true};
  agg[4] = {axis / 2, 13.0, 2, 0.0, true};
  agg[5] = {axis / 2, 25.0, 2, 0.0, true};
  const HeatmapStack enc = encode_gaussian(agg, ct, in_w / 4, in_h / 4, 2.0);
  const HeatmapStack flipped = hflip_stack(enc, perm);
  const bool symmetric_fixed = flipped.data == enc.data;
  const HeatmapStack fused = average_stacks({enc, flipped});
  const auto base_dec = decode(enc, ct);
  const auto tta_dec = decode(fused, ct);
  bool tta_ok = symmetric_fixed;
  for (size_t c = 0; c < base_dec.size(); ++c)
    tta_ok = tta_ok && base_dec[c].x == tta_dec[c].x && base_dec[c].y == tta_dec[c].y;

  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "mean roundtrip err %.4f px (<= 0.5), involution %s, symmetric TTA no-op %s",
                mean_err, involution_ok ? "exact" : "BROKEN", tta_ok ? "yes" : "NO");
  report(3, "encode/decode fidelity and flip symmetry",
         roundtrip_ok && involution_ok && tta_ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 4: full aggregation schema validity
// ---------------------------------------------------------------------------

void criterion_4() {
  std::string problem;
  try {
    const SchemaBundle s = load_schema(kFullSchemaPath);
    if (s.schema.total_landmarks != 294) problem = "total landmarks != 294";
    if (problem.empty() && s.agg.aggregate_count != 81) problem = "aggregate count != 81";
    if (problem.empty() && s.schema.categories.size() != 13) problem = "categories != 13";

    if (problem.empty()) {
      std::set<int> used;
      for (const auto& c : s.schema.categories) {
        std::set<int> per_cat;
        for (int j = 0; j < c.landmark_count; ++j) {
          const int a = aggregate_index(s, c.category_id, j);
          used.insert(a);
          if (!per_cat.insert(a).second) problem = "injectivity violated";
        }
      }
      if (problem.empty() && static_cast<int>(used.size()) != s.agg.aggregate_count)
        problem = "aggregation not surjective";
    }

    if (problem.empty()) {
      std::mt19937_64 rng(4);
      std::uniform_real_distribution<double> coord(0.0, 100.0);
      for (const auto& c : s.schema.categories) {
        InstanceAnnotation a;
        a.category_id = c.category_id;
        a.bbox = {0, 0, 100, 100};
        for (int j = 0; j < c.landmark_count; ++j)
          a.keypoints.push_back({coord(rng), coord(rng), static_cast<int>(rng() % 3)});
        const auto lifted = lift_keypoints(project_annotation(a, s), s, c.category_id);
        for (size_t j = 0; j < lifted.size(); ++j)
          if (lifted[j].x != a.keypoints[j].x || lifted[j].y != a.keypoints[j].y ||
              lifted[j].v != a.keypoints[j].v)
            problem = "project/lift roundtrip broken for category " + c.name;
      }
    }
  } catch (const std::exception& e) {
    problem = e.what();
  }
  report(4, "full 294->81 schema is a valid aggregation",
         problem.empty(), problem.empty() ? "all structural checks hold" : problem);
}

// ---------------------------------------------------------------------------
// Shared synthetic-experiment helpers
// ---------------------------------------------------------------------------

SyntheticConfig preset(std::map<int, int> counts, uint64_t /*unused*/ = 0) {
  SyntheticConfig cfg;
  cfg.instances_per_category = std::move(counts);
  cfg.image_width = 64;
  cfg.image_height = 80;
  cfg.landmark_jitter = 0.01;
  cfg.occluded_rate = 0.1;
  cfg.invisible_rate = 0.0;
  return cfg;
}

TrainConfig experiment_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.batch_size = 8;
  cfg.epochs = 40;
  cfg.in_w = 48;
  cfg.in_h = 64;
  cfg.hidden = 96;
  cfg.seed = seed;
  return cfg;
}

// The schema default k=0.05 allows ~1.8 px of error at this synthetic scale,
// below the decoder's quantization floor, which pins every AP near zero. The
// directional experiments use a tolerance matched to the synthetic preset.
SchemaBundle tolerant_mini_schema() {
  SchemaBundle s = load_schema(kMiniSchemaPath);
  s.oks_k.assign(s.oks_k.size(), 0.2);
  return s;
}

double category_ap_of(const EvalResult& r, int category_id) {
  for (const auto& ce : r.per_category)
    if (ce.category_id == category_id) return ce.ap;
  return 0.0;
}

// ---------------------------------------------------------------------------
// Criterion 5: AP degrades monotonically with box noise
// ---------------------------------------------------------------------------

void criterion_5() {
  const auto t0 = Clock::now();
  const SchemaBundle s = tolerant_mini_schema();
  int good = 0;
  const int n_seeds = 20;
  std::ostringstream log;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    const Dataset train_ds = synth_generate(preset({{1, 8}, {2, 8}, {3, 8}}), s, 1000 + seed);
    const Dataset val_ds = synth_generate(preset({{1, 8}, {2, 8}, {3, 8}}), s, 2000 + seed);
    const TrainConfig cfg = experiment_config(seed);
    const ModelWeights w = train_universal(train_ds, s, cfg).weights;

    InferOptions opt;
    opt.in_w = cfg.in_w;
    opt.in_h = cfg.in_h;
    opt.pad_ratio = cfg.pad_ratio;

    auto ap_with = [&](const std::vector<DetectionBox>& boxes) {
      return evaluate(infer({&w}, val_ds, boxes, s, opt), val_ds.annotations, s).overall_ap;
    };
    const double ap_gt = ap_with(gt_boxes(val_ds));
    const double ap_light =
        ap_with(perturb_boxes(val_ds.annotations, 0.05, 0.0, 3000 + seed));
    const double ap_heavy =
        ap_with(perturb_boxes(val_ds.annotations, 0.15, 0.0, 3000 + seed));
    const bool ok = ap_gt - ap_light >= 0.01 && ap_light - ap_heavy >= 0.01;
    if (ok) ++good;
    log << (ok ? "" : " [seed " + std::to_string(seed) + ": " + std::to_string(ap_gt) +
                          "/" + std::to_string(ap_light) + "/" + std::to_string(ap_heavy) +
                          "]");
  }
  const double dt = seconds_since(t0);
  char detail[256];
  std::snprintf(detail, sizeof(detail), "%d/20 seeds ordered with gaps >= 0.01, %.1fs%s",
                good, dt, log.str().c_str());
  report(5, "AP: gt boxes > light jitter > heavy jitter", good >= 18 && dt <= 600.0, detail);
}

// ---------------------------------------------------------------------------
// Criterion 6: finetuning rescues the low-data category
// ---------------------------------------------------------------------------

void criterion_6() {
  const auto t0 = Clock::now();
  const SchemaBundle s = tolerant_mini_schema();
  int good = 0;
  const int n_seeds = 20;
  std::ostringstream log;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    // ~50:1 imbalance: the poor category appears 3 times in training
    const Dataset train_ds =
        synth_generate(preset({{1, 150}, {2, 150}, {3, 3}}), s, 4000 + seed);
    const Dataset val_ds =
        synth_generate(preset({{1, 5}, {2, 5}, {3, 20}}), s, 5000 + seed);

    TrainConfig cfg = experiment_config(seed);
    cfg.epochs = 12;
    const ModelWeights universal = train_universal(train_ds, s, cfg).weights;

    TrainConfig ft = cfg;
    ft.epochs = 200;
    const ModelWeights specialist =
        finetune_category(universal, train_ds, s, 3, ft).weights;

    InferOptions opt;
    opt.in_w = cfg.in_w;
    opt.in_h = cfg.in_h;
    opt.pad_ratio = cfg.pad_ratio;
    const auto boxes = gt_boxes(val_ds);
    const auto base = infer({&universal}, val_ds, boxes, s, opt);
    std::map<int, const ModelWeights*> spec = {{3, &specialist}};
    const auto tuned = infer({&universal}, val_ds, boxes, s, opt, &spec);

    const double ap_uni = category_ap_of(evaluate(base, val_ds.annotations, s), 3);
    const double ap_ft = category_ap_of(evaluate(tuned, val_ds.annotations, s), 3);
    const bool ok = ap_ft - ap_uni >= 0.02;
    if (ok) ++good;
    log << (ok ? "" : " [seed " + std::to_string(seed) + ": " + std::to_string(ap_uni) +
                          "->" + std::to_string(ap_ft) + "]");
  }
  const double dt = seconds_since(t0);
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "%d/20 seeds gain >= 0.02 AP on the low-data category, %.1fs%s", good, dt,
                log.str().c_str());
  report(6, "per-category finetuning rescues the low-data category",
         good >= 16 && dt <= 900.0, detail);
}

// ---------------------------------------------------------------------------
// Criterion 7: aggregation does not slow convergence vs a disjoint schema
// ---------------------------------------------------------------------------

SchemaBundle disjoint_mini_schema() {
  // same categories and counts, but every landmark gets its own channel
  return parse_schema(R"({
    "categories": [
      {"id": 1, "name": "alpha", "landmark_count": 4},
      {"id": 2, "name": "beta", "landmark_count": 3},
      {"id": 3, "name": "gamma", "landmark_count": 3}
    ],
    "aggregate_count": 10,
    "aggregation": [0,1,2,3,4,5,6,7,8,9],
    "flip_pairs": []
  })");
}

int epochs_to_target(const Dataset& train_ds, const Dataset& val_ds,
                     const SchemaBundle& schema, TrainConfig cfg, int max_epochs,
                     double target, std::vector<double>* curve = nullptr) {
  // deterministic per-epoch seeding makes a fresh e-epoch run identical to the
  // first e epochs of a longer run, so prefixes can be retrained exactly
  for (int e = 1; e <= max_epochs; ++e) {
    cfg.epochs = e;
    const ModelWeights w = train_universal(train_ds, schema, cfg).weights;
    const double v = dataset_loss(w, val_ds, schema, cfg);
    if (curve) curve->push_back(v);
    if (v <= target) return e;
  }
  return max_epochs + 1;
}

double val_loss_after(const Dataset& train_ds, const Dataset& val_ds,
                      const SchemaBundle& schema, TrainConfig cfg, int epochs) {
  cfg.epochs = epochs;
  const ModelWeights w = train_universal(train_ds, schema, cfg).weights;
  return dataset_loss(w, val_ds, schema, cfg);
}

void criterion_7() {
  const auto t0 = Clock::now();
  const SchemaBundle agg_schema = load_schema(kMiniSchemaPath);
  const SchemaBundle dis_schema = disjoint_mini_schema();
  const int max_epochs = 20;
  const int n_seeds = 10;

  std::vector<double> agg_epochs, dis_epochs;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    const Dataset train_ds =
        synth_generate(preset({{1, 8}, {2, 8}, {3, 8}}), agg_schema, 6000 + seed);
    const Dataset val_ds =
        synth_generate(preset({{1, 8}, {2, 8}, {3, 8}}), agg_schema, 7000 + seed);
    // convergence is measured on the masked loss, so the lighter model is enough
    TrainConfig cfg = experiment_config(seed);
    cfg.in_w = 24;
    cfg.in_h = 32;
    cfg.hidden = 64;
    cfg.epochs = max_epochs;

    // target both runs can reach: the worse of the two final validation losses
    const double final_agg = val_loss_after(train_ds, val_ds, agg_schema, cfg, max_epochs);
    const double final_dis = val_loss_after(train_ds, val_ds, dis_schema, cfg, max_epochs);
    const double target = std::max(final_agg, final_dis);

    agg_epochs.push_back(
        epochs_to_target(train_ds, val_ds, agg_schema, cfg, max_epochs, target));
    dis_epochs.push_back(
        epochs_to_target(train_ds, val_ds, dis_schema, cfg, max_epochs, target));
  }

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  };
  const double med_agg = median(agg_epochs);
  const double med_dis = median(dis_epochs);
  const double dt = seconds_since(t0);
  const bool ok = med_agg <= 1.05 * med_dis;

  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "median epochs to shared target: aggregated %.1f vs disjoint %.1f "
                "(limit %.1f), %.1fs",
                med_agg, med_dis, 1.05 * med_dis, dt);
  report(7, "aggregated schema converges at least as fast as a disjoint one", ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical CLI reruns
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LMKIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

void criterion_8() {
  const auto t0 = Clock::now();
  const fs::path root =
      fs::temp_directory_path() / ("lmkit_accept_" + std::to_string(::getpid()));
  fs::create_directories(root);

  const fs::path synth_cfg = root / "synth.json";
  {
    std::ofstream out(synth_cfg);
    out << R"({"instances_per_category": {"1": 4, "2": 4, "3": 4},
               "image_width": 64, "image_height": 80,
               "landmark_jitter": 0.02, "seed": 5})";
  }
  const fs::path train_cfg = root / "train.json";
  {
    std::ofstream out(train_cfg);
    out << R"({"epochs": 3, "in_w": 24, "in_h": 32, "hidden": 32,
               "batch_size": 4, "lr": 0.05, "seed": 5})";
  }

  bool ran_ok = true;
  auto pipeline_into = [&](const fs::path& dir) {
    fs::create_directories(dir);
    const std::string schema = std::string("--schema ") + kMiniSchemaPath;
    ran_ok = ran_ok && run_cli("synth " + schema + " --config " + synth_cfg.string() +
                               " --out " + (dir / "data.json").string()) == 0;
    ran_ok = ran_ok &&
             run_cli("train " + schema + " --config " + train_cfg.string() + " --dataset " +
                     (dir / "data.json").string() + " --out " + (dir / "model.bin").string()) == 0;
    ran_ok = ran_ok &&
             run_cli("infer " + schema + " --config " + train_cfg.string() + " --dataset " +
                     (dir / "data.json").string() + " --weights " +
                     (dir / "model.bin").string() + " --out " + (dir / "dets.json").string()) == 0;
    ran_ok = ran_ok &&
             run_cli("eval " + schema + " --dataset " + (dir / "data.json").string() +
                     " --dets " + (dir / "dets.json").string() + " --out " +
                     (dir / "results.json").string()) == 0;
  };
  pipeline_into(root / "a");
  pipeline_into(root / "b");

  bool identical = ran_ok;
  std::string mismatch;
  for (const char* f : {"data.json", "model.bin", "dets.json", "results.json"}) {
    if (slurp(root / "a" / f) != slurp(root / "b" / f)) {
      identical = false;
      mismatch += std::string(" ") + f;
    }
  }
  fs::remove_all(root);

  const double dt = seconds_since(t0);
  char detail[200];
  std::snprintf(detail, sizeof(detail), "%s%s, %.1fs",
                !ran_ok ? "CLI run failed"
                        : (identical ? "synth/train/infer/eval reruns byte-identical"
                                     : "differs:"),
                mismatch.c_str(), dt);
  report(8, "CLI reruns are byte-identical", ran_ok && identical, detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  if (g_failures) std::printf("%d criteria FAILED\n", g_failures);
  else std::printf("all 8 criteria passed\n");
  return g_failures == 0 ? 0 : 1;
}
