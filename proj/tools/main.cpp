// lmkit command line: synthetic data, training, two-stage inference and
// evaluation for the aggregated-landmark detector.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lmk/dataset.hpp"
#include "lmk/eval.hpp"
#include "lmk/heatmap.hpp"
#include "lmk/model.hpp"
#include "lmk/pipeline.hpp"
#include "lmk/schema.hpp"
#include "lmk/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw lmk::DataError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw lmk::DataError(path + ": " + e.what());
  }
  return j;
}

lmk::TrainConfig train_config_from(const json& j) {
  lmk::TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.hflip_prob = j.value("hflip_prob", c.hflip_prob);
  c.seed = j.value("seed", c.seed);
  c.sigma = j.value("sigma", c.sigma);
  c.in_w = j.value("in_w", c.in_w);
  c.in_h = j.value("in_h", c.in_h);
  c.hidden = j.value("hidden", c.hidden);
  c.pad_ratio = j.value("pad_ratio", c.pad_ratio);
  c.finetune_lr_scale = j.value("finetune_lr_scale", c.finetune_lr_scale);
  return c;
}

json train_config_json(const lmk::TrainConfig& c) {
  return json{{"lr", c.lr},
              {"momentum", c.momentum},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"hflip_prob", c.hflip_prob},
              {"seed", c.seed},
              {"sigma", c.sigma},
              {"in_w", c.in_w},
              {"in_h", c.in_h},
              {"hidden", c.hidden},
              {"pad_ratio", c.pad_ratio},
              {"finetune_lr_scale", c.finetune_lr_scale}};
}

lmk::SyntheticConfig synth_config_from(const json& j) {
  lmk::SyntheticConfig c;
  if (j.contains("instances_per_category"))
    for (const auto& [k, v] : j["instances_per_category"].items())
      c.instances_per_category[std::stoi(k)] = v.get<int>();
  c.image_width = j.value("image_width", c.image_width);
  c.image_height = j.value("image_height", c.image_height);
  c.landmark_jitter = j.value("landmark_jitter", c.landmark_jitter);
  c.occluded_rate = j.value("occluded_rate", c.occluded_rate);
  c.invisible_rate = j.value("invisible_rate", c.invisible_rate);
  c.box_scale_min = j.value("box_scale_min", c.box_scale_min);
  c.box_scale_max = j.value("box_scale_max", c.box_scale_max);
  return c;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw lmk::DataError("cannot write " + path.string());
  out << content;
}

void write_manifest(const fs::path& out_path, const std::string& command,
                    const json& config, uint64_t seed,
                    const std::vector<fs::path>& inputs) {
  fs::path p = out_path;
  p += ".manifest.json";
  write_file(p, lmk::run_manifest_json(command, config.dump(), seed, inputs));
}

void write_train_log(const fs::path& path, const lmk::TrainResult& r) {
  json j = json::array();
  for (const auto& e : r.trace)
    j.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.lr}});
  write_file(path, j.dump(2) + "\n");
}

std::map<int, int> count_per_category(const lmk::Dataset& ds) {
  std::map<int, int> n;
  for (const auto& a : ds.annotations) ++n[a.category_id];
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aggregated clothes-landmark detection toolkit"};
  app.require_subcommand(1);

  std::string schema_path, config_path, dataset_path, out_path;
  uint64_t seed_override = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* cmd, bool needs_schema = true) {
    if (needs_schema) cmd->add_option("--schema", schema_path, "schema JSON")->required();
    cmd->add_option("--config", config_path, "config JSON");
    auto* s = cmd->add_option("--seed", seed_override, "seed override");
    s->each([&](const std::string&) { seed_set = true; });
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out_path, "output dataset JSON")->required();

  // import
  auto* import_cmd = app.add_subcommand("import", "import per-image annotation files");
  add_common(import_cmd);
  std::string import_dir;
  import_cmd->add_option("--dir", import_dir, "annotation directory")->required();
  import_cmd->add_option("--out", out_path, "output dataset JSON")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the universal model");
  add_common(train_cmd);
  train_cmd->add_option("--dataset", dataset_path, "dataset JSON")->required();
  train_cmd->add_option("--out", out_path, "output weights file")->required();
  std::string log_path;
  train_cmd->add_option("--log", log_path, "per-run JSON training log");

  // finetune
  auto* ft_cmd = app.add_subcommand("finetune", "finetune per-category specialists");
  add_common(ft_cmd);
  ft_cmd->add_option("--dataset", dataset_path, "dataset JSON")->required();
  std::string universal_path, out_dir;
  int ft_category = 0;
  ft_cmd->add_option("--universal", universal_path, "universal weights")->required();
  ft_cmd->add_option("--out-dir", out_dir, "directory for specialist weights")->required();
  ft_cmd->add_option("--category", ft_category, "single category (default: all present)");

  // perturb
  auto* perturb_cmd = app.add_subcommand("perturb", "simulate detection boxes from GT");
  add_common(perturb_cmd, false);
  perturb_cmd->add_option("--schema", schema_path, "schema JSON")->required();
  perturb_cmd->add_option("--dataset", dataset_path, "dataset JSON")->required();
  double jitter = 0.0, drop_rate = 0.0;
  perturb_cmd->add_option("--jitter", jitter, "box noise scale (fraction of size)");
  perturb_cmd->add_option("--drop", drop_rate, "box drop probability");
  perturb_cmd->add_option("--out", out_path, "output detections JSON")->required();

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "run the two-stage keypoint pipeline");
  add_common(infer_cmd);
  infer_cmd->add_option("--dataset", dataset_path, "dataset JSON")->required();
  std::vector<std::string> weight_paths, specialist_specs;
  std::string boxes_spec = "gt";
  bool hflip_tta = false;
  infer_cmd->add_option("--weights", weight_paths, "weights file (repeat to ensemble)");
  infer_cmd->add_option("--specialist", specialist_specs,
                        "category=weights mapping (repeatable)");
  infer_cmd->add_option("--boxes", boxes_spec, "'gt' or a detections JSON file");
  infer_cmd->add_flag("--hflip-tta", hflip_tta, "average with the mirrored crop");
  infer_cmd->add_option("--out", out_path, "output keypoint detections JSON")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "COCO-style OKS AP evaluation");
  add_common(eval_cmd);
  eval_cmd->add_option("--dataset", dataset_path, "dataset JSON (ground truth)")->required();
  std::string dets_path, box_dets_path;
  eval_cmd->add_option("--dets", dets_path, "keypoint detections JSON");
  eval_cmd->add_option("--box-dets", box_dets_path, "box detections JSON (IoU AP)");
  eval_cmd->add_option("--out", out_path, "results JSON")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation experiment grid");
  add_common(ablate_cmd);
  std::string train_ds_path, val_ds_path;
  ablate_cmd->add_option("--train-dataset", train_ds_path, "training dataset JSON")->required();
  ablate_cmd->add_option("--val-dataset", val_ds_path, "validation dataset JSON")->required();
  ablate_cmd->add_option("--out", out_path, "ablation report JSON")->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "render result tables");
  add_common(report_cmd);
  std::string without_ft_path, with_ft_path, box_results_path;
  report_cmd->add_option("--without-ft", without_ft_path, "results JSON, universal model")
      ->required();
  report_cmd->add_option("--with-ft", with_ft_path, "results JSON, finetuned specialists")
      ->required();
  report_cmd->add_option("--box-results", box_results_path, "box AP results JSON");
  report_cmd->add_option("--train-dataset", train_ds_path, "dataset JSON for #train column");
  report_cmd->add_option("--val-dataset", val_ds_path, "dataset JSON for #val column");
  report_cmd->add_option("--out", out_path, "report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    json cfg = load_config(config_path);
    if (seed_set) cfg["seed"] = seed_override;

    const lmk::SchemaBundle schema = lmk::load_schema(schema_path);

    if (*synth) {
      lmk::SyntheticConfig sc = synth_config_from(cfg);
      const uint64_t seed = cfg.value("seed", uint64_t{0});
      const lmk::Dataset ds = lmk::synth_generate(sc, schema, seed);
      lmk::save_dataset(ds, schema, out_path, /*with_pixels=*/true);
      write_manifest(out_path, "synth", cfg, seed, {schema_path});
    } else if (*import_cmd) {
      const lmk::Dataset ds = lmk::import_annotations(import_dir, schema);
      lmk::save_dataset(ds, schema, out_path);
      write_manifest(out_path, "import", cfg, 0, {schema_path});
    } else if (*train_cmd) {
      const lmk::TrainConfig tc = train_config_from(cfg);
      const lmk::Dataset ds = lmk::load_dataset(dataset_path, schema);
      const lmk::TrainResult r = lmk::train_universal(ds, schema, tc);
      lmk::save_weights(r.weights, out_path);
      if (!log_path.empty()) write_train_log(log_path, r);
      write_manifest(out_path, "train", train_config_json(tc), tc.seed,
                     {schema_path, dataset_path});
    } else if (*ft_cmd) {
      const lmk::TrainConfig tc = train_config_from(cfg);
      const lmk::Dataset ds = lmk::load_dataset(dataset_path, schema);
      const lmk::ModelWeights universal = lmk::load_weights(universal_path);
      fs::create_directories(out_dir);
      auto save_one = [&](int cat, const lmk::ModelWeights& w) {
        lmk::save_weights(w, fs::path(out_dir) / ("category_" + std::to_string(cat) + ".bin"));
      };
      if (ft_category != 0) {
        save_one(ft_category,
                 lmk::finetune_category(universal, ds, schema, ft_category, tc).weights);
      } else {
        const auto all = lmk::finetune_all(universal, ds, schema, tc);
        for (const auto& [cat, w] : all.specialists) save_one(cat, w);
        for (int cat : all.skipped_categories)
          std::cerr << "warning: no instances of category " << cat << ", skipped\n";
      }
      write_manifest(fs::path(out_dir) / "finetune", "finetune", train_config_json(tc),
                     tc.seed, {schema_path, dataset_path, universal_path});
    } else if (*perturb_cmd) {
      const lmk::Dataset ds = lmk::load_dataset(dataset_path, schema);
      const uint64_t seed = cfg.value("seed", uint64_t{0});
      const auto boxes = lmk::perturb_boxes(ds.annotations, jitter, drop_rate, seed);
      lmk::save_detections(boxes, out_path);
      write_manifest(out_path, "perturb",
                     json{{"jitter", jitter}, {"drop", drop_rate}, {"seed", seed}}, seed,
                     {schema_path, dataset_path});
    } else if (*infer_cmd) {
      const lmk::Dataset ds = lmk::load_dataset(dataset_path, schema);
      std::vector<lmk::ModelWeights> owned;
      for (const auto& p : weight_paths) owned.push_back(lmk::load_weights(p));
      std::vector<const lmk::ModelWeights*> models;
      for (const auto& w : owned) models.push_back(&w);

      std::vector<lmk::ModelWeights> spec_owned;
      std::map<int, const lmk::ModelWeights*> specialists;
      spec_owned.reserve(specialist_specs.size());
      for (const auto& s : specialist_specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
          throw lmk::DataError("--specialist expects category=weights, got " + s);
        const int cat = std::stoi(s.substr(0, eq));
        spec_owned.push_back(lmk::load_weights(s.substr(eq + 1)));
        specialists[cat] = &spec_owned.back();
      }

      std::vector<lmk::DetectionBox> boxes;
      std::vector<fs::path> inputs{schema_path, dataset_path};
      if (boxes_spec == "gt") {
        boxes = lmk::gt_boxes(ds);
      } else {
        boxes = lmk::load_detections(boxes_spec);
        inputs.push_back(boxes_spec);
      }

      lmk::InferOptions opt;
      opt.hflip_tta = hflip_tta;
      const lmk::TrainConfig tc = train_config_from(cfg);
      opt.in_w = tc.in_w;
      opt.in_h = tc.in_h;
      opt.pad_ratio = tc.pad_ratio;

      const auto dets = lmk::infer(models, ds, boxes, schema, opt,
                                   specialists.empty() ? nullptr : &specialists);
      lmk::save_keypoint_detections(dets, out_path);
      for (const auto& p : weight_paths) inputs.push_back(p);
      write_manifest(out_path, "infer", cfg, 0, inputs);
    } else if (*eval_cmd) {
      const lmk::Dataset ds = lmk::load_dataset(dataset_path, schema);
      lmk::EvalResult result;
      std::vector<fs::path> inputs{schema_path, dataset_path};
      if (!dets_path.empty()) {
        result = lmk::evaluate(lmk::load_keypoint_detections(dets_path), ds.annotations, schema);
        inputs.push_back(dets_path);
      } else if (!box_dets_path.empty()) {
        result = lmk::evaluate_boxes(lmk::load_detections(box_dets_path), ds.annotations);
        inputs.push_back(box_dets_path);
      } else {
        throw lmk::DataError("eval needs --dets or --box-dets");
      }
      write_file(out_path, lmk::eval_result_json(result));
      std::cout << "overall AP: " << result.overall_ap << "\n";
      write_manifest(out_path, "eval", cfg, 0, inputs);
    } else if (*ablate_cmd) {
      const lmk::Dataset train_ds = lmk::load_dataset(train_ds_path, schema);
      const lmk::Dataset val_ds = lmk::load_dataset(val_ds_path, schema);
      lmk::AblationConfig ac;
      ac.train = train_config_from(cfg.contains("train") ? cfg["train"] : cfg);
      ac.light_jitter = cfg.value("light_jitter", ac.light_jitter);
      ac.heavy_jitter = cfg.value("heavy_jitter", ac.heavy_jitter);
      ac.perturb_seed = cfg.value("perturb_seed", ac.perturb_seed);
      ac.hflip_tta = cfg.value("hflip_tta", ac.hflip_tta);
      const auto outcome = lmk::run_ablation_suite(train_ds, val_ds, schema, ac);
      write_file(out_path, outcome.report_json);
      std::cout << outcome.report_text;
      write_manifest(out_path, "ablate", cfg, ac.train.seed,
                     {schema_path, train_ds_path, val_ds_path});
    } else if (*report_cmd) {
      auto read_result = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw lmk::DataError("cannot open " + p);
        json j = json::parse(in);
        lmk::EvalResult r;
        r.overall_ap = j.at("overall_ap").get<double>();
        for (const auto& jc : j.at("per_category"))
          r.per_category.push_back({jc.at("category_id").get<int>(),
                                    jc.at("ap").get<double>(),
                                    jc.at("n_gt").get<int>(),
                                    jc.at("n_det").get<int>()});
        return r;
      };
      const lmk::EvalResult without_ft = read_result(without_ft_path);
      const lmk::EvalResult with_ft = read_result(with_ft_path);
      std::optional<lmk::EvalResult> boxes;
      if (!box_results_path.empty()) boxes = read_result(box_results_path);

      std::map<int, int> n_train, n_val;
      if (!train_ds_path.empty())
        n_train = count_per_category(lmk::load_dataset(train_ds_path, schema));
      if (!val_ds_path.empty())
        n_val = count_per_category(lmk::load_dataset(val_ds_path, schema));

      const auto rep =
          lmk::report_per_category(without_ft, with_ft, boxes, schema, n_train, n_val);
      write_file(out_path, lmk::per_category_report_json(rep));
      std::cout << lmk::per_category_report_text(rep);
      std::vector<fs::path> inputs{schema_path, without_ft_path, with_ft_path};
      if (!box_results_path.empty()) inputs.push_back(box_results_path);
      write_manifest(out_path, "report", cfg, 0, inputs);
    }
  } catch (const lmk::DivergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
