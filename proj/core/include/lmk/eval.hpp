#pragma once
// OKS-based COCO-style keypoint average precision with per-category
// breakdown, plus the table-shaped report generators.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmk/dataset.hpp"
#include "lmk/schema.hpp"

namespace lmk {

struct KeypointDetection {
  int image_id = 0;
  int category_id = 0;
  std::vector<LocalPrediction> keypoints;  // category-local
  double score = 0.0;                      // instance score in [0,1]
};

inline constexpr double kOksAreaPadding = 0.53;

// OKS = sum_i exp(-d_i^2 / (2 s^2 k_i^2)) [v_i>0] / sum_i [v_i>0],
// with s^2 = gt box area * 0.53. Throws if no gt keypoint is labeled.
double compute_oks(const KeypointDetection& det, const InstanceAnnotation& gt,
                   const std::vector<double>& local_k, double area_sq);

// Per-local-landmark k for one category, read from the schema's aggregate-space
// constants through the aggregation map.
std::vector<double> local_oks_k(const SchemaBundle& schema, int category_id);

std::vector<double> default_oks_thresholds();  // 0.50:0.05:0.95

struct CategoryEval {
  int category_id = 0;
  double ap = 0.0;
  int n_gt = 0;
  int n_det = 0;
};

struct EvalResult {
  double overall_ap = 0.0;
  std::vector<CategoryEval> per_category;
  std::vector<double> thresholds;
  // per_threshold_pr[t] = 101 interpolated precisions on the 0:0.01:1 recall
  // grid, averaged over populated categories
  std::vector<std::vector<double>> per_threshold_pr;
};

EvalResult evaluate(const std::vector<KeypointDetection>& dets,
                    const std::vector<InstanceAnnotation>& gts,
                    const SchemaBundle& schema,
                    const std::vector<double>& thresholds = default_oks_thresholds());

// Same matching machinery with IoU in place of OKS (the AP_box column).
EvalResult evaluate_boxes(const std::vector<DetectionBox>& dets,
                          const std::vector<InstanceAnnotation>& gts,
                          const std::vector<double>& thresholds = default_oks_thresholds());

std::string eval_result_json(const EvalResult& r);

// --- Reports --------------------------------------------------------------

struct CategoryReportRow {
  int category_id = 0;
  std::string name;
  int n_train = 0;
  int n_val = 0;
  std::optional<double> ap_box;
  double ap_without_ft = 0.0;
  double ap_with_ft = 0.0;
};

struct PerCategoryReport {
  std::vector<CategoryReportRow> rows;
  CategoryReportRow all;  // aggregate row
};

PerCategoryReport report_per_category(const EvalResult& without_ft,
                                      const EvalResult& with_ft,
                                      const std::optional<EvalResult>& boxes,
                                      const SchemaBundle& schema,
                                      const std::map<int, int>& n_train,
                                      const std::map<int, int>& n_val);
std::string per_category_report_text(const PerCategoryReport& rep);
std::string per_category_report_json(const PerCategoryReport& rep);

struct AblationRun {
  std::string name;
  std::string det_source;  // "gt", "perturbed-light", ...
  std::optional<double> ap_box;
  bool aggregation = true;
  bool finetune = false;
  bool hflip_train = false;
  bool hflip_test = false;
  double ap_kps = 0.0;
};

std::string ablation_report_text(const std::vector<AblationRun>& runs);
std::string ablation_report_json(const std::vector<AblationRun>& runs);

}  // namespace lmk
