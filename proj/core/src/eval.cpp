#include "lmk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"

namespace lmk {

using nlohmann::json;

double compute_oks(const KeypointDetection& det, const InstanceAnnotation& gt,
                   const std::vector<double>& local_k, double area_sq) {
  if (det.category_id != gt.category_id)
    throw DataError("compute_oks: category mismatch");
  if (det.keypoints.size() != gt.keypoints.size() ||
      gt.keypoints.size() != local_k.size())
    throw DataError("compute_oks: keypoint count mismatch");

  double acc = 0.0;
  int labeled = 0;
  for (size_t i = 0; i < gt.keypoints.size(); ++i) {
    const auto& g = gt.keypoints[i];
    if (g.v <= 0) continue;
    ++labeled;
    const double dx = det.keypoints[i].x - g.x;
    const double dy = det.keypoints[i].y - g.y;
    acc += std::exp(-(dx * dx + dy * dy) / (2.0 * area_sq * local_k[i] * local_k[i]));
  }
  if (labeled == 0) throw DataError("compute_oks: gt has no labeled keypoints");
  return acc / labeled;
}

std::vector<double> local_oks_k(const SchemaBundle& schema, int category_id) {
  const auto& c = schema.schema.category(category_id);
  std::vector<double> k(c.landmark_count);
  for (int j = 0; j < c.landmark_count; ++j)
    k[j] = schema.oks_k[schema.agg.map[c.global_offset + j]];
  return k;
}

std::vector<double> default_oks_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
  return t;
}

// --- Generic greedy matcher + 101-point AP --------------------------------

namespace {

struct DetRef {
  int image_id = 0;
  double score = 0.0;
  size_t idx = 0;  // index into the caller's detection list
};

struct GtRef {
  int image_id = 0;
  size_t idx = 0;
};

constexpr int kRecallPoints = 101;

// precision at each 0.01 recall level; AP is their mean
std::vector<double> interpolated_precision(const std::vector<char>& tp_sorted, int n_gt) {
  std::vector<double> pr(kRecallPoints, 0.0);
  if (n_gt == 0) return pr;
  std::vector<double> recall, precision;
  int tp = 0, fp = 0;
  for (char is_tp : tp_sorted) {
    if (is_tp)
      ++tp;
    else
      ++fp;
    recall.push_back(static_cast<double>(tp) / n_gt);
    precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  // running max of precision from the right makes the envelope monotone
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  size_t j = 0;
  for (int r = 0; r < kRecallPoints; ++r) {
    const double level = r / 100.0;
    while (j < recall.size() && recall[j] < level - 1e-12) ++j;
    pr[r] = j < recall.size() ? precision[j] : 0.0;
  }
  return pr;
}

using SimilarityFn = std::function<double(size_t det_idx, size_t gt_idx)>;

EvalResult evaluate_core(const std::map<int, std::vector<DetRef>>& dets_by_cat,
                         const std::map<int, std::vector<GtRef>>& gts_by_cat,
                         const SimilarityFn& sim,
                         const std::vector<double>& thresholds) {
  EvalResult result;
  result.thresholds = thresholds;
  result.per_threshold_pr.assign(thresholds.size(), std::vector<double>(kRecallPoints, 0.0));

  std::set<int> categories;
  for (const auto& [c, _] : gts_by_cat) categories.insert(c);
  for (const auto& [c, _] : dets_by_cat) categories.insert(c);

  int populated = 0;
  for (int cat : categories) {
    const auto git = gts_by_cat.find(cat);
    const auto dit = dets_by_cat.find(cat);
    const std::vector<GtRef> no_gts;
    const std::vector<DetRef> no_dets;
    const auto& gts = git != gts_by_cat.end() ? git->second : no_gts;
    std::vector<DetRef> dets = dit != dets_by_cat.end() ? dit->second : no_dets;

    CategoryEval ce;
    ce.category_id = cat;
    ce.n_gt = static_cast<int>(gts.size());
    ce.n_det = static_cast<int>(dets.size());

    // score-descending, index-stable order, shared by matching and PR
    std::stable_sort(dets.begin(), dets.end(), [](const DetRef& a, const DetRef& b) {
      return a.score > b.score;
    });

    if (ce.n_gt == 0) {
      result.per_category.push_back(ce);
      continue;
    }
    ++populated;

    for (size_t t = 0; t < thresholds.size(); ++t) {
      const double thr = thresholds[t];
      std::vector<char> gt_matched(gts.size(), 0);
      std::vector<char> tp_sorted;
      tp_sorted.reserve(dets.size());
      for (const auto& d : dets) {
        double best = -1.0;
        int best_gt = -1;
        for (size_t g = 0; g < gts.size(); ++g) {
          if (gt_matched[g] || gts[g].image_id != d.image_id) continue;
          const double s = sim(d.idx, gts[g].idx);
          if (s > best) {
            best = s;
            best_gt = static_cast<int>(g);
          }
        }
        if (best_gt >= 0 && best >= thr) {
          gt_matched[best_gt] = 1;
          tp_sorted.push_back(1);
        } else {
          tp_sorted.push_back(0);
        }
      }
      const auto pr = interpolated_precision(tp_sorted, ce.n_gt);
      double ap_t = 0.0;
      for (int r = 0; r < kRecallPoints; ++r) {
        ap_t += pr[r];
        result.per_threshold_pr[t][r] += pr[r];
      }
      ce.ap += ap_t / kRecallPoints;
    }
    ce.ap /= thresholds.size();
    result.per_category.push_back(ce);
  }

  if (populated > 0) {
    double acc = 0.0;
    for (const auto& ce : result.per_category)
      if (ce.n_gt > 0) acc += ce.ap;
    result.overall_ap = acc / populated;
    for (auto& row : result.per_threshold_pr)
      for (double& p : row) p /= populated;
  }
  return result;
}

}  // namespace

EvalResult evaluate(const std::vector<KeypointDetection>& dets,
                    const std::vector<InstanceAnnotation>& gts,
                    const SchemaBundle& schema,
                    const std::vector<double>& thresholds) {
  if (gts.empty()) throw DataError("evaluate: no ground truth");

  std::map<int, std::vector<DetRef>> dets_by_cat;
  std::map<int, std::vector<GtRef>> gts_by_cat;
  for (size_t i = 0; i < dets.size(); ++i)
    dets_by_cat[dets[i].category_id].push_back({dets[i].image_id, dets[i].score, i});
  for (size_t i = 0; i < gts.size(); ++i) {
    const bool labeled = std::any_of(gts[i].keypoints.begin(), gts[i].keypoints.end(),
                                     [](const Keypoint& k) { return k.v > 0; });
    if (!labeled) continue;  // excluded upstream per the OKS contract
    gts_by_cat[gts[i].category_id].push_back({gts[i].image_id, i});
  }

  std::map<int, std::vector<double>> k_by_cat;
  for (const auto& [c, _] : gts_by_cat) k_by_cat[c] = local_oks_k(schema, c);

  auto sim = [&](size_t det_idx, size_t gt_idx) {
    const auto& gt = gts[gt_idx];
    return compute_oks(dets[det_idx], gt, k_by_cat.at(gt.category_id),
                       gt.bbox.area() * kOksAreaPadding);
  };
  return evaluate_core(dets_by_cat, gts_by_cat, sim, thresholds);
}

EvalResult evaluate_boxes(const std::vector<DetectionBox>& dets,
                          const std::vector<InstanceAnnotation>& gts,
                          const std::vector<double>& thresholds) {
  if (gts.empty()) throw DataError("evaluate_boxes: no ground truth");

  std::map<int, std::vector<DetRef>> dets_by_cat;
  std::map<int, std::vector<GtRef>> gts_by_cat;
  for (size_t i = 0; i < dets.size(); ++i)
    dets_by_cat[dets[i].category_id].push_back({dets[i].image_id, dets[i].score, i});
  for (size_t i = 0; i < gts.size(); ++i)
    gts_by_cat[gts[i].category_id].push_back({gts[i].image_id, i});

  auto sim = [&](size_t det_idx, size_t gt_idx) {
    return box_iou(dets[det_idx].bbox, gts[gt_idx].bbox);
  };
  return evaluate_core(dets_by_cat, gts_by_cat, sim, thresholds);
}

std::string eval_result_json(const EvalResult& r) {
  json j;
  j["overall_ap"] = r.overall_ap;
  j["per_category"] = json::array();
  for (const auto& ce : r.per_category)
    j["per_category"].push_back({{"category_id", ce.category_id},
                                 {"ap", ce.ap},
                                 {"n_gt", ce.n_gt},
                                 {"n_det", ce.n_det}});
  j["thresholds"] = r.thresholds;
  j["per_threshold_pr"] = r.per_threshold_pr;
  return j.dump(2) + "\n";
}

// --- Reports --------------------------------------------------------------

namespace {

double category_ap(const EvalResult& r, int category_id) {
  for (const auto& ce : r.per_category)
    if (ce.category_id == category_id) return ce.ap;
  return 0.0;
}

std::string fmt_ap(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

PerCategoryReport report_per_category(const EvalResult& without_ft,
                                      const EvalResult& with_ft,
                                      const std::optional<EvalResult>& boxes,
                                      const SchemaBundle& schema,
                                      const std::map<int, int>& n_train,
                                      const std::map<int, int>& n_val) {
  PerCategoryReport rep;
  int populated = 0;
  double acc_wo = 0.0, acc_w = 0.0, acc_box = 0.0;
  int total_train = 0, total_val = 0;
  for (const auto& ce : without_ft.per_category) {
    if (ce.n_gt == 0) continue;
    CategoryReportRow row;
    row.category_id = ce.category_id;
    row.name = schema.schema.has_category(ce.category_id)
                   ? schema.schema.category(ce.category_id).name
                   : std::to_string(ce.category_id);
    auto tr = n_train.find(ce.category_id);
    auto va = n_val.find(ce.category_id);
    row.n_train = tr != n_train.end() ? tr->second : 0;
    row.n_val = va != n_val.end() ? va->second : ce.n_gt;
    if (boxes) row.ap_box = category_ap(*boxes, ce.category_id);
    row.ap_without_ft = ce.ap;
    row.ap_with_ft = category_ap(with_ft, ce.category_id);
    rep.rows.push_back(row);

    ++populated;
    acc_wo += row.ap_without_ft;
    acc_w += row.ap_with_ft;
    if (row.ap_box) acc_box += *row.ap_box;
    total_train += row.n_train;
    total_val += row.n_val;
  }

  rep.all.category_id = 0;
  rep.all.name = "all";
  rep.all.n_train = total_train;
  rep.all.n_val = total_val;
  if (populated > 0) {
    rep.all.ap_without_ft = acc_wo / populated;
    rep.all.ap_with_ft = acc_w / populated;
    if (boxes) rep.all.ap_box = acc_box / populated;
  }
  return rep;
}

std::string per_category_report_text(const PerCategoryReport& rep) {
  std::ostringstream out;
  auto line = [&](const CategoryReportRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-22s %8d %8d %8s %12s %12s\n", r.name.c_str(),
                  r.n_train, r.n_val, r.ap_box ? fmt_ap(*r.ap_box).c_str() : "-",
                  fmt_ap(r.ap_without_ft).c_str(), fmt_ap(r.ap_with_ft).c_str());
    out << buf;
  };
  char hdr[256];
  std::snprintf(hdr, sizeof(hdr), "%-22s %8s %8s %8s %12s %12s\n", "category", "#train",
                "#val", "AP_box", "AP w/o ft", "AP w/ ft");
  out << hdr;
  line(rep.all);
  for (const auto& r : rep.rows) line(r);
  return out.str();
}

std::string per_category_report_json(const PerCategoryReport& rep) {
  json j;
  auto row_json = [](const CategoryReportRow& r) {
    json jr = {{"category_id", r.category_id},
               {"name", r.name},
               {"n_train", r.n_train},
               {"n_val", r.n_val},
               {"ap_without_ft", r.ap_without_ft},
               {"ap_with_ft", r.ap_with_ft}};
    if (r.ap_box) jr["ap_box"] = *r.ap_box;
    return jr;
  };
  j["all"] = row_json(rep.all);
  j["rows"] = json::array();
  for (const auto& r : rep.rows) j["rows"].push_back(row_json(r));
  return j.dump(2) + "\n";
}

std::string ablation_report_text(const std::vector<AblationRun>& runs) {
  std::ostringstream out;
  auto row = [&](const std::string& label, auto value_of) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-14s", label.c_str());
    out << buf;
    for (const auto& r : runs) {
      std::snprintf(buf, sizeof(buf), " %12s", value_of(r).c_str());
      out << buf;
    }
    out << "\n";
  };
  auto check = [](bool b) { return std::string(b ? "x" : ""); };
  row("run", [](const AblationRun& r) { return r.name; });
  row("det source", [](const AblationRun& r) { return r.det_source; });
  row("AP_box", [](const AblationRun& r) {
    return r.ap_box ? fmt_ap(*r.ap_box) : std::string("-");
  });
  row("aggregation", [&](const AblationRun& r) { return check(r.aggregation); });
  row("finetune", [&](const AblationRun& r) { return check(r.finetune); });
  row("hflip train", [&](const AblationRun& r) { return check(r.hflip_train); });
  row("hflip test", [&](const AblationRun& r) { return check(r.hflip_test); });
  row("AP_kps", [](const AblationRun& r) { return fmt_ap(r.ap_kps); });
  return out.str();
}

std::string ablation_report_json(const std::vector<AblationRun>& runs) {
  json j = json::array();
  for (const auto& r : runs) {
    json jr = {{"name", r.name},
               {"det_source", r.det_source},
               {"aggregation", r.aggregation},
               {"finetune", r.finetune},
               {"hflip_train", r.hflip_train},
               {"hflip_test", r.hflip_test},
               {"ap_kps", r.ap_kps}};
    if (r.ap_box) jr["ap_box"] = *r.ap_box;
    j.push_back(std::move(jr));
  }
  return j.dump(2) + "\n";
}

}  // namespace lmk
