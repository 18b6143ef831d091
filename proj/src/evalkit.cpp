#include "refineloc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "refineloc/errors.hpp"

namespace refineloc {

using nlohmann::json;

double tiou(Interval a, Interval b) {
  const double a0 = a.start, a1 = a.end + 1.0;
  const double b0 = b.start, b1 = b.end + 1.0;
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  if (inter <= 0.0) return 0.0;
  const double uni = (a1 - a0) + (b1 - b0) - inter;
  return inter / uni;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

namespace {

bool ranks_before(const SegmentPrediction& a, const SegmentPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  return a.start < b.start;
}

std::vector<const SegmentPrediction*> ranked(const std::vector<SegmentPrediction>& preds) {
  std::vector<const SegmentPrediction*> order;
  order.reserve(preds.size());
  for (const auto& p : preds) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return ranks_before(*a, *b); });
  return order;
}

// Ground truth of one class grouped by video, with matched flags.
class Matcher {
 public:
  explicit Matcher(const std::vector<GtInstance>& gt) {
    for (const auto& g : gt) by_video_[g.video_id].push_back({g.seg, false});
  }

  // Returns true and marks the gt on a match.
  bool match(const SegmentPrediction& p, double threshold) {
    auto it = by_video_.find(p.video_id);
    if (it == by_video_.end()) return false;
    Entry* best = nullptr;
    double best_iou = -1.0;
    for (auto& e : it->second) {
      if (e.matched) continue;
      const double iou = tiou({p.start, p.end}, e.seg);
      if (iou >= threshold && iou > best_iou) {
        best = &e;
        best_iou = iou;
      }
    }
    if (!best) return false;
    best->matched = true;
    return true;
  }

  // Highest tIoU with any gt of this class in the video, matched or not.
  double max_iou(const SegmentPrediction& p, bool matched_only) const {
    auto it = by_video_.find(p.video_id);
    if (it == by_video_.end()) return 0.0;
    double best = 0.0;
    for (const auto& e : it->second) {
      if (matched_only && !e.matched) continue;
      best = std::max(best, tiou({p.start, p.end}, e.seg));
    }
    return best;
  }

 private:
  struct Entry {
    Interval seg;
    bool matched;
  };
  std::unordered_map<std::string, std::vector<Entry>> by_video_;
};

}  // namespace

double average_precision(const std::vector<SegmentPrediction>& predictions,
                         const std::vector<GtInstance>& gt, double threshold) {
  if (gt.empty()) return 0.0;
  Matcher matcher(gt);
  const auto order = ranked(predictions);
  std::vector<double> precision, recall;
  int tp = 0;
  int fp = 0;
  for (const auto* p : order) {
    (matcher.match(*p, threshold) ? tp : fp)++;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt.size()));
  }
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double EvalReport::map_at(double t) const {
  if (thresholds.empty()) return 0.0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (std::abs(thresholds[i] - t) < std::abs(thresholds[best] - t)) best = i;
  }
  return map_per_threshold[best];
}

EvalReport evaluate(const std::vector<SegmentPrediction>& predictions,
                    const std::vector<VideoRecord>& videos, int num_classes,
                    const std::vector<double>& thresholds) {
  std::vector<std::vector<GtInstance>> gt(num_classes);
  std::set<std::string> ids;
  for (const auto& v : videos) {
    ids.insert(v.id);
    for (const auto& g : v.gt_segments) {
      if (g.class_id < 0 || g.class_id >= num_classes) {
        throw SchemaError("video " + v.id + ": gt class_id " + std::to_string(g.class_id) + " out of range");
      }
      gt[g.class_id].push_back({v.id, {g.start, g.end}});
    }
  }
  std::vector<std::vector<SegmentPrediction>> by_class(num_classes);
  for (const auto& p : predictions) {
    if (!ids.count(p.video_id)) throw SchemaError("prediction for unknown video " + p.video_id);
    if (p.class_id < 0 || p.class_id >= num_classes) {
      throw SchemaError("prediction for " + p.video_id + " has class_id " + std::to_string(p.class_id) +
                        " out of range");
    }
    by_class[p.class_id].push_back(p);
  }

  EvalReport r;
  r.thresholds = thresholds;
  for (int c = 0; c < num_classes; ++c) {
    if (!gt[c].empty()) r.classes.push_back(c);
  }
  if (r.classes.empty()) throw SchemaError("no ground-truth segments to evaluate against");

  r.map_per_threshold.assign(thresholds.size(), 0.0);
  for (int c : r.classes) {
    auto& aps = r.per_class_ap[c];
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      aps.push_back(average_precision(by_class[c], gt[c], thresholds[k]));
      r.map_per_threshold[k] += aps.back();
    }
  }
  for (auto& m : r.map_per_threshold) m /= static_cast<double>(r.classes.size());
  double sum = 0.0;
  for (double m : r.map_per_threshold) sum += m;
  r.average_map = thresholds.empty() ? 0.0 : sum / static_cast<double>(thresholds.size());

  // Error breakdown at a fixed threshold, predictions in global rank order.
  std::vector<Matcher> matchers;
  matchers.reserve(num_classes);
  for (int c = 0; c < num_classes; ++c) matchers.emplace_back(gt[c]);
  auto& eb = r.error_breakdown;
  const double thr = kBreakdownThreshold;
  for (const auto* p : ranked(predictions)) {
    auto& same = matchers[p->class_id];
    if (same.match(*p, thr)) {
      ++eb.true_positive;
      continue;
    }
    if (same.max_iou(*p, true) >= thr) {
      ++eb.double_detection;
      continue;
    }
    if (same.max_iou(*p, false) > 0.0) {
      ++eb.localization;
      continue;
    }
    double other_iou = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      if (c != p->class_id) other_iou = std::max(other_iou, matchers[c].max_iou(*p, false));
    }
    if (other_iou >= thr) {
      ++eb.confusion;
    } else if (other_iou == 0.0) {
      ++eb.background;
    } else {
      ++eb.other;
    }
  }
  return r;
}

EvalReport evaluate(const std::vector<SegmentPrediction>& predictions, const DatasetManifest& manifest,
                    const std::vector<double>& thresholds) {
  return evaluate(predictions, manifest.videos, manifest.N, thresholds);
}

std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

std::string report_to_json_string(const EvalReport& r) {
  json j;
  j["thresholds"] = r.thresholds;
  j["average_map"] = r.average_map;
  j["map_per_threshold"] = json::object();
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    j["map_per_threshold"][threshold_key(r.thresholds[k])] = r.map_per_threshold[k];
  }
  j["per_class_ap"] = json::object();
  for (const auto& [c, aps] : r.per_class_ap) {
    json jc = json::object();
    for (std::size_t k = 0; k < r.thresholds.size(); ++k) jc[threshold_key(r.thresholds[k])] = aps[k];
    j["per_class_ap"][std::to_string(c)] = jc;
  }
  const auto& e = r.error_breakdown;
  j["error_breakdown"] = {{"true_positive", e.true_positive}, {"localization", e.localization},
                          {"confusion", e.confusion},         {"background", e.background},
                          {"double_detection", e.double_detection}, {"other", e.other}};
  return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << report_to_json_string(report);
  if (!out) throw IoError("short write to " + path.string());
}

std::string report_to_csv(const EvalReport& r) {
  std::string s = "threshold,mAP\n";
  char buf[64];
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%s,%.6f\n", threshold_key(r.thresholds[k]).c_str(), r.map_per_threshold[k]);
    s += buf;
  }
  return s;
}

}  // namespace refineloc
