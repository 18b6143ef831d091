#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "refineloc/dataio.hpp"
#include "refineloc/segpred.hpp"

namespace refineloc {

/// Intersection over union of the continuous extents [start, end + 1).
double tiou(Interval a, Interval b);

struct GtInstance {
  std::string video_id;
  Interval seg;
};

/// 0.50, 0.55, ..., 0.95
std::vector<double> default_thresholds();

/// All-point interpolated AP for one class. Predictions are ranked by score
/// (ties: video_id, then start ascending) and each is greedily matched to the
/// unmatched same-video ground truth with the highest tIoU >= threshold.
double average_precision(const std::vector<SegmentPrediction>& predictions,
                         const std::vector<GtInstance>& gt, double threshold);

struct ErrorBreakdown {
  int true_positive = 0;
  int localization = 0;
  int confusion = 0;
  int background = 0;
  int double_detection = 0;
  // Partial overlap (below threshold) with other-class ground truth only.
  int other = 0;

  int total() const {
    return true_positive + localization + confusion + background + double_detection + other;
  }
  bool operator==(const ErrorBreakdown&) const = default;
};

inline constexpr double kBreakdownThreshold = 0.5;

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<int> classes;                          // classes with >= 1 gt instance
  std::map<int, std::vector<double>> per_class_ap;   // class -> AP per threshold
  std::vector<double> map_per_threshold;
  double average_map = 0.0;
  ErrorBreakdown error_breakdown;

  /// mAP at the threshold closest to t.
  double map_at(double t) const;
};

/// Evaluates predictions against the ground truth of `videos`. Throws
/// SchemaError when there is no ground truth at all or when a prediction
/// refers to a video outside `videos` or a class outside [0, num_classes).
EvalReport evaluate(const std::vector<SegmentPrediction>& predictions,
                    const std::vector<VideoRecord>& videos, int num_classes,
                    const std::vector<double>& thresholds = default_thresholds());

EvalReport evaluate(const std::vector<SegmentPrediction>& predictions, const DatasetManifest& manifest,
                    const std::vector<double>& thresholds = default_thresholds());

/// Threshold key used in JSON and CSV ("0.50").
std::string threshold_key(double t);

std::string report_to_json_string(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);
/// CSV with columns threshold,mAP.
std::string report_to_csv(const EvalReport& report);

}  // namespace refineloc
