#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "refineloc/wstal.hpp"

namespace refineloc {

struct PostprocConfig {
  double alpha_A = 0.5;
  double alpha_C = 0.005;
  int top_k = 2;
  int gap_tolerance = 1;
  int inflation = 2;

  void validate() const;
};

/// Inclusive snippet interval [start, end].
struct Interval {
  int start = 0;
  int end = 0;
  bool operator==(const Interval&) const = default;
};

struct SegmentPrediction {
  std::string video_id;
  int start = 0;
  int end = 0;
  int class_id = 0;
  double score = 0.0;

  bool operator==(const SegmentPrediction&) const = default;
};

/// Snippets whose background attention is <= alpha_A (equality keeps).
std::vector<std::uint8_t> foreground_mask(const ForwardMaps& maps, double alpha_A);

/// Snippets whose class-n probability is >= alpha_C (equality keeps).
std::vector<std::uint8_t> class_mask(const ForwardMaps& maps, int n, double alpha_C);

/// Runs of kept snippets; kept snippets separated by at most gap_tolerance
/// dropped snippets join the same run. Endpoints are always kept snippets.
std::vector<Interval> group_segments(const std::vector<std::uint8_t>& mask, int gap_tolerance = 1);

/// Mean of (Atime + Cbar[:, n]) over the segment plus yhat[n].
double score_segment(const ForwardMaps& maps, Interval seg, int n);

Interval inflate(Interval seg, int inflation, int T);

/// Class indices of the k largest entries, ties to the lower index.
std::vector<int> top_k_classes(const std::vector<double>& yhat, int k);

std::vector<SegmentPrediction> predict_segments(const ForwardMaps& maps, const PostprocConfig& cfg,
                                                const std::string& video_id = {});

// JSON lines: {"video_id","start","end","class_id","score"}
std::string prediction_to_json_line(const SegmentPrediction& p);
SegmentPrediction prediction_from_json_line(const std::string& line);
void write_predictions(const std::filesystem::path& path, const std::vector<SegmentPrediction>& preds);
std::vector<SegmentPrediction> read_predictions(const std::filesystem::path& path);

}  // namespace refineloc
