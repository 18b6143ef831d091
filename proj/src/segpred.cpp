#include "refineloc/segpred.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "refineloc/errors.hpp"

namespace refineloc {

using nlohmann::json;

void PostprocConfig::validate() const {
  if (!(alpha_A >= 0.0 && alpha_A <= 1.0)) throw ConfigError("postproc: alpha_A must be in [0,1]");
  if (top_k < 1) throw ConfigError("postproc: top_k must be >= 1");
  if (gap_tolerance < 0) throw ConfigError("postproc: gap_tolerance must be >= 0");
  if (inflation < 0) throw ConfigError("postproc: inflation must be >= 0");
}

std::vector<std::uint8_t> foreground_mask(const ForwardMaps& maps, double alpha_A) {
  std::vector<std::uint8_t> mask(maps.T());
  for (std::size_t t = 0; t < mask.size(); ++t) mask[t] = maps.Abf(t, kBgColumn) <= alpha_A;
  return mask;
}

std::vector<std::uint8_t> class_mask(const ForwardMaps& maps, int n, double alpha_C) {
  std::vector<std::uint8_t> mask(maps.T());
  for (std::size_t t = 0; t < mask.size(); ++t) mask[t] = maps.Cbar(t, n) >= alpha_C;
  return mask;
}

std::vector<Interval> group_segments(const std::vector<std::uint8_t>& mask, int gap_tolerance) {
  std::vector<Interval> out;
  int last_kept = -1;
  for (int t = 0; t < static_cast<int>(mask.size()); ++t) {
    if (!mask[t]) continue;
    if (last_kept >= 0 && t - last_kept - 1 <= gap_tolerance) {
      out.back().end = t;
    } else {
      out.push_back({t, t});
    }
    last_kept = t;
  }
  return out;
}

double score_segment(const ForwardMaps& maps, Interval seg, int n) {
  double sum = 0.0;
  for (int t = seg.start; t <= seg.end; ++t) sum += maps.Atime[t] + maps.Cbar(t, n);
  return sum / (seg.end - seg.start + 1) + maps.yhat[n];
}

Interval inflate(Interval seg, int inflation, int T) {
  return {std::max(0, seg.start - inflation), std::min(T - 1, seg.end + inflation)};
}

std::vector<int> top_k_classes(const std::vector<double>& yhat, int k) {
  std::vector<int> idx(yhat.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return yhat[a] > yhat[b]; });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(k, 0))));
  return idx;
}

std::vector<SegmentPrediction> predict_segments(const ForwardMaps& maps, const PostprocConfig& cfg,
                                                const std::string& video_id) {
  const int T = static_cast<int>(maps.T());
  const auto fg = foreground_mask(maps, cfg.alpha_A);
  std::vector<SegmentPrediction> out;
  for (int n : top_k_classes(maps.yhat, cfg.top_k)) {
    auto mask = class_mask(maps, n, cfg.alpha_C);
    for (int t = 0; t < T; ++t) mask[t] = mask[t] && fg[t];
    for (Interval seg : group_segments(mask, cfg.gap_tolerance)) {
      const double s = score_segment(maps, seg, n);
      const Interval wide = inflate(seg, cfg.inflation, T);
      out.push_back({video_id, wide.start, wide.end, n, s});
    }
  }
  return out;
}

std::string prediction_to_json_line(const SegmentPrediction& p) {
  json j;
  j["video_id"] = p.video_id;
  j["start"] = p.start;
  j["end"] = p.end;
  j["class_id"] = p.class_id;
  j["score"] = p.score;
  return j.dump();
}

SegmentPrediction prediction_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("prediction line: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("prediction line: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> keys{"video_id", "start", "end", "class_id", "score"};
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
      throw SchemaError("prediction line: unknown key '" + it.key() + "'");
    }
  }
  SegmentPrediction p;
  try {
    p.video_id = j.at("video_id").get<std::string>();
    p.start = j.at("start").get<int>();
    p.end = j.at("end").get<int>();
    p.class_id = j.at("class_id").get<int>();
    p.score = j.at("score").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("prediction line: ") + e.what());
  }
  if (p.start < 0 || p.start > p.end) {
    throw SchemaError("prediction line: invalid extent (" + std::to_string(p.start) + "," +
                      std::to_string(p.end) + ") for " + p.video_id);
  }
  return p;
}

void write_predictions(const std::filesystem::path& path, const std::vector<SegmentPrediction>& preds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& p : preds) out << prediction_to_json_line(p) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<SegmentPrediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::vector<SegmentPrediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json_line(line));
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace refineloc
