#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "refineloc/numcore.hpp"

namespace refineloc {

/// Inclusive snippet-index interval with a class label.
struct GroundTruthSegment {
  int start = 0;
  int end = 0;
  int class_id = 0;

  bool operator==(const GroundTruthSegment&) const = default;
};

struct VideoRecord {
  std::string id;
  int T = 0;
  std::vector<double> y;  // video-level weak label, sums to 1
  std::vector<GroundTruthSegment> gt_segments;
  std::string feature_path;  // relative to the manifest directory
  int D = 0;

  bool operator==(const VideoRecord&) const = default;
};

enum class Split { Train, Val, Test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct DatasetManifest {
  std::string name;
  int N = 0;
  int D = 0;
  std::vector<std::string> class_names;
  std::vector<VideoRecord> videos;
  std::map<std::string, Split> split;

  /// Directory that feature paths are resolved against. Not serialized.
  std::filesystem::path root;

  std::vector<std::size_t> indices_of(Split s) const;
  const VideoRecord* find(const std::string& id) const;
};

/// Manifest plus features held in memory, index-aligned with manifest.videos.
struct Dataset {
  DatasetManifest manifest;
  std::vector<Matrix> features;
};

struct SyntheticConfig {
  std::string name = "synthetic";
  int N = 5;
  int D = 32;
  int video_count = 300;
  std::pair<int, int> T_range{40, 80};
  std::pair<int, int> segments_per_video_range{1, 3};
  std::pair<int, int> segment_len_range{5, 15};
  double noise_sigma = 1.0;
  double prototype_scale = 1.0;
  std::uint64_t seed = 0;
  double val_fraction = 1.0 / 6.0;
  double test_fraction = 1.0 / 6.0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Samples prototypes, plants segments and draws features in memory.
/// Features are rounded through f32 so they equal what a reload yields.
Dataset synthesize(const SyntheticConfig& cfg);

/// synthesize() then write manifest.json and features/ under out_dir.
DatasetManifest generate_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& out_dir);

// Feature files: raw little-endian f32, row-major T x D, no header.
void write_features(const std::filesystem::path& path, const Matrix& features);
Matrix read_features(const std::filesystem::path& path, int T, int D);
Matrix load_features(const VideoRecord& record, const std::filesystem::path& root);

/// Checks every record invariant; the message carries the offending video id.
/// With check_files, also stats each feature file for byte length 4*T*D.
void validate_manifest(const DatasetManifest& manifest, bool check_files);

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string manifest_to_json_string(const DatasetManifest& manifest);
DatasetManifest manifest_from_json_string(const std::string& text);

/// Loads the manifest and every feature file.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Deterministic shuffle; test gets floor(test*n), val gets floor(val*n), train the rest.
void split_dataset(DatasetManifest& manifest, double val_fraction, double test_fraction,
                   std::uint64_t seed);

/// Fraction of the video's snippets covered by its ground-truth segments.
double gt_coverage(const VideoRecord& record);

/// Per-snippet 0/1 foreground indicator from the ground-truth segments.
std::vector<std::uint8_t> gt_foreground(const VideoRecord& record);

}  // namespace refineloc
