#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "refineloc/pseudo_labels.hpp"
#include "refineloc/segpred.hpp"
#include "refineloc/wstal.hpp"

namespace refineloc {

enum class GeneratorKind {
  UniformRandom,
  DistributionAware,
  ClassActivation,
  Attention,
  SegmentPrediction,
};

const char* generator_name(GeneratorKind k);
GeneratorKind parse_generator(const std::string& s);
const std::vector<GeneratorKind>& all_generators();

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::SegmentPrediction;
  // Threshold for class_activation / attention. When unset, class_activation
  // uses the video's mean of max_n Cbar[t,n] and attention uses 1/T.
  std::optional<double> threshold;
  // Foreground probability for distribution_aware.
  std::optional<double> ratio;

  void validate() const;
};

using Labels = std::vector<std::uint8_t>;

Labels gen_uniform(int T, std::uint64_t seed);
/// Throws ConfigError if ratio is absent.
Labels gen_distribution_aware(int T, std::optional<double> ratio, std::uint64_t seed);
Labels gen_class_activation(const ForwardMaps& maps, double threshold);
Labels gen_class_activation(const ForwardMaps& maps);
Labels gen_attention(const ForwardMaps& maps, double threshold);
Labels gen_attention(const ForwardMaps& maps);
/// Foreground where any prediction covers the snippet. Throws std::out_of_range
/// for predictions outside [0, T-1].
Labels gen_segment_prediction(const std::vector<SegmentPrediction>& predictions, int T);

/// Exactly round_half_up(S*T) indices chosen uniformly without replacement.
std::vector<std::uint8_t> sample_pseudo(int T, double S, std::uint64_t seed);
int sample_count(int T, double S);

/// Dispatches on spec.kind. `maps` drives the model-based generators and
/// `predictions` the segment-prediction generator.
Labels generate_labels(const GeneratorSpec& spec, const ForwardMaps& maps,
                       const std::vector<SegmentPrediction>& predictions, std::uint64_t seed);

// JSON lines: {"video_id","labels":[0/1...],"sample_mask":[0/1...]}
std::string pseudo_to_json_line(const PseudoLabels& p);
PseudoLabels pseudo_from_json_line(const std::string& line);
void write_pseudo(const std::filesystem::path& path, const std::vector<PseudoLabels>& labels);
std::vector<PseudoLabels> read_pseudo(const std::filesystem::path& path);

}  // namespace refineloc
