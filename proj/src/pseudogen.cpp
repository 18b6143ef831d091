#include "refineloc/pseudogen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "refineloc/errors.hpp"

namespace refineloc {

using nlohmann::json;

const char* generator_name(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::UniformRandom: return "uniform_random";
    case GeneratorKind::DistributionAware: return "distribution_aware";
    case GeneratorKind::ClassActivation: return "class_activation";
    case GeneratorKind::Attention: return "attention";
    case GeneratorKind::SegmentPrediction: return "segment_prediction";
  }
  return "segment_prediction";
}

GeneratorKind parse_generator(const std::string& s) {
  for (auto k : all_generators()) {
    if (s == generator_name(k)) return k;
  }
  throw ConfigError("unknown generator '" + s + "'");
}

const std::vector<GeneratorKind>& all_generators() {
  static const std::vector<GeneratorKind> kinds{
      GeneratorKind::UniformRandom, GeneratorKind::DistributionAware, GeneratorKind::ClassActivation,
      GeneratorKind::Attention, GeneratorKind::SegmentPrediction};
  return kinds;
}

void GeneratorSpec::validate() const {
  if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0)) {
    throw ConfigError("generator: threshold must be in [0,1]");
  }
  if (ratio && !(*ratio >= 0.0 && *ratio <= 1.0)) throw ConfigError("generator: ratio must be in [0,1]");
}

namespace {

Labels bernoulli(int T, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Labels out(std::max(T, 0));
  for (auto& l : out) l = u(rng) < p ? kForeground : kBackground;
  return out;
}

}  // namespace

Labels gen_uniform(int T, std::uint64_t seed) { return bernoulli(T, 0.5, seed); }

Labels gen_distribution_aware(int T, std::optional<double> ratio, std::uint64_t seed) {
  if (!ratio) throw ConfigError("distribution_aware generator needs a foreground ratio");
  if (!(*ratio >= 0.0 && *ratio <= 1.0)) throw ConfigError("distribution_aware ratio must be in [0,1]");
  return bernoulli(T, *ratio, seed);
}

Labels gen_class_activation(const ForwardMaps& maps, double threshold) {
  Labels out(maps.T());
  for (std::size_t t = 0; t < out.size(); ++t) {
    auto row = maps.Cbar.row(t);
    out[t] = *std::max_element(row.begin(), row.end()) >= threshold ? kForeground : kBackground;
  }
  return out;
}

Labels gen_class_activation(const ForwardMaps& maps) {
  if (maps.T() == 0) return {};
  double mean = 0.0;
  for (std::size_t t = 0; t < maps.T(); ++t) {
    auto row = maps.Cbar.row(t);
    mean += *std::max_element(row.begin(), row.end());
  }
  return gen_class_activation(maps, mean / static_cast<double>(maps.T()));
}

Labels gen_attention(const ForwardMaps& maps, double threshold) {
  Labels out(maps.Atime.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = maps.Atime[t] >= threshold ? kForeground : kBackground;
  return out;
}

Labels gen_attention(const ForwardMaps& maps) {
  if (maps.Atime.empty()) return {};
  return gen_attention(maps, 1.0 / static_cast<double>(maps.Atime.size()));
}

Labels gen_segment_prediction(const std::vector<SegmentPrediction>& predictions, int T) {
  Labels out(std::max(T, 0), kBackground);
  for (const auto& p : predictions) {
    if (p.start < 0 || p.end > T - 1 || p.start > p.end) {
      throw std::out_of_range("segment prediction (" + std::to_string(p.start) + "," +
                              std::to_string(p.end) + ") outside [0," + std::to_string(T - 1) + "]");
    }
    std::fill(out.begin() + p.start, out.begin() + p.end + 1, kForeground);
  }
  return out;
}

int sample_count(int T, double S) {
  return static_cast<int>(std::floor(S * static_cast<double>(T) + 0.5));
}

std::vector<std::uint8_t> sample_pseudo(int T, double S, std::uint64_t seed) {
  if (!(S >= 0.0 && S <= 1.0)) throw ConfigError("sample fraction S must be in [0,1]");
  std::vector<std::uint8_t> mask(std::max(T, 0), 0);
  const int k = std::min(sample_count(T, S), T);
  if (k <= 0) return mask;
  std::vector<int> idx(T);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int i = 0; i < k; ++i) mask[idx[i]] = 1;
  return mask;
}

Labels generate_labels(const GeneratorSpec& spec, const ForwardMaps& maps,
                       const std::vector<SegmentPrediction>& predictions, std::uint64_t seed) {
  const int T = static_cast<int>(maps.T());
  switch (spec.kind) {
    case GeneratorKind::UniformRandom: return gen_uniform(T, seed);
    case GeneratorKind::DistributionAware: return gen_distribution_aware(T, spec.ratio, seed);
    case GeneratorKind::ClassActivation:
      return spec.threshold ? gen_class_activation(maps, *spec.threshold) : gen_class_activation(maps);
    case GeneratorKind::Attention:
      return spec.threshold ? gen_attention(maps, *spec.threshold) : gen_attention(maps);
    case GeneratorKind::SegmentPrediction: return gen_segment_prediction(predictions, T);
  }
  return {};
}

std::string pseudo_to_json_line(const PseudoLabels& p) {
  json j;
  j["video_id"] = p.video_id;
  j["labels"] = p.labels;
  j["sample_mask"] = p.sample_mask;
  return j.dump();
}

PseudoLabels pseudo_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    PseudoLabels p;
    p.video_id = j.at("video_id").get<std::string>();
    p.labels = j.at("labels").get<std::vector<std::uint8_t>>();
    p.sample_mask = j.at("sample_mask").get<std::vector<std::uint8_t>>();
    if (p.labels.size() != p.sample_mask.size()) throw SchemaError("pseudo line: length mismatch");
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("pseudo line: ") + e.what());
  }
}

void write_pseudo(const std::filesystem::path& path, const std::vector<PseudoLabels>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& p : labels) out << pseudo_to_json_line(p) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<PseudoLabels> read_pseudo(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PseudoLabels> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(pseudo_from_json_line(line));
  }
  return out;
}

}  // namespace refineloc
