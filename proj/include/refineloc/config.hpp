#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "refineloc/dataio.hpp"
#include "refineloc/pseudogen.hpp"
#include "refineloc/refine.hpp"

namespace refineloc {

/// Resolved contents of a run configuration file.
///
/// Layout (every key optional):
///   {
///     "seed": 0,
///     "synth":    {"name","N","D","video_count","T_range":[lo,hi],
///                  "segments_per_video_range":[lo,hi],"segment_len_range":[lo,hi],
///                  "noise_sigma","prototype_scale","val_fraction","test_fraction"},
///     "data":     {"manifest": "manifest.json"},
///     "model":    {"L","attention_variant"},
///     "postproc": {"alpha_A","alpha_C","top_k","gap_tolerance","inflation"},
///     "refine":   {"eta_max","beta","generator","generator_threshold","generator_ratio",
///                  "S","epochs_per_iter","lr","lr_decay","plateau_patience","warm_start"},
///     "eval":     {"thresholds":[...]},
///     "ablation": {"generators":[...],"betas":[...]}
///   }
///
/// Sub-seeds: synth = derive_seed(seed,"synth"), refine = derive_seed(seed,"refine"),
/// model init = derive_seed(seed,"init").
struct RunConfig {
  std::uint64_t seed = 0;
  SyntheticConfig synth;
  std::string manifest_name = "manifest.json";
  RefineConfig refine;
  std::vector<GeneratorKind> ablation_generators = all_generators();
  std::vector<double> ablation_betas{0.0, 1.0, 2.0, 4.0, 8.0};

  /// Re-derives every sub-seed from `root`.
  void set_seed(std::uint64_t root);
};

/// Parses and validates. Unknown keys and wrong types raise SchemaError
/// naming the key path; malformed JSON raises SchemaError with the parse
/// location; out-of-range values raise ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration, every field present.
std::string run_config_to_json_string(const RunConfig& cfg);

}  // namespace refineloc
