#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace refineloc::cli {

// Exit codes shared by every command.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kIoError = 3;
inline constexpr int kRuntimeError = 4;

struct CommonOptions {
  std::optional<std::uint64_t> seed;  // overrides the config's root seed
  int threads = 1;
};

int cmd_synth(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
              const CommonOptions& opts, std::ostream& out, std::ostream& err);

int cmd_refine(const std::filesystem::path& config_path, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir, const CommonOptions& opts, std::ostream& out,
               std::ostream& err);

/// `split` restricts the ground truth to one split ("train", "val", "test");
/// empty means every video in the manifest. The report goes to `report_path`.
int cmd_eval(const std::filesystem::path& predictions_path, const std::filesystem::path& manifest_path,
             const std::filesystem::path& report_path, const std::string& split, std::ostream& out,
             std::ostream& err);

int cmd_ablate(const std::filesystem::path& config_path, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir, const CommonOptions& opts, std::ostream& out,
               std::ostream& err);

}  // namespace refineloc::cli
