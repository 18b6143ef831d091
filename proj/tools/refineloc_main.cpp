#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "refineloc/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = refineloc::cli;

  CLI::App app{"Weakly-supervised temporal action localization with iterative pseudo-label refinement"};
  app.require_subcommand(1);

  std::string config, out_dir, data_dir, predictions, manifest, report, split;
  std::optional<std::uint64_t> seed;
  int threads = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override the config's root seed");
    sub->add_option("--threads", threads, "Worker threads for forward fan-out")->check(CLI::PositiveNumber);
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("-c,--config", config, "Run configuration (JSON)")->required();
  synth->add_option("-o,--out", out_dir, "Output dataset directory")->required();
  add_common(synth);

  auto* refine = app.add_subcommand("refine", "Train the base model and run refinement iterations");
  refine->add_option("-c,--config", config, "Run configuration (JSON)")->required();
  refine->add_option("-d,--data", data_dir, "Dataset directory holding the manifest")->required();
  refine->add_option("-o,--out", out_dir, "Run output directory")->required();
  add_common(refine);

  auto* eval = app.add_subcommand("eval", "Evaluate a predictions file against a manifest");
  eval->add_option("-p,--predictions", predictions, "Predictions (JSON lines)")->required();
  eval->add_option("-m,--manifest", manifest, "Dataset manifest")->required();
  eval->add_option("-o,--out", report, "Report path (default report.json)");
  eval->add_option("--split", split, "Only evaluate videos of this split")
      ->check(CLI::IsMember({"train", "val", "test"}));

  auto* ablate = app.add_subcommand("ablate", "Run the generator x beta grid");
  ablate->add_option("-c,--config", config, "Run configuration (JSON)")->required();
  ablate->add_option("-d,--data", data_dir, "Dataset directory holding the manifest")->required();
  ablate->add_option("-o,--out", out_dir, "Output directory for grid.csv")->required();
  add_common(ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kConfigError;
  }

  const cli::CommonOptions opts{seed, threads};
  if (synth->parsed()) return cli::cmd_synth(config, out_dir, opts, std::cout, std::cerr);
  if (refine->parsed()) return cli::cmd_refine(config, data_dir, out_dir, opts, std::cout, std::cerr);
  if (eval->parsed()) {
    return cli::cmd_eval(predictions, manifest, report.empty() ? "report.json" : report, split, std::cout,
                         std::cerr);
  }
  return cli::cmd_ablate(config, data_dir, out_dir, opts, std::cout, std::cerr);
}
