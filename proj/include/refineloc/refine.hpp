#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "refineloc/dataio.hpp"
#include "refineloc/evalkit.hpp"
#include "refineloc/pseudogen.hpp"
#include "refineloc/segpred.hpp"
#include "refineloc/wstal.hpp"

namespace refineloc {

struct RefineConfig {
  int eta_max = 3;
  double beta = 4.0;
  GeneratorSpec generator;
  double S = 0.8;
  int epochs_per_iter = 50;
  double lr = 1e-4;
  double lr_decay = 0.9;
  int plateau_patience = 5;
  std::uint64_t seed = 0;
  PostprocConfig postproc;
  ModelConfig model;  // D and N of 0 are taken from the dataset
  bool warm_start = false;
  int threads = 1;
  std::vector<double> eval_thresholds = default_thresholds();

  void validate() const;
};

/// Pseudo labels index-aligned with Dataset::videos. Entries for videos that
/// received no labels (test split) have empty vectors.
using PseudoSet = std::vector<PseudoLabels>;

struct TrainResult {
  Model model;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double train_loss = 0.0;          // mean train loss of the selected epoch
  double initial_train_loss = 0.0;  // mean train loss of params_init
  double final_train_loss = 0.0;    // mean train loss over the last epoch
  std::int64_t steps = 0;
};

/// Trains for cfg.epochs_per_iter epochs over the train split with one Adam
/// step per video and returns the snapshot with the lowest validation loss.
/// `pseudo` == nullptr trains with the video loss only. When the val split is
/// empty the train loss drives selection and the plateau schedule.
TrainResult train_one_iteration(const Dataset& data, const Model& params_init, const PseudoSet* pseudo,
                                const RefineConfig& cfg, int eta = 0);

/// Mean loss over a set of dataset indices.
double mean_loss(const Dataset& data, const Model& model, const std::vector<std::size_t>& indices,
                 const PseudoSet* pseudo, double beta);

struct PseudoStats {
  double foreground_fraction = 0.0;
  std::optional<double> gt_agreement;
};

struct IterationReport {
  int eta = 0;
  int best_epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  std::optional<EvalReport> eval;
  std::optional<PseudoStats> pseudo_stats;  // absent for eta = 0

  double average_map() const { return eval ? eval->average_map : 0.0; }
};

struct IterationArtifacts {
  int eta;
  const Model& model;
  std::int64_t steps;
  const PseudoSet* pseudo;  // null for eta = 0
  const std::vector<SegmentPrediction>& predictions;
  const IterationReport& report;
};

using IterationObserver = std::function<void(const IterationArtifacts&)>;

struct RefineResult {
  std::vector<IterationReport> reports;
  Model final_model;
};

/// Initial parameters of iteration eta: a fresh init seeded with init_seed ^ eta.
ModelConfig iteration_model_config(const RefineConfig& cfg, const DatasetManifest& manifest, int eta);

/// Runs the base model forward over `indices` and builds pseudo labels with
/// the configured generator plus a sampling mask per video.
PseudoSet generate_pseudo_set(const Dataset& data, const Model& model, const RefineConfig& cfg, int eta,
                              const std::vector<std::size_t>& indices);

/// Predictions for every video in `indices`, concatenated in index order.
std::vector<SegmentPrediction> predict_videos(const Dataset& data, const Model& model,
                                              const PostprocConfig& postproc,
                                              const std::vector<std::size_t>& indices, int threads = 1);

/// Split used for evaluation: test if nonempty, else val.
std::vector<std::size_t> eval_indices(const DatasetManifest& manifest);

RefineResult refine_loop(const Dataset& data, const RefineConfig& cfg, const IterationObserver& observer = {});

struct AblationCell {
  GeneratorKind generator;
  double beta = 0.0;
  double best_avg_map = 0.0;
  int best_eta = 0;
};

std::vector<AblationCell> ablation_grid(const Dataset& data, const std::vector<GeneratorKind>& generators,
                                        const std::vector<double>& betas, const RefineConfig& cfg);

// Run directory layout:
//   iter_<eta>/checkpoint, iter_<eta>/pseudo.jsonl (eta >= 1),
//   iter_<eta>/predictions.jsonl, iter_<eta>/report.json, summary.csv
void write_iteration(const std::filesystem::path& run_dir, const IterationArtifacts& artifacts);
std::string summary_csv(const std::vector<IterationReport>& reports);
std::string iteration_report_json(const IterationReport& report);
std::string ablation_csv(const std::vector<AblationCell>& cells);

}  // namespace refineloc
