#include "refineloc/cli.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

#include "refineloc/config.hpp"
#include "refineloc/errors.hpp"
#include "refineloc/evalkit.hpp"
#include "refineloc/refine.hpp"

namespace refineloc::cli {

namespace fs = std::filesystem;

namespace {

// Maps the library's exception types onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const SchemaError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const FormatError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

RunConfig resolve(const fs::path& config_path, const CommonOptions& opts) {
  RunConfig cfg = load_run_config(config_path);
  if (opts.seed) cfg.set_seed(*opts.seed);
  if (opts.threads < 1) throw ConfigError("--threads must be >= 1");
  cfg.refine.threads = opts.threads;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("short write to " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int cmd_synth(const fs::path& config_path, const fs::path& out_dir, const CommonOptions& opts,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve(config_path, opts);
    const DatasetManifest m = generate_synthetic(cfg.synth, out_dir);
    long long fg = 0;
    long long total = 0;
    for (const auto& v : m.videos) {
      const auto mask = gt_foreground(v);
      for (auto b : mask) fg += b;
      total += v.T;
    }
    out << "videos=" << m.videos.size() << " classes=" << m.N << " D=" << m.D
        << " train=" << m.indices_of(Split::Train).size() << " val=" << m.indices_of(Split::Val).size()
        << " test=" << m.indices_of(Split::Test).size()
        << " fg_fraction=" << fixed4(total ? static_cast<double>(fg) / total : 0.0) << '\n';
    return kOk;
  });
}

int cmd_refine(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir,
               const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve(config_path, opts);
    const Dataset data = load_dataset(data_dir / cfg.manifest_name);
    make_dir(out_dir);
    write_text(out_dir / "config.json", run_config_to_json_string(cfg));
    std::vector<IterationReport> reports;
    try {
      reports = refine_loop(data, cfg.refine, [&](const IterationArtifacts& a) {
        write_iteration(out_dir, a);
        const auto& r = a.report;
        out << "eta=" << r.eta << " val_loss=" << fixed4(r.val_loss)
            << " mAP@0.5=" << fixed4(r.eval ? r.eval->map_at(0.5) : 0.0)
            << " avg_mAP=" << fixed4(r.average_map()) << '\n';
      }).reports;
    } catch (const TrainingError& e) {
      err << "training error: " << e.what() << '\n';
      return kRuntimeError;
    }
    write_text(out_dir / "summary.csv", summary_csv(reports));
    return kOk;
  });
}

int cmd_eval(const fs::path& predictions_path, const fs::path& manifest_path, const fs::path& report_path,
             const std::string& split, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const DatasetManifest m = load_manifest(manifest_path, false);
    std::vector<VideoRecord> videos;
    if (split.empty()) {
      videos = m.videos;
    } else {
      for (std::size_t i : m.indices_of(parse_split(split))) videos.push_back(m.videos[i]);
    }
    auto preds = read_predictions(predictions_path);
    if (!split.empty()) {
      // Predictions for manifest videos outside the split are skipped; unknown ids still fail.
      std::set<std::string> keep;
      for (const auto& v : videos) keep.insert(v.id);
      std::vector<SegmentPrediction> kept;
      for (const auto& p : preds) {
        if (keep.count(p.video_id)) {
          kept.push_back(p);
        } else if (!m.find(p.video_id)) {
          throw SchemaError("prediction for unknown video " + p.video_id);
        }
      }
      preds = std::move(kept);
    }
    const EvalReport r = evaluate(preds, videos, m.N);
    for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
      out << "mAP@" << threshold_key(r.thresholds[k]) << " " << fixed4(r.map_per_threshold[k]) << '\n';
    }
    out << "average mAP " << fixed4(r.average_map) << '\n';
    write_report(report_path, r);
    return kOk;
  });
}

int cmd_ablate(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir,
               const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve(config_path, opts);
    if (cfg.ablation_generators.empty() || cfg.ablation_betas.empty()) {
      throw ConfigError("ablation: generators and betas must be nonempty");
    }
    const Dataset data = load_dataset(data_dir / cfg.manifest_name);
    make_dir(out_dir);
    write_text(out_dir / "config.json", run_config_to_json_string(cfg));
    std::vector<AblationCell> cells;
    try {
      cells = ablation_grid(data, cfg.ablation_generators, cfg.ablation_betas, cfg.refine);
    } catch (const TrainingError& e) {
      err << "training error: " << e.what() << '\n';
      return kRuntimeError;
    }
    for (const auto& c : cells) {
      out << generator_name(c.generator) << " beta=" << c.beta << " best_avg_mAP=" << fixed4(c.best_avg_map)
          << " best_eta=" << c.best_eta << '\n';
    }
    write_text(out_dir / "grid.csv", ablation_csv(cells));
    return kOk;
  });
}

}  // namespace refineloc::cli
