#include "refineloc/refine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include <json.hpp>

#include "refineloc/errors.hpp"
#include "refineloc/seeding.hpp"

namespace refineloc {

using nlohmann::json;
namespace fs = std::filesystem;

void RefineConfig::validate() const {
  if (eta_max < 0) throw ConfigError("refine: eta_max must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("refine: beta must be >= 0");
  if (!(S >= 0.0 && S <= 1.0)) throw ConfigError("refine: S must be in [0,1]");
  if (epochs_per_iter < 0) throw ConfigError("refine: epochs_per_iter must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("refine: lr must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("refine: lr_decay must be in (0,1]");
  if (plateau_patience < 1) throw ConfigError("refine: plateau_patience must be >= 1");
  if (threads < 1) throw ConfigError("refine: threads must be >= 1");
  generator.validate();
  postproc.validate();
}

namespace {

// Runs fn(k) for k in [0, n) on up to `threads` workers. Each k writes its own slot.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < n; k += workers) fn(k);
    });
  }
}

const PseudoLabels* pseudo_for(const PseudoSet* pseudo, std::size_t i) {
  if (pseudo == nullptr || i >= pseudo->size() || (*pseudo)[i].labels.empty()) return nullptr;
  return &(*pseudo)[i];
}

void reset_optimizer(Model& model) {
  for (auto& p : model.params()) {
    p.adam_m.fill(0.0);
    p.adam_v.fill(0.0);
    p.grad.fill(0.0);
  }
}

std::uint64_t video_seed(std::uint64_t root, const std::string& id) { return root ^ fnv1a64(id); }

}  // namespace

double mean_loss(const Dataset& data, const Model& model, const std::vector<std::size_t>& indices,
                 const PseudoSet* pseudo, double beta) {
  if (indices.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i : indices) {
    sum += evaluate_loss(model, data.features[i], data.manifest.videos[i].y, pseudo_for(pseudo, i), beta);
  }
  return sum / static_cast<double>(indices.size());
}

TrainResult train_one_iteration(const Dataset& data, const Model& params_init, const PseudoSet* pseudo,
                                const RefineConfig& cfg, int eta) {
  const auto train = data.manifest.indices_of(Split::Train);
  if (train.empty()) throw TrainingError("train split is empty");
  const auto val = data.manifest.indices_of(Split::Val);
  const bool use_val = !val.empty();
  const double beta = pseudo ? cfg.beta : 0.0;

  Model model = params_init;
  reset_optimizer(model);

  TrainResult r{model};
  r.initial_train_loss = mean_loss(data, model, train, pseudo, beta);
  r.final_train_loss = r.initial_train_loss;
  r.train_loss = r.initial_train_loss;
  r.best_val_loss = use_val ? mean_loss(data, model, val, pseudo, beta) : r.initial_train_loss;

  double lr = cfg.lr;
  int stale = 0;
  std::int64_t step = 0;
  const std::uint64_t shuffle_root = derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(eta));
  std::vector<std::size_t> order = train;
  for (int epoch = 1; epoch <= cfg.epochs_per_iter; ++epoch) {
    std::mt19937_64 rng(derive_seed(shuffle_root, "epoch", static_cast<std::uint64_t>(epoch)));
    order = train;
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t i : order) {
      zero_grads(model.params());
      const double loss = accumulate_gradients(model, data.features[i], data.manifest.videos[i].y,
                                               pseudo_for(pseudo, i), beta);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss on video " + data.manifest.videos[i].id + " at epoch " +
                            std::to_string(epoch));
      }
      sum += loss;
      adam_step(model.params(), lr, ++step);
    }
    const double epoch_train = sum / static_cast<double>(order.size());
    r.final_train_loss = epoch_train;
    const double v = use_val ? mean_loss(data, model, val, pseudo, beta) : epoch_train;
    if (v < r.best_val_loss) {
      r.best_val_loss = v;
      r.best_epoch = epoch;
      r.train_loss = epoch_train;
      r.model = model;
      stale = 0;
    } else if (++stale >= cfg.plateau_patience) {
      lr *= cfg.lr_decay;
      stale = 0;
    }
  }
  r.steps = step;
  return r;
}

ModelConfig iteration_model_config(const RefineConfig& cfg, const DatasetManifest& manifest, int eta) {
  ModelConfig mc = cfg.model;
  if (mc.D == 0) mc.D = manifest.D;
  if (mc.N == 0) mc.N = manifest.N;
  if (mc.D != manifest.D || mc.N != manifest.N) {
    throw ConfigError("model: configured D=" + std::to_string(mc.D) + ", N=" + std::to_string(mc.N) +
                      " but dataset has D=" + std::to_string(manifest.D) + ", N=" +
                      std::to_string(manifest.N));
  }
  mc.init_seed = cfg.model.init_seed ^ static_cast<std::uint64_t>(eta);
  return mc;
}

PseudoSet generate_pseudo_set(const Dataset& data, const Model& model, const RefineConfig& cfg, int eta,
                              const std::vector<std::size_t>& indices) {
  PseudoSet out(data.manifest.videos.size());
  parallel_for(indices.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t i = indices[k];
    const auto& rec = data.manifest.videos[i];
    const ForwardMaps maps = model.forward(data.features[i]);
    std::vector<SegmentPrediction> preds;
    if (cfg.generator.kind == GeneratorKind::SegmentPrediction) {
      preds = predict_segments(maps, cfg.postproc, rec.id);
    }
    const std::uint64_t vs = video_seed(cfg.seed, rec.id);
    PseudoLabels p;
    p.video_id = rec.id;
    p.labels = generate_labels(cfg.generator, maps, preds, derive_seed(vs, "labels", eta));
    p.sample_mask = sample_pseudo(rec.T, cfg.S, derive_seed(vs, "sample", eta));
    out[i] = std::move(p);
  });
  return out;
}

std::vector<SegmentPrediction> predict_videos(const Dataset& data, const Model& model,
                                              const PostprocConfig& postproc,
                                              const std::vector<std::size_t>& indices, int threads) {
  std::vector<std::vector<SegmentPrediction>> per_video(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    const std::size_t i = indices[k];
    per_video[k] = predict_segments(model.forward(data.features[i]), postproc, data.manifest.videos[i].id);
  });
  std::vector<SegmentPrediction> out;
  for (auto& v : per_video) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<std::size_t> eval_indices(const DatasetManifest& manifest) {
  auto idx = manifest.indices_of(Split::Test);
  if (idx.empty()) idx = manifest.indices_of(Split::Val);
  return idx;
}

namespace {

std::optional<double> foreground_ratio_from_gt(const DatasetManifest& m) {
  long long fg = 0;
  long long total = 0;
  bool any_gt = false;
  for (std::size_t i : m.indices_of(Split::Train)) {
    const auto& v = m.videos[i];
    any_gt = any_gt || !v.gt_segments.empty();
    const auto mask = gt_foreground(v);
    fg += std::count(mask.begin(), mask.end(), 1);
    total += v.T;
  }
  if (!any_gt || total == 0) return std::nullopt;
  return static_cast<double>(fg) / static_cast<double>(total);
}

bool has_any_gt(const DatasetManifest& m, const std::vector<std::size_t>& indices) {
  return std::any_of(indices.begin(), indices.end(),
                     [&](std::size_t i) { return !m.videos[i].gt_segments.empty(); });
}

PseudoStats pseudo_stats(const Dataset& data, const PseudoSet& pseudo, const std::vector<std::size_t>& indices) {
  PseudoStats s;
  long long fg = 0;
  long long agree = 0;
  long long total = 0;
  for (std::size_t i : indices) {
    const auto& labels = pseudo[i].labels;
    const auto truth = gt_foreground(data.manifest.videos[i]);
    for (std::size_t t = 0; t < labels.size(); ++t) {
      fg += labels[t] == kForeground;
      agree += labels[t] == truth[t];
    }
    total += static_cast<long long>(labels.size());
  }
  if (total > 0) {
    s.foreground_fraction = static_cast<double>(fg) / static_cast<double>(total);
    if (has_any_gt(data.manifest, indices)) s.gt_agreement = static_cast<double>(agree) / static_cast<double>(total);
  }
  return s;
}

}  // namespace

RefineResult refine_loop(const Dataset& data, const RefineConfig& cfg_in, const IterationObserver& observer) {
  RefineConfig cfg = cfg_in;
  cfg.validate();
  const auto& m = data.manifest;
  if (cfg.generator.kind == GeneratorKind::DistributionAware && !cfg.generator.ratio && cfg.eta_max > 0) {
    cfg.generator.ratio = foreground_ratio_from_gt(m);
    if (!cfg.generator.ratio) {
      throw ConfigError("distribution_aware generator: no ratio configured and no train ground truth to derive it");
    }
  }
  std::vector<std::size_t> gen_idx = m.indices_of(Split::Train);
  const auto val = m.indices_of(Split::Val);
  gen_idx.insert(gen_idx.end(), val.begin(), val.end());
  std::sort(gen_idx.begin(), gen_idx.end());
  const auto eval_idx = eval_indices(m);
  std::vector<VideoRecord> eval_videos;
  for (std::size_t i : eval_idx) eval_videos.push_back(m.videos[i]);
  const bool can_eval = has_any_gt(m, eval_idx);

  RefineResult result{{}, Model(iteration_model_config(cfg, m, 0))};
  std::optional<Model> prev;
  for (int eta = 0; eta <= cfg.eta_max; ++eta) {
    Model init = (eta > 0 && cfg.warm_start) ? *prev : Model(iteration_model_config(cfg, m, eta));
    PseudoSet pseudo;
    IterationReport rep;
    rep.eta = eta;
    if (eta > 0) {
      pseudo = generate_pseudo_set(data, *prev, cfg, eta, gen_idx);
      rep.pseudo_stats = pseudo_stats(data, pseudo, gen_idx);
    }
    TrainResult tr = train_one_iteration(data, init, eta > 0 ? &pseudo : nullptr, cfg, eta);
    rep.best_epoch = tr.best_epoch;
    rep.train_loss = tr.train_loss;
    rep.val_loss = tr.best_val_loss;
    rep.initial_train_loss = tr.initial_train_loss;
    rep.final_train_loss = tr.final_train_loss;
    const auto preds = predict_videos(data, tr.model, cfg.postproc, eval_idx, cfg.threads);
    if (can_eval) rep.eval = evaluate(preds, eval_videos, m.N, cfg.eval_thresholds);
    result.reports.push_back(rep);
    if (observer) {
      observer(IterationArtifacts{eta, tr.model, tr.steps, eta > 0 ? &pseudo : nullptr, preds,
                                  result.reports.back()});
    }
    prev = std::move(tr.model);
  }
  result.final_model = std::move(*prev);
  return result;
}

std::vector<AblationCell> ablation_grid(const Dataset& data, const std::vector<GeneratorKind>& generators,
                                        const std::vector<double>& betas, const RefineConfig& cfg) {
  if (!has_any_gt(data.manifest, eval_indices(data.manifest))) {
    throw ConfigError("ablation needs ground truth on the evaluation split");
  }
  std::vector<AblationCell> cells;
  for (auto g : generators) {
    for (double b : betas) {
      RefineConfig c = cfg;
      c.generator.kind = g;
      c.beta = b;
      const auto res = refine_loop(data, c);
      AblationCell cell{g, b, -1.0, 0};
      for (const auto& r : res.reports) {
        if (r.average_map() > cell.best_avg_map) {
          cell.best_avg_map = r.average_map();
          cell.best_eta = r.eta;
        }
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

namespace {

json eval_json(const EvalReport& r) { return json::parse(report_to_json_string(r)); }

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string iteration_report_json(const IterationReport& r) {
  json j;
  j["eta"] = r.eta;
  j["best_epoch"] = r.best_epoch;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["initial_train_loss"] = r.initial_train_loss;
  j["final_train_loss"] = r.final_train_loss;
  j["eval"] = r.eval ? eval_json(*r.eval) : json(nullptr);
  if (r.pseudo_stats) {
    j["pseudo_stats"] = {{"foreground_fraction", r.pseudo_stats->foreground_fraction},
                         {"gt_agreement", r.pseudo_stats->gt_agreement ? json(*r.pseudo_stats->gt_agreement)
                                                                       : json(nullptr)}};
  } else {
    j["pseudo_stats"] = nullptr;
  }
  return j.dump(2) + "\n";
}

void write_iteration(const fs::path& run_dir, const IterationArtifacts& a) {
  const fs::path dir = run_dir / ("iter_" + std::to_string(a.eta));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_checkpoint(a.model, a.steps, dir / "checkpoint");
  if (a.pseudo) {
    std::vector<PseudoLabels> present;
    for (const auto& p : *a.pseudo) {
      if (!p.labels.empty()) present.push_back(p);
    }
    write_pseudo(dir / "pseudo.jsonl", present);
  }
  write_predictions(dir / "predictions.jsonl", a.predictions);
  std::ofstream out(dir / "report.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "report.json").string());
  out << iteration_report_json(a.report);
}

std::string summary_csv(const std::vector<IterationReport>& reports) {
  std::string s = "eta,val_loss,map_at_0.5,average_map\n";
  for (const auto& r : reports) {
    s += std::to_string(r.eta) + "," + fmt6(r.val_loss) + "," + fmt6(r.eval ? r.eval->map_at(0.5) : 0.0) + "," +
         fmt6(r.average_map()) + "\n";
  }
  return s;
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
  std::string s = "generator,beta,best_avg_map,best_eta\n";
  char buf[64];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%g", c.beta);
    s += std::string(generator_name(c.generator)) + "," + buf + "," + fmt6(c.best_avg_map) + "," +
         std::to_string(c.best_eta) + "\n";
  }
  return s;
}

}  // namespace refineloc
