#include "refineloc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refineloc/errors.hpp"
#include "refineloc/seeding.hpp"

namespace refineloc {

using nlohmann::json;

void RunConfig::set_seed(std::uint64_t root) {
  seed = root;
  synth.seed = derive_seed(root, "synth");
  refine.seed = derive_seed(root, "refine");
  refine.model.init_seed = derive_seed(root, "init");
}

namespace {

// Walks one JSON object, dispatching known keys and rejecting the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw SchemaError(path_ + "." + key + ": wrong type");
    }
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    double v = 0.0;
    get(key, v);
    out = v;
  }

  void get_range(const char* key, std::pair<int, int>& out) {
    std::vector<int> v{out.first, out.second};
    get(key, v);
    if (v.size() != 2) throw SchemaError(path_ + "." + key + ": expected [lo, hi]");
    out = {v[0], v[1]};
  }

  void sub(const char* key, const std::function<void(Section&)>& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Section s(j_.at(key), path_.empty() ? key : path_ + "." + key);
    fn(s);
    s.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw SchemaError("unknown config key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
      }
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  Section root(j, "");
  std::uint64_t seed = 0;
  root.get("seed", seed);
  cfg.set_seed(seed);

  root.sub("synth", [&](Section& s) {
    auto& c = cfg.synth;
    s.get("name", c.name);
    s.get("N", c.N);
    s.get("D", c.D);
    s.get("video_count", c.video_count);
    s.get_range("T_range", c.T_range);
    s.get_range("segments_per_video_range", c.segments_per_video_range);
    s.get_range("segment_len_range", c.segment_len_range);
    s.get("noise_sigma", c.noise_sigma);
    s.get("prototype_scale", c.prototype_scale);
    s.get("val_fraction", c.val_fraction);
    s.get("test_fraction", c.test_fraction);
  });
  root.sub("data", [&](Section& s) { s.get("manifest", cfg.manifest_name); });
  root.sub("model", [&](Section& s) {
    s.get("L", cfg.refine.model.L);
    std::string variant = attention_variant_name(cfg.refine.model.attention);
    s.get("attention_variant", variant);
    cfg.refine.model.attention = parse_attention_variant(variant);
  });
  root.sub("postproc", [&](Section& s) {
    auto& p = cfg.refine.postproc;
    s.get("alpha_A", p.alpha_A);
    s.get("alpha_C", p.alpha_C);
    s.get("top_k", p.top_k);
    s.get("gap_tolerance", p.gap_tolerance);
    s.get("inflation", p.inflation);
  });
  root.sub("refine", [&](Section& s) {
    auto& r = cfg.refine;
    s.get("eta_max", r.eta_max);
    s.get("beta", r.beta);
    std::string gen = generator_name(r.generator.kind);
    s.get("generator", gen);
    r.generator.kind = parse_generator(gen);
    s.get_optional("generator_threshold", r.generator.threshold);
    s.get_optional("generator_ratio", r.generator.ratio);
    s.get("S", r.S);
    s.get("epochs_per_iter", r.epochs_per_iter);
    s.get("lr", r.lr);
    s.get("lr_decay", r.lr_decay);
    s.get("plateau_patience", r.plateau_patience);
    s.get("warm_start", r.warm_start);
  });
  root.sub("eval", [&](Section& s) { s.get("thresholds", cfg.refine.eval_thresholds); });
  root.sub("ablation", [&](Section& s) {
    std::vector<std::string> gens;
    for (auto g : cfg.ablation_generators) gens.emplace_back(generator_name(g));
    s.get("generators", gens);
    cfg.ablation_generators.clear();
    for (const auto& g : gens) cfg.ablation_generators.push_back(parse_generator(g));
    s.get("betas", cfg.ablation_betas);
  });
  root.finish();

  cfg.synth.validate();
  cfg.refine.validate();
  if (cfg.refine.model.L < 1) throw ConfigError("model: L must be >= 1");
  if (cfg.refine.eval_thresholds.empty()) throw ConfigError("eval: thresholds must be nonempty");
  for (double t : cfg.refine.eval_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval: thresholds must be in (0,1]");
  }
  for (double b : cfg.ablation_betas) {
    if (!(b >= 0.0)) throw ConfigError("ablation: betas must be >= 0");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json_string(const RunConfig& cfg) {
  const auto& s = cfg.synth;
  const auto& r = cfg.refine;
  json j;
  j["seed"] = cfg.seed;
  j["synth"] = {{"name", s.name},
                {"N", s.N},
                {"D", s.D},
                {"video_count", s.video_count},
                {"T_range", {s.T_range.first, s.T_range.second}},
                {"segments_per_video_range", {s.segments_per_video_range.first, s.segments_per_video_range.second}},
                {"segment_len_range", {s.segment_len_range.first, s.segment_len_range.second}},
                {"noise_sigma", s.noise_sigma},
                {"prototype_scale", s.prototype_scale},
                {"val_fraction", s.val_fraction},
                {"test_fraction", s.test_fraction}};
  j["data"] = {{"manifest", cfg.manifest_name}};
  j["model"] = {{"L", r.model.L}, {"attention_variant", attention_variant_name(r.model.attention)}};
  j["postproc"] = {{"alpha_A", r.postproc.alpha_A},
                   {"alpha_C", r.postproc.alpha_C},
                   {"top_k", r.postproc.top_k},
                   {"gap_tolerance", r.postproc.gap_tolerance},
                   {"inflation", r.postproc.inflation}};
  json jr = {{"eta_max", r.eta_max},
             {"beta", r.beta},
             {"generator", generator_name(r.generator.kind)},
             {"S", r.S},
             {"epochs_per_iter", r.epochs_per_iter},
             {"lr", r.lr},
             {"lr_decay", r.lr_decay},
             {"plateau_patience", r.plateau_patience},
             {"warm_start", r.warm_start}};
  if (r.generator.threshold) jr["generator_threshold"] = *r.generator.threshold;
  if (r.generator.ratio) jr["generator_ratio"] = *r.generator.ratio;
  j["refine"] = jr;
  j["eval"] = {{"thresholds", r.eval_thresholds}};
  std::vector<std::string> gens;
  for (auto g : cfg.ablation_generators) gens.emplace_back(generator_name(g));
  j["ablation"] = {{"generators", gens}, {"betas", cfg.ablation_betas}};
  return j.dump(2) + "\n";
}

}  // namespace refineloc
