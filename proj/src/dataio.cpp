#include "refineloc/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refineloc/errors.hpp"
#include "refineloc/seeding.hpp"

namespace refineloc {

using nlohmann::json;
namespace fs = std::filesystem;

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw SchemaError("unknown split '" + s + "' (expected train, val or test)");
}

std::vector<std::size_t> DatasetManifest::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto it = split.find(videos[i].id);
    if (it != split.end() && it->second == s) out.push_back(i);
  }
  return out;
}

const VideoRecord* DatasetManifest::find(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
  if (N < 1) fail("N must be >= 1");
  if (D < 1) fail("D must be >= 1");
  if (video_count < 0) fail("video_count must be >= 0");
  if (T_range.first < 1 || T_range.first > T_range.second) fail("T_range must be nonempty with T >= 1");
  if (segments_per_video_range.first < 1 ||
      segments_per_video_range.first > segments_per_video_range.second) {
    fail("segments_per_video_range must be nonempty with at least 1 segment");
  }
  if (segment_len_range.first < 1 || segment_len_range.first > segment_len_range.second) {
    fail("segment_len_range must be nonempty with length >= 1");
  }
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(prototype_scale >= 0.0)) fail("prototype_scale must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must be in [0,1)");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail("test_fraction must be in [0,1)");
  if (!(val_fraction + test_fraction < 1.0)) fail("val_fraction + test_fraction must be < 1");
}

namespace {

int uniform_int(std::mt19937_64& rng, std::pair<int, int> range) {
  return std::uniform_int_distribution<int>(range.first, range.second)(rng);
}

std::string video_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "vid_%05d", i);
  return buf;
}

// Draws T and a non-overlapping layout (with at least one background snippet
// between neighbours). Returns (T, segments).
std::pair<int, std::vector<std::pair<int, int>>> plant_layout(std::mt19937_64& rng,
                                                              const SyntheticConfig& cfg,
                                                              const std::string& id) {
  const int k = uniform_int(rng, cfg.segments_per_video_range);
  std::vector<int> lens(k);
  for (auto& l : lens) l = uniform_int(rng, cfg.segment_len_range);
  const int need = std::accumulate(lens.begin(), lens.end(), 0) + (k - 1);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int T = uniform_int(rng, cfg.T_range);
    if (need > T) continue;
    const int slack = T - need;
    std::vector<int> cuts(k);
    for (auto& c : cuts) c = std::uniform_int_distribution<int>(0, slack)(rng);
    std::sort(cuts.begin(), cuts.end());
    std::vector<std::pair<int, int>> segs;
    int cursor = 0;
    int used_slack = 0;
    for (int s = 0; s < k; ++s) {
      cursor += cuts[s] - used_slack;
      used_slack = cuts[s];
      segs.emplace_back(cursor, cursor + lens[s] - 1);
      cursor += lens[s] + 1;
    }
    return {T, segs};
  }
  throw ConfigError("synthetic config: cannot plant " + std::to_string(k) +
                    " segments needing " + std::to_string(need) + " snippets in video " + id +
                    " after 100 draws of T");
}

}  // namespace

Dataset synthesize(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, "synth"));
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Row n < N is class n, row N is background.
  Matrix protos(cfg.N + 1, cfg.D);
  for (auto& v : protos.data()) v = cfg.prototype_scale * gauss(rng);

  Dataset ds;
  auto& m = ds.manifest;
  m.name = cfg.name;
  m.N = cfg.N;
  m.D = cfg.D;
  for (int n = 0; n < cfg.N; ++n) m.class_names.push_back("class_" + std::to_string(n));

  for (int i = 0; i < cfg.video_count; ++i) {
    VideoRecord rec;
    rec.id = video_id(i);
    rec.D = cfg.D;
    rec.feature_path = "features/" + rec.id + ".f32";
    const int c = std::uniform_int_distribution<int>(0, cfg.N - 1)(rng);
    auto [T, segs] = plant_layout(rng, cfg, rec.id);
    rec.T = T;
    rec.y.assign(cfg.N, 0.0);
    rec.y[c] = 1.0;
    std::vector<int> owner(T, cfg.N);
    for (auto [s, e] : segs) {
      rec.gt_segments.push_back({s, e, c});
      for (int t = s; t <= e; ++t) owner[t] = c;
    }
    Matrix f(T, cfg.D);
    for (int t = 0; t < T; ++t) {
      auto proto = protos.row(owner[t]);
      for (int d = 0; d < cfg.D; ++d) {
        const double noise = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * gauss(rng) : 0.0;
        f(t, d) = static_cast<double>(static_cast<float>(proto[d] + noise));
      }
    }
    m.videos.push_back(std::move(rec));
    ds.features.push_back(std::move(f));
  }
  split_dataset(m, cfg.val_fraction, cfg.test_fraction, derive_seed(cfg.seed, "split"));
  return ds;
}

DatasetManifest generate_synthetic(const SyntheticConfig& cfg, const fs::path& out_dir) {
  Dataset ds = synthesize(cfg);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (!ds.manifest.videos.empty()) {
    fs::create_directories(out_dir / "features", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "features").string() + ": " + ec.message());
  }
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    write_features(out_dir / ds.manifest.videos[i].feature_path, ds.features[i]);
  }
  ds.manifest.root = out_dir;
  save_manifest(ds.manifest, out_dir / "manifest.json");
  return ds.manifest;
}

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_features(const fs::path& path, const Matrix& features) {
  std::vector<std::uint32_t> buf(features.size());
  auto src = features.data();
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(src[i])));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  if (!out) throw IoError("short write to " + path.string());
}

Matrix read_features(const fs::path& path, int T, int D) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open feature file " + path.string());
  const auto actual = static_cast<std::uintmax_t>(in.tellg());
  const auto expected = static_cast<std::uintmax_t>(4) * static_cast<std::uintmax_t>(T) *
                        static_cast<std::uintmax_t>(D);
  if (actual != expected) {
    throw FormatError("feature file " + path.string() + ": expected " + std::to_string(expected) +
                      " bytes (4*T*D with T=" + std::to_string(T) + ", D=" + std::to_string(D) +
                      "), found " + std::to_string(actual));
  }
  in.seekg(0);
  std::vector<std::uint32_t> buf(static_cast<std::size_t>(T) * D);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("short read from " + path.string());
  Matrix m(T, D);
  auto dst = m.data();
  for (std::size_t i = 0; i < buf.size(); ++i) {
    dst[i] = static_cast<double>(std::bit_cast<float>(to_le(buf[i])));
  }
  return m;
}

Matrix load_features(const VideoRecord& record, const fs::path& root) {
  return read_features(root / record.feature_path, record.T, record.D);
}

void validate_manifest(const DatasetManifest& m, bool check_files) {
  if (m.N < 1) throw SchemaError("manifest: N must be >= 1");
  if (m.D < 1) throw SchemaError("manifest: D must be >= 1");
  if (static_cast<int>(m.class_names.size()) != m.N) {
    throw SchemaError("manifest: class_names has " + std::to_string(m.class_names.size()) +
                      " entries, N=" + std::to_string(m.N));
  }
  std::set<std::string> ids;
  for (const auto& v : m.videos) {
    auto fail = [&](const std::string& what) { throw SchemaError("video " + v.id + ": " + what); };
    if (!ids.insert(v.id).second) fail("duplicate video id");
    if (v.T < 1) fail("T must be >= 1");
    if (static_cast<int>(v.y.size()) != m.N) fail("label length differs from N");
    double sum = 0.0;
    for (double e : v.y) {
      if (!(e >= 0.0)) fail("label has a negative or non-finite entry");
      sum += e;
    }
    if (std::abs(sum - 1.0) > 1e-6) fail("label sums to " + std::to_string(sum) + ", expected 1");
    for (const auto& g : v.gt_segments) {
      if (g.start < 0 || g.start > g.end || g.end > v.T - 1) {
        fail("gt segment (" + std::to_string(g.start) + "," + std::to_string(g.end) +
             ") outside [0," + std::to_string(v.T - 1) + "]");
      }
      if (g.class_id < 0 || g.class_id >= m.N) fail("gt class_id out of range");
    }
    if (check_files) {
      const auto path = m.root / v.feature_path;
      std::error_code ec;
      const auto size = fs::file_size(path, ec);
      if (ec) fail("feature file " + path.string() + " missing");
      const auto expected = 4ULL * static_cast<unsigned long long>(v.T) * m.D;
      if (size != expected) {
        fail("feature file has " + std::to_string(size) + " bytes, expected " +
             std::to_string(expected));
      }
    }
  }
  for (const auto& [id, s] : m.split) {
    if (!ids.count(id)) throw SchemaError("split references unknown video " + id);
  }
}

namespace {

void require_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw SchemaError(where + ": unknown key '" + it.key() + "'");
  }
  for (const char* k : keys) {
    if (!j.contains(k)) throw SchemaError(where + ": missing key '" + std::string(k) + "'");
  }
}

// Multi-hot labels (all entries 0 or 1) are normalized to sum 1.
std::vector<double> normalize_label(std::vector<double> y) {
  const bool multi_hot = std::all_of(y.begin(), y.end(), [](double e) { return e == 0.0 || e == 1.0; });
  const double sum = std::accumulate(y.begin(), y.end(), 0.0);
  if (multi_hot && sum > 1.0) {
    for (auto& e : y) e /= sum;
  }
  return y;
}

DatasetManifest manifest_from_json(const json& j) {
  require_keys(j, {"name", "N", "D", "class_names", "videos", "split"}, "manifest");
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.N = j.at("N").get<int>();
    m.D = j.at("D").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (!j.at("videos").is_array()) throw SchemaError("manifest: videos must be an array");
    for (const auto& jv : j.at("videos")) {
      const std::string where =
          "manifest video " + (jv.contains("id") && jv["id"].is_string() ? jv["id"].get<std::string>()
                                                                       : std::string("?"));
      require_keys(jv, {"id", "T", "y", "gt_segments", "feature_path"}, where);
      VideoRecord v;
      v.id = jv.at("id").get<std::string>();
      v.T = jv.at("T").get<int>();
      v.y = normalize_label(jv.at("y").get<std::vector<double>>());
      v.feature_path = jv.at("feature_path").get<std::string>();
      v.D = m.D;
      for (const auto& jg : jv.at("gt_segments")) {
        require_keys(jg, {"start", "end", "class_id"}, where + " gt segment");
        v.gt_segments.push_back(
            {jg.at("start").get<int>(), jg.at("end").get<int>(), jg.at("class_id").get<int>()});
      }
      m.videos.push_back(std::move(v));
    }
    if (!j.at("split").is_object()) throw SchemaError("manifest: split must be an object");
    for (auto it = j.at("split").begin(); it != j.at("split").end(); ++it) {
      m.split[it.key()] = parse_split(it.value().get<std::string>());
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  validate_manifest(m, false);
  return m;
}

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  j["N"] = m.N;
  j["D"] = m.D;
  j["class_names"] = m.class_names;
  j["videos"] = json::array();
  for (const auto& v : m.videos) {
    json jv;
    jv["id"] = v.id;
    jv["T"] = v.T;
    jv["y"] = v.y;
    jv["feature_path"] = v.feature_path;
    jv["gt_segments"] = json::array();
    for (const auto& g : v.gt_segments) {
      jv["gt_segments"].push_back({{"start", g.start}, {"end", g.end}, {"class_id", g.class_id}});
    }
    j["videos"].push_back(std::move(jv));
  }
  j["split"] = json::object();
  for (const auto& [id, s] : m.split) j["split"][id] = split_name(s);
  return j;
}

}  // namespace

std::string manifest_to_json_string(const DatasetManifest& m) { return manifest_to_json(m).dump(2) + "\n"; }

DatasetManifest manifest_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

DatasetManifest load_manifest(const fs::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  DatasetManifest m = manifest_from_json_string(ss.str());
  m.root = path.parent_path();
  if (check_files) validate_manifest(m, true);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << manifest_to_json_string(m);
  if (!out) throw IoError("short write to " + path.string());
}

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path, true);
  ds.features.reserve(ds.manifest.videos.size());
  for (const auto& v : ds.manifest.videos) ds.features.push_back(load_features(v, ds.manifest.root));
  return ds;
}

void split_dataset(DatasetManifest& m, double val_fraction, double test_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0)) {
    throw ConfigError("split fractions must be >= 0 with val + test < 1");
  }
  const std::size_t n = m.videos.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  // Guard floor against products like 300 * (1/6) landing just below an integer.
  auto count = [n](double f) { return static_cast<std::size_t>(std::floor(f * n + 1e-9)); };
  const std::size_t n_test = count(test_fraction);
  const std::size_t n_val = count(val_fraction);
  m.split.clear();
  for (std::size_t k = 0; k < n; ++k) {
    const Split s = k < n_test ? Split::Test : (k < n_test + n_val ? Split::Val : Split::Train);
    m.split[m.videos[order[k]].id] = s;
  }
}

std::vector<std::uint8_t> gt_foreground(const VideoRecord& record) {
  std::vector<std::uint8_t> fg(record.T, 0);
  for (const auto& g : record.gt_segments) {
    for (int t = g.start; t <= g.end; ++t) fg[t] = 1;
  }
  return fg;
}

double gt_coverage(const VideoRecord& record) {
  if (record.T == 0) return 0.0;
  const auto fg = gt_foreground(record);
  return static_cast<double>(std::count(fg.begin(), fg.end(), 1)) / record.T;
}

}  // namespace refineloc
