#include "refineloc/wstal.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "refineloc/errors.hpp"

namespace refineloc {

using nlohmann::json;

const char* attention_variant_name(AttentionVariant v) {
  return v == AttentionVariant::TwoLogit ? "two_logit" : "scalar_sigmoid";
}

AttentionVariant parse_attention_variant(const std::string& s) {
  if (s == "two_logit") return AttentionVariant::TwoLogit;
  if (s == "scalar_sigmoid") return AttentionVariant::ScalarSigmoid;
  throw ConfigError("unknown attention_variant '" + s + "' (expected two_logit or scalar_sigmoid)");
}

int ModelConfig::head_width() const {
  if (L < 1 || L > 62) return 0;
  return D >> (L - 1);
}

void ModelConfig::validate() const {
  if (L < 1) throw ConfigError("model: L must be >= 1");
  if (D < 1) throw ConfigError("model: D must be >= 1");
  if (N < 1) throw ConfigError("model: N must be >= 1");
  if (head_width() < 1) {
    throw ConfigError("model: D/2^(L-1) < 1 for D=" + std::to_string(D) + ", L=" + std::to_string(L));
  }
}

namespace {

Param xavier(const std::string& name, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(fan_in, fan_out);
  for (auto& v : w.data()) v = dist(rng);
  return Param(name, std::move(w));
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.init_seed);
  const int att_out = cfg_.attention == AttentionVariant::TwoLogit ? 2 : 1;
  for (const char* head : {"cls", "att"}) {
    const bool is_cls = head[0] == 'c';
    for (int l = 0; l < cfg_.L; ++l) {
      const int in = cfg_.D >> l;
      const int out = l + 1 < cfg_.L ? (cfg_.D >> (l + 1)) : (is_cls ? cfg_.N : att_out);
      const std::string prefix = std::string(head) + ".fc" + std::to_string(l);
      params_.push_back(xavier(prefix + ".weight", in, out, rng));
      params_.emplace_back(prefix + ".bias", Matrix(1, out));
    }
  }
}

const Param& Model::param(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + name);
}

Param& Model::param(const std::string& name) {
  return const_cast<Param&>(std::as_const(*this).param(name));
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Matrix Model::run_head(const Matrix& F, std::size_t offset, std::vector<Matrix>* inputs,
                       std::vector<Matrix>* preacts) const {
  Matrix x = F;
  for (int l = 0; l < cfg_.L; ++l) {
    const auto& w = params_[offset + 2 * l];
    const auto& b = params_[offset + 2 * l + 1];
    Matrix z = affine_forward(x, w, b);
    if (inputs) inputs->push_back(std::move(x));
    if (l + 1 == cfg_.L) return z;
    x = relu_forward(z);
    if (preacts) preacts->push_back(std::move(z));
  }
  return x;
}

ForwardMaps Model::forward(const Matrix& F, ForwardCache* cache) const {
  if (F.rows() < 1 || F.cols() != static_cast<std::size_t>(cfg_.D)) {
    throw ShapeError("forward: features " + F.shape_str() + " vs model input width " +
                     std::to_string(cfg_.D) + " (need T >= 1)");
  }
  if (cache) *cache = ForwardCache{};
  const std::size_t att_offset = 2 * static_cast<std::size_t>(cfg_.L);
  ForwardMaps m;
  m.C = run_head(F, 0, cache ? &cache->cls_inputs : nullptr, cache ? &cache->cls_preacts : nullptr);
  m.A = run_head(F, att_offset, cache ? &cache->att_inputs : nullptr,
                 cache ? &cache->att_preacts : nullptr);
  m.Cbar = softmax_rows(m.C);
  const std::size_t T = F.rows();
  if (cfg_.attention == AttentionVariant::TwoLogit) {
    m.Abf = softmax_rows(m.A);
  } else {
    m.Abf = Matrix(T, 2);
    for (std::size_t t = 0; t < T; ++t) {
      const double fg = sigmoid(m.A(t, 0));
      m.Abf(t, kFgColumn) = fg;
      m.Abf(t, kBgColumn) = 1.0 - fg;
    }
  }
  // Softmax over time of the already-normalized foreground probabilities.
  std::vector<double> fg(T);
  for (std::size_t t = 0; t < T; ++t) fg[t] = m.Abf(t, kFgColumn);
  m.Atime = softmax_column(fg);
  m.yhat.assign(cfg_.N, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    auto row = m.Cbar.row(t);
    for (int n = 0; n < cfg_.N; ++n) m.yhat[n] += m.Atime[t] * row[n];
  }
  return m;
}

void Model::backprop_head(std::size_t offset, const std::vector<Matrix>& inputs,
                          const std::vector<Matrix>& preacts, Matrix grad) {
  for (int l = cfg_.L - 1; l >= 0; --l) {
    Matrix gx = affine_backward(inputs[l], params_[offset + 2 * l], params_[offset + 2 * l + 1], grad);
    if (l > 0) grad = relu_backward(preacts[l - 1], gx);
  }
}

void Model::backward(const ForwardCache& cache, const ForwardMaps& maps, const MapGrads& grads) {
  const std::size_t T = maps.T();
  const std::size_t N = maps.N();
  if (grads.d_yhat.size() != N) throw ShapeError("backward: d_yhat length mismatch");

  Matrix dCbar(T, N);
  std::vector<double> dAtime(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    auto cb = maps.Cbar.row(t);
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      dCbar(t, n) = maps.Atime[t] * grads.d_yhat[n];
      acc += cb[n] * grads.d_yhat[n];
    }
    dAtime[t] = acc;
  }
  Matrix dAbf = grads.d_Abf.empty() ? Matrix(T, 2) : grads.d_Abf;
  const auto dfg = softmax_column_backward(maps.Atime, dAtime);
  for (std::size_t t = 0; t < T; ++t) dAbf(t, kFgColumn) += dfg[t];

  Matrix dA;
  if (cfg_.attention == AttentionVariant::TwoLogit) {
    dA = softmax_rows_backward(maps.Abf, dAbf);
  } else {
    dA = Matrix(T, 1);
    for (std::size_t t = 0; t < T; ++t) {
      const double s = maps.Abf(t, kFgColumn);
      dA(t, 0) = (dAbf(t, kFgColumn) - dAbf(t, kBgColumn)) * s * (1.0 - s);
    }
  }
  Matrix dC = softmax_rows_backward(maps.Cbar, dCbar);
  backprop_head(0, cache.cls_inputs, cache.cls_preacts, std::move(dC));
  backprop_head(2 * static_cast<std::size_t>(cfg_.L), cache.att_inputs, cache.att_preacts, std::move(dA));
}

Model init_model(const ModelConfig& cfg) { return Model(cfg); }

ForwardMaps forward(const Model& model, const Matrix& F) { return model.forward(F); }

ForwardMaps scalar_attention_forward(const Model& model, const Matrix& F) {
  if (model.config().attention != AttentionVariant::ScalarSigmoid) {
    throw ConfigError("scalar_attention_forward: model uses the two_logit attention variant");
  }
  return model.forward(F);
}

LossResult total_loss(const ForwardMaps& maps, std::span<const double> y, const PseudoLabels* pseudo,
                      double beta) {
  if (!(beta >= 0.0)) throw ConfigError("loss: beta must be >= 0");
  LossResult r;
  r.video_ce = cross_entropy(maps.yhat, y);
  r.total = r.video_ce;
  r.grads.d_yhat = cross_entropy_grad(maps.yhat, y);
  if (pseudo == nullptr || beta == 0.0) return r;

  const std::size_t T = maps.T();
  if (pseudo->labels.size() != T || pseudo->sample_mask.size() != T) {
    throw ShapeError("loss: pseudo labels cover " + std::to_string(pseudo->labels.size()) +
                     " snippets (mask " + std::to_string(pseudo->sample_mask.size()) +
                     ") but the video has " + std::to_string(T));
  }
  std::size_t n_bg = 0;
  std::size_t n_fg = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!pseudo->sample_mask[t]) continue;
    (pseudo->labels[t] == kForeground ? n_fg : n_bg)++;
  }
  const std::size_t M = n_bg + n_fg;
  r.grads.d_Abf = Matrix(T, 2);
  if (M == 0) return r;

  const double w_bg = n_bg ? static_cast<double>(M) / (2.0 * n_bg) : 0.0;
  const double w_fg = n_fg ? static_cast<double>(M) / (2.0 * n_fg) : 0.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!pseudo->sample_mask[t]) continue;
    const bool fg = pseudo->labels[t] == kForeground;
    const std::size_t col = fg ? kFgColumn : kBgColumn;
    const double w = fg ? w_fg : w_bg;
    const double onehot[2] = {fg ? 0.0 : 1.0, fg ? 1.0 : 0.0};
    sum += w * cross_entropy(maps.Abf.row(t), onehot);
    const auto g = cross_entropy_grad(maps.Abf.row(t), onehot);
    r.grads.d_Abf(t, col) += beta * w / static_cast<double>(M) * g[col];
  }
  r.pseudo_term = beta * (sum / static_cast<double>(M));
  r.total = r.video_ce + r.pseudo_term;
  return r;
}

double accumulate_gradients(Model& model, const Matrix& F, std::span<const double> y,
                            const PseudoLabels* pseudo, double beta) {
  ForwardCache cache;
  const ForwardMaps maps = model.forward(F, &cache);
  LossResult r = total_loss(maps, y, pseudo, beta);
  model.backward(cache, maps, r.grads);
  return r.total;
}

double evaluate_loss(const Model& model, const Matrix& F, std::span<const double> y,
                     const PseudoLabels* pseudo, double beta) {
  return total_loss(model.forward(F), y, pseudo, beta).total;
}

namespace {

constexpr char kMagic[8] = {'R', 'L', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, std::int64_t step, const std::filesystem::path& path) {
  const auto& c = model.config();
  json header;
  header["format"] = "refineloc-checkpoint";
  header["version"] = 1;
  header["config"] = {{"D", c.D}, {"N", c.N}, {"L", c.L},
                      {"attention_variant", attention_variant_name(c.attention)},
                      {"init_seed", c.init_seed}};
  header["step"] = step;
  header["params"] = json::array();
  for (const auto& p : model.params()) {
    header["params"].push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 8);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.params()) {
    for (double v : p.value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError("short write to " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw FormatError("checkpoint " + path.string() + ": bad magic");
  }
  const std::uint64_t len = get_u64(in);
  if (!in || len > (1ULL << 30)) throw FormatError("checkpoint " + path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint " + path.string() + ": truncated header");
  json header;
  ModelConfig cfg;
  std::int64_t step = 0;
  try {
    header = json::parse(text);
    const auto& jc = header.at("config");
    cfg.D = jc.at("D").get<int>();
    cfg.N = jc.at("N").get<int>();
    cfg.L = jc.at("L").get<int>();
    cfg.attention = parse_attention_variant(jc.at("attention_variant").get<std::string>());
    cfg.init_seed = jc.at("init_seed").get<std::uint64_t>();
    step = header.at("step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
  LoadedCheckpoint ck{Model(cfg), step};
  const auto& jp = header.at("params");
  if (jp.size() != ck.model.params().size()) {
    throw FormatError("checkpoint " + path.string() + ": parameter count mismatch");
  }
  for (std::size_t i = 0; i < jp.size(); ++i) {
    auto& p = ck.model.params()[i];
    if (jp[i].at("name").get<std::string>() != p.name ||
        jp[i].at("rows").get<std::size_t>() != p.value.rows() ||
        jp[i].at("cols").get<std::size_t>() != p.value.cols()) {
      throw FormatError("checkpoint " + path.string() + ": unexpected entry for " + p.name);
    }
    for (auto& v : p.value.data()) v = std::bit_cast<double>(get_u64(in));
  }
  if (!in) throw FormatError("checkpoint " + path.string() + ": truncated payload");
  return ck;
}

}  // namespace refineloc
