#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "refineloc/numcore.hpp"
#include "refineloc/pseudo_labels.hpp"

namespace refineloc {

enum class AttentionVariant {
  TwoLogit,       // two logits per snippet, softmax across background/foreground
  ScalarSigmoid,  // one logit per snippet, foreground = sigmoid(logit)
};

const char* attention_variant_name(AttentionVariant v);
AttentionVariant parse_attention_variant(const std::string& s);

inline constexpr std::size_t kBgColumn = 0;
inline constexpr std::size_t kFgColumn = 1;

struct ModelConfig {
  int D = 0;
  int N = 0;
  int L = 2;
  AttentionVariant attention = AttentionVariant::TwoLogit;
  std::uint64_t init_seed = 0;

  /// Width feeding the last layer of each head: D / 2^(L-1).
  int head_width() const;
  /// Throws ConfigError when L < 1, D or N < 1, or the head width collapses to 0.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Everything the model computes for one video.
struct ForwardMaps {
  Matrix C;      // T x N class activations (pre-softmax)
  Matrix A;      // T x 2 attention logits (T x 1 for the scalar variant)
  Matrix Cbar;   // row softmax of C
  Matrix Abf;    // T x 2, column 0 background, column 1 foreground; rows sum to 1
  std::vector<double> Atime;  // softmax over time of Abf[:, foreground]
  std::vector<double> yhat;   // sum_t Atime[t] * Cbar[t]

  std::size_t T() const { return Cbar.rows(); }
  std::size_t N() const { return Cbar.cols(); }
};

/// Layer inputs and pre-activations recorded by forward() for backward().
struct ForwardCache {
  std::vector<Matrix> cls_inputs;
  std::vector<Matrix> cls_preacts;
  std::vector<Matrix> att_inputs;
  std::vector<Matrix> att_preacts;
};

/// Upstream gradients with respect to the normalized maps.
struct MapGrads {
  std::vector<double> d_yhat;
  Matrix d_Abf;  // empty when no pseudo term was active
};

class Model {
 public:
  /// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  const Param& param(const std::string& name) const;
  Param& param(const std::string& name);

  ForwardMaps forward(const Matrix& F, ForwardCache* cache = nullptr) const;
  /// Accumulates parameter gradients for the given map gradients.
  void backward(const ForwardCache& cache, const ForwardMaps& maps, const MapGrads& grads);

  std::size_t param_count() const;

 private:
  Matrix run_head(const Matrix& F, std::size_t offset, std::vector<Matrix>* inputs,
                  std::vector<Matrix>* preacts) const;
  void backprop_head(std::size_t offset, const std::vector<Matrix>& inputs,
                     const std::vector<Matrix>& preacts, Matrix grad);

  ModelConfig cfg_;
  std::vector<Param> params_;  // classifier layers first, then attention layers
};

Model init_model(const ModelConfig& cfg);
ForwardMaps forward(const Model& model, const Matrix& F);
/// Forward for a model configured with the scalar attention variant; throws ConfigError otherwise.
ForwardMaps scalar_attention_forward(const Model& model, const Matrix& F);

struct LossResult {
  double total = 0.0;
  double video_ce = 0.0;
  double pseudo_term = 0.0;  // already multiplied by beta
  MapGrads grads;
};

/// Video cross-entropy plus beta times the class-weighted pseudo-label
/// cross-entropy averaged over the sampled snippets. Per-video weights are
/// |M|/(2 n_bg) and |M|/(2 n_fg) over the sampled set M.
LossResult total_loss(const ForwardMaps& maps, std::span<const double> y, const PseudoLabels* pseudo,
                      double beta);

/// Forward, loss and backward for one video; gradients are added to the params.
double accumulate_gradients(Model& model, const Matrix& F, std::span<const double> y,
                            const PseudoLabels* pseudo, double beta);

/// Loss only, no gradients.
double evaluate_loss(const Model& model, const Matrix& F, std::span<const double> y,
                     const PseudoLabels* pseudo, double beta);

// Checkpoint layout:
//   bytes 0..7   magic "RLCKPT01"
//   bytes 8..15  u64 little-endian length H of the JSON header
//   next H bytes JSON {"format","version","config","step","params":[{"name","rows","cols"}]}
//   then each param's values as little-endian f64, row-major, in header order
// Optimizer moments are not stored.
void save_checkpoint(const Model& model, std::int64_t step, const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model model;
  std::int64_t step = 0;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace refineloc
