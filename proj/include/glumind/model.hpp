#pragma once

#include "glumind/autodiff.hpp"
#include "glumind/signals.hpp"
#include "glumind/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glumind {

/// Attention layouts compared in the architecture ablation.
enum class Variant { Full, CrossOnly, MultiScaleOnly, PlainMHA };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

/// Downsampling factors of the multi-scale branch.
inline constexpr std::array<int, 3> kScales = {1, 2, 4};

struct ModelConfig {
  Index d_model = 64;
  Index heads = 4;
  Index history = 80;  ///< T, glucose samples per window
  Index horizon = 6;   ///< m, forecast steps
  std::vector<Modality> aux_modalities;
  Index ff_hidden = 128;
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  Index max_len = 2048;  ///< positional table rows
  int layers = 1;
  double norm_eps = 1e-5;

  [[nodiscard]] Index n_aux() const { return static_cast<Index>(aux_modalities.size()); }
  [[nodiscard]] bool uses_cross() const {
    return (variant == Variant::Full || variant == Variant::CrossOnly) && n_aux() > 0;
  }
  [[nodiscard]] bool uses_multiscale() const { return variant == Variant::Full || variant == Variant::MultiScaleOnly; }
  [[nodiscard]] bool uses_fusion() const { return variant != Variant::CrossOnly; }
  /// m in {1, 6, 12}: the 5/30/60-minute horizons.
  [[nodiscard]] bool canonical_horizon() const { return horizon == 1 || horizon == 6 || horizon == 12; }
  void validate() const;
  [[nodiscard]] bool operator==(const ModelConfig&) const = default;
};

/// Parameter-name prefix of encoder layer `layer` ("" for the first).
std::string layer_prefix(int layer);

/// All parameters of one encoder plus the fixed positional table.
class GluMindModel {
 public:
  /// Scaled-uniform initialization (bound 1/sqrt(fan_in)) from config.seed.
  explicit GluMindModel(ModelConfig config);
  GluMindModel(ModelConfig config, ParamStore params);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] ParamStore& params() { return params_; }
  [[nodiscard]] const ParamStore& params() const { return params_; }
  [[nodiscard]] const Matrix& positional_table() const { return pos_table_; }

  /// Records the forward pass of one window; returns a 1 x m node.
  [[nodiscard]] Var forward(const ParamBinding& binding, const WindowSample& sample) const;

  /// Gradient-free predictions, one m-vector per sample.
  [[nodiscard]] std::vector<std::vector<double>> predict(std::span<const WindowSample> samples) const;
  [[nodiscard]] std::vector<double> predict(const WindowSample& sample) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  Matrix pos_table_;
};

GluMindModel init_params(const ModelConfig& config);

// ---- building blocks ----------------------------------------------------

struct AttentionWeights {
  Var wq, wk, wv, wh;
  static AttentionWeights bind(const ParamBinding& b, std::string_view prefix);
};

struct FeedForwardNorm {
  Var w1, b1, w2, b2, gain, bias;
  static FeedForwardNorm bind(const ParamBinding& b, std::string_view prefix);
};

/// Per-timestep affine lift to d_model plus the positional rows 0..t-1.
Var embed_and_encode(const ParamBinding& b, const Matrix& pos_table, Modality modality, std::span<const double> x);

/// Softmax(Q K^T / sqrt(d_model)) V.
Var scaled_attention(Var q, Var k, Var v, double d_model);

/// Heads on disjoint d_model/heads column blocks of the projections,
/// concatenated and projected by W_H. Output has one row per query row.
Var multi_head(Var x_q, Var x_kv, const AttentionWeights& w, Index heads);

/// LayerNorm(x + FF(x)) with a GELU two-layer feed-forward.
Var feed_forward_add_norm(Var x, const FeedForwardNorm& w, double eps);

/// Sum of per-modality cross-attention (glucose queries, aux keys/values at
/// native length), then feed-forward and Add&Norm.
Var cross_attention_branch(const ParamBinding& b, const ModelConfig& cfg, Var x_g, std::span<const Var> aux,
                           std::string_view prefix = "");

/// Aux windows resampled onto the 5-minute grid, embedded, concatenated with
/// X_G along features and projected back to T x d_model.
Var fuse_inputs(const ParamBinding& b, const ModelConfig& cfg, const Matrix& pos_table, Var x_g,
                const WindowSample& sample);

/// Self-attention at downsampling factors 1, 2, 4, upsampled and summed, then
/// feed-forward and Add&Norm.
Var multi_scale_branch(const ParamBinding& b, const ModelConfig& cfg, Var x_i, std::string_view prefix = "");

}  // namespace glumind
