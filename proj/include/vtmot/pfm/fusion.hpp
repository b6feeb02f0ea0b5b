// SPDX-License-Identifier: Apache-2.0
//
// Progressive fusion of visible and thermal features.
//
//   stage 1, per modality m (temporal fusion):
//     a     = CrossAttention(x_m^t + p, x_m^{t-1} + p, x_m^{t-1})
//     xbar  = LN(x_m^t + a) + x_hm^{t-1}
//     xhat  = LN(xbar + FFN(xbar))
//   stage 2 (multimodal fusion):
//     x_f   = xhat_v + xhat_ir
//     cat   = [I(xhat_v, x_f), I(xhat_ir, x_f), I(x_f, xhat_v), I(x_f, xhat_ir)]
//     f     = LN(FFN(cat))
//
// where I(q, kv) is cross attention with queries q and keys/values kv, and
// every x is a token matrix produced by a 7x7 stem plus a 16x16 patch
// projection. Variants switch the stages on and off for ablations.
#pragma once

#include "vtmot/assignment.hpp"
#include "vtmot/pfm/core.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vtmot::pfm {

inline constexpr int kStemKernel = 7;
inline constexpr int kStemPad = 3;
inline constexpr int kPatch = 16;

/// Dense image, channels x height x width, row-major.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  static Image random(int c, int h, int w, Rng& rng);
  friend bool operator==(const Image&, const Image&) = default;
};

// ---------------------------------------------------------------------------
// Heatmap

struct ObjectCenter {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  static ObjectCenter from_box(const Box& b) { return ObjectCenter{b.cx(), b.cy(), b.w, b.h}; }
};

struct HeatMap {
  int height = 0;
  int width = 0;
  Matrix values;  // height x width, entries in [0,1]

  Image as_image() const;
};

/// Gaussian splat exp(-((x-cx)^2 + (y-cy)^2) / (2 sigma^2)) per object with
/// sigma = max(1, min(w,h)/6), centers clamped into the image, combined by
/// pointwise maximum. Pixel (x, y) is sampled at integer coordinates.
HeatMap render_heatmap(std::span<const ObjectCenter> objects, int height, int width);

// ---------------------------------------------------------------------------
// Token embedding

/// 7x7 convolution (stride 1, padding 3, no bias) followed by a per-channel
/// affine standing in for inference-mode batch normalization, then ReLU.
struct StemParams {
  Matrix kernel;  // out_channels x (in_channels * 49)
  Matrix scale;   // 1 x out_channels
  Matrix shift;   // 1 x out_channels

  int in_channels() const { return static_cast<int>(kernel.cols() / (kStemKernel * kStemKernel)); }
  int out_channels() const { return static_cast<int>(kernel.rows()); }
};

/// 16x16 stride-16 projection of the stem output to d.
struct PatchParams {
  Matrix weight;  // (stem_channels * 256) x d
  Matrix bias;    // 1 x d
};

struct EmbedParams {
  StemParams stem;
  PatchParams patch;

  static EmbedParams random(int in_channels, int stem_channels, int d, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct EmbedCache {
  int height = 0;
  int width = 0;
  int in_channels = 0;
  Matrix columns;  // (H*W) x (in_channels*49), im2col of the input
  Matrix conv;     // (H*W) x stem_channels, before the affine
  Matrix pre;      // after the affine, before ReLU
  Matrix patches;  // n_tokens x (stem_channels*256)
};

/// Tokens in row-major grid order; n_tokens = (H/16) * (W/16).
/// Throws Error(ShapeMismatch) for sizes not divisible by 16 or a channel mismatch.
TokenMatrix embed_tokens(const Image& image, const EmbedParams& p, EmbedCache* cache = nullptr);
/// Token projection only, from the patches of a cached stem pass.
TokenMatrix project_patches(const EmbedCache& cache, const PatchParams& p);
Image embed_tokens_backward(const EmbedCache& cache, const EmbedParams& p, const Matrix& dtokens, EmbedParams& grads);

// ---------------------------------------------------------------------------
// Positional encoding

/// Fixed 2-D sinusoidal encoding. Channels [0, d/2) encode the grid row and
/// [d/2, d) the grid column; within each half, pair i holds
/// (sin(pos * w_i), cos(pos * w_i)) with w_i = 10000^(-i / (d/4)).
/// Throws Error(InvalidValue) unless d is a positive multiple of 4.
Matrix positional_encoding(int grid_h, int grid_w, int d);

// ---------------------------------------------------------------------------
// Temporal fusion

struct TemporalParams {
  AttentionParams attention;
  LayerNormParams ln1;
  FfnParams ffn;
  LayerNormParams ln2;

  static TemporalParams random(int d, int n_heads, int hidden, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct TemporalCache {
  AttentionCache attention;
  LayerNormCache ln1;
  FfnCache ffn;
  LayerNormCache ln2;
};

TokenMatrix temporal_fusion(const TokenMatrix& x_t, const TokenMatrix& x_prev, const TokenMatrix& x_hm,
                            const Matrix& pos, const TemporalParams& p, TemporalCache* cache = nullptr);

struct TemporalInputGrads {
  Matrix x_t, x_prev, x_hm;
};
TemporalInputGrads temporal_fusion_backward(const TemporalCache& cache, const TemporalParams& p, const Matrix& dy,
                                            TemporalParams& grads);

// ---------------------------------------------------------------------------
// Multimodal fusion

enum class FusionVariant {
  Full,     // temporal fusion, then all four bridge branches
  TffOnly,  // temporal fusion, then xhat_v + xhat_ir
  MffUni,   // no temporal fusion; branches I(xv, x_f), I(xir, x_f)
  MffMul,   // no temporal fusion; branches I(x_f, xv), I(x_f, xir)
  MffBoth,  // no temporal fusion; all four branches
};

std::string_view to_string(FusionVariant v);
FusionVariant parse_variant(std::string_view s);
bool uses_temporal(FusionVariant v);
/// Bridge branch indices used by the variant, in concatenation order.
std::vector<int> bridge_branches(FusionVariant v);

struct MultimodalParams {
  std::array<AttentionParams, 4> bridge;  // I(xv,x_f), I(xir,x_f), I(x_f,xv), I(x_f,xir)
  FfnParams ffn;                          // (branches * d) -> hidden -> d
  LayerNormParams ln;

  static MultimodalParams random(FusionVariant v, int d, int n_heads, int hidden, Rng& rng);
  void visit(FusionVariant v, const std::string& prefix, const ParamVisitor& f);
};

struct MultimodalCache {
  std::array<AttentionCache, 4> bridge;
  Matrix concat;
  FfnCache ffn;
  LayerNormCache ln;
};

/// Throws Error(ShapeMismatch) for mismatched inputs or an FFN input width
/// that disagrees with the variant's branch count. TffOnly is rejected:
/// it has no multimodal stage.
TokenMatrix multimodal_fusion(const TokenMatrix& xv, const TokenMatrix& xir, const MultimodalParams& p,
                              FusionVariant variant, MultimodalCache* cache = nullptr);
std::pair<Matrix, Matrix> multimodal_fusion_backward(const MultimodalCache& cache, const MultimodalParams& p,
                                                     FusionVariant variant, const Matrix& dy,
                                                     MultimodalParams& grads);

// ---------------------------------------------------------------------------
// Composed module

struct PfmConfig {
  int d = 64;
  int n_heads = 4;
  int ffn_hidden = 128;
  int stem_channels = 4;
  int visible_channels = 3;
  int infrared_channels = 1;
  int height = 32;
  int width = 32;
  FusionVariant variant = FusionVariant::Full;

  /// Small configuration used by the gradient checks (d = 16, 32x32 images).
  static PfmConfig gradcheck();
  friend bool operator==(const PfmConfig&, const PfmConfig&) = default;
};

struct PfmParams {
  PfmConfig config;
  EmbedParams embed_visible;
  EmbedParams embed_infrared;
  EmbedParams embed_heatmap;  // temporal variants only
  TemporalParams temporal_visible;
  TemporalParams temporal_infrared;
  MultimodalParams fusion;  // all variants except TffOnly

  static PfmParams random(const PfmConfig& cfg, std::uint64_t seed);
  /// Every parameter used by the configured variant, in a fixed order.
  void visit(const ParamVisitor& f);
};

PfmParams zeros_like(const PfmParams& p);

struct PfmImages {
  Image vis_t, vis_prev, ir_t, ir_prev, heatmap;
};

struct PfmTokens {
  Matrix vis_t, vis_prev, ir_t, ir_prev, heatmap;
  int grid_h = 0;
  int grid_w = 0;
};

struct FuseCache {
  TemporalCache temporal_visible;
  TemporalCache temporal_infrared;
  MultimodalCache fusion;
  Matrix xhat_visible;
  Matrix xhat_infrared;
};

/// Both stages on already embedded tokens. With `parallel`, the two temporal
/// branches run on separate threads; results are bit-identical either way.
TokenMatrix fuse_tokens(const PfmTokens& tokens, const PfmParams& p, FuseCache* cache = nullptr,
                        bool parallel = false);
PfmTokens fuse_tokens_backward(const FuseCache& cache, const PfmParams& p, const Matrix& dy, PfmParams& grads);

struct PfmCache {
  std::array<EmbedCache, 5> embed;  // vis_t, vis_prev, ir_t, ir_prev, heatmap
  PfmTokens tokens;
  FuseCache fuse;
};

TokenMatrix pfm_forward(const PfmImages& images, const PfmParams& p, PfmCache* cache = nullptr,
                        bool parallel = false);
PfmImages pfm_backward(const PfmCache& cache, const PfmParams& p, const Matrix& dy, PfmParams& grads);

/// Renders the heatmap from previous-frame objects, then runs pfm_forward.
TokenMatrix pfm_forward(const Image& vis_t, const Image& vis_prev, const Image& ir_t, const Image& ir_prev,
                        std::span<const ObjectCenter> prev_objects, const PfmParams& p, PfmCache* cache = nullptr);

/// Named intermediates of a cached forward pass, for inspection.
std::map<std::string, Matrix> stage_outputs(const PfmCache& cache, const PfmParams& p, const Matrix& fused);

}  // namespace vtmot::pfm
