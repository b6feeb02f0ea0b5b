// SPDX-License-Identifier: Apache-2.0
#include "vtmot/pfm/fusion.hpp"

#include "vtmot/error.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace vtmot::pfm {

namespace {

constexpr int kTaps = kStemKernel * kStemKernel;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

LayerNormParams random_layer_norm(Eigen::Index d, Rng& rng) {
  LayerNormParams p;
  p.gamma = random_matrix(1, d, rng, 0.1).array() + 1.0;
  p.beta = random_matrix(1, d, rng, 0.1);
  return p;
}

Matrix zeros(const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()); }

EmbedParams zeros_like(const EmbedParams& p) {
  return EmbedParams{StemParams{zeros(p.stem.kernel), zeros(p.stem.scale), zeros(p.stem.shift)},
                     PatchParams{zeros(p.patch.weight), zeros(p.patch.bias)}};
}

TemporalParams zeros_like(const TemporalParams& p) {
  return TemporalParams{pfm::zeros_like(p.attention), pfm::zeros_like(p.ln1), pfm::zeros_like(p.ffn),
                        pfm::zeros_like(p.ln2)};
}

MultimodalParams zeros_like(const MultimodalParams& p) {
  MultimodalParams z;
  for (std::size_t b = 0; b < p.bridge.size(); ++b) z.bridge[b] = pfm::zeros_like(p.bridge[b]);
  z.ffn = pfm::zeros_like(p.ffn);
  z.ln = pfm::zeros_like(p.ln);
  return z;
}

void validate(const PfmConfig& c) {
  if (c.d <= 0 || c.d % 4 != 0) throw Error(ErrorCode::InvalidValue, "d must be a positive multiple of 4");
  if (c.n_heads < 1 || c.d % c.n_heads != 0) throw Error(ErrorCode::InvalidValue, "d must be divisible by n_heads");
  if (c.ffn_hidden < 1 || c.stem_channels < 1 || c.visible_channels < 1 || c.infrared_channels < 1) {
    throw Error(ErrorCode::InvalidValue, "widths and channel counts must be positive");
  }
  if (c.height <= 0 || c.width <= 0 || c.height % kPatch != 0 || c.width % kPatch != 0) {
    throw Error(ErrorCode::InvalidValue, "image size must be a positive multiple of 16");
  }
}

// Bridge branch b takes (query, key/value) from (xv, xir, x_f).
struct BranchInputs {
  int query;
  int kv;
};
constexpr std::array<BranchInputs, 4> kBranchInputs{{{0, 2}, {1, 2}, {2, 0}, {2, 1}}};

}  // namespace

Image Image::random(int c, int h, int w, Rng& rng) {
  Image img(c, h, w);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// ---------------------------------------------------------------------------
// heatmap

Image HeatMap::as_image() const {
  Image img(1, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) img.at(0, y, x) = values(y, x);
  }
  return img;
}

HeatMap render_heatmap(std::span<const ObjectCenter> objects, int height, int width) {
  if (height <= 0 || width <= 0) throw Error(ErrorCode::InvalidValue, "heatmap size must be positive");
  HeatMap hm{height, width, Matrix::Zero(height, width)};
  for (const ObjectCenter& o : objects) {
    const double sigma = std::max(1.0, std::min(o.w, o.h) / 6.0);
    const double cx = std::clamp(o.cx, 0.0, static_cast<double>(width - 1));
    const double cy = std::clamp(o.cy, 0.0, static_cast<double>(height - 1));
    const double denom = 2.0 * sigma * sigma;
    for (int y = 0; y < height; ++y) {
      const double dy2 = (y - cy) * (y - cy);
      for (int x = 0; x < width; ++x) {
        const double v = std::exp(-((x - cx) * (x - cx) + dy2) / denom);
        hm.values(y, x) = std::max(hm.values(y, x), v);
      }
    }
  }
  return hm;
}

// ---------------------------------------------------------------------------
// embedding

EmbedParams EmbedParams::random(int in_channels, int stem_channels, int d, Rng& rng) {
  EmbedParams p;
  p.stem.kernel = random_matrix(stem_channels, in_channels * kTaps, rng, std::sqrt(3.0 / (in_channels * kTaps)));
  p.stem.scale = random_matrix(1, stem_channels, rng, 0.1).array() + 1.0;
  p.stem.shift = random_matrix(1, stem_channels, rng, 0.1);
  const int fan_in = stem_channels * kPatch * kPatch;
  p.patch.weight = random_matrix(fan_in, d, rng, std::sqrt(3.0 / fan_in));
  p.patch.bias = random_matrix(1, d, rng, 0.1);
  return p;
}

void EmbedParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".stem.kernel", stem.kernel);
  f(prefix + ".stem.scale", stem.scale);
  f(prefix + ".stem.shift", stem.shift);
  f(prefix + ".patch.weight", patch.weight);
  f(prefix + ".patch.bias", patch.bias);
}

TokenMatrix embed_tokens(const Image& img, const EmbedParams& p, EmbedCache* cache) {
  const int C = img.channels, H = img.height, W = img.width;
  const int S = p.stem.out_channels();
  require(C >= 1 && H > 0 && W > 0 && img.data.size() == static_cast<std::size_t>(C) * H * W,
          "embed: malformed image");
  require(H % kPatch == 0 && W % kPatch == 0, "embed: image size must be a multiple of 16");
  require(p.stem.kernel.cols() == static_cast<Eigen::Index>(C) * kTaps,
          "embed: image has " + std::to_string(C) + " channels, stem expects " + std::to_string(p.stem.in_channels()));
  require(p.stem.scale.rows() == 1 && p.stem.scale.cols() == S && p.stem.shift.rows() == 1 &&
              p.stem.shift.cols() == S,
          "embed: stem scale/shift width differs from stem channels");
  require(p.patch.weight.rows() == static_cast<Eigen::Index>(S) * kPatch * kPatch,
          "embed: patch weight rows differ from stem_channels * 256");
  require(p.patch.bias.rows() == 1 && p.patch.bias.cols() == p.patch.weight.cols(),
          "embed: patch bias width differs from d");

  Matrix columns = Matrix::Zero(static_cast<Eigen::Index>(H) * W, static_cast<Eigen::Index>(C) * kTaps);
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kStemKernel; ++ky) {
      for (int kx = 0; kx < kStemKernel; ++kx) {
        const Eigen::Index col = (c * kStemKernel + ky) * kStemKernel + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - kStemPad;
          if (sy < 0 || sy >= H) continue;
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - kStemPad;
            if (sx < 0 || sx >= W) continue;
            columns(static_cast<Eigen::Index>(y) * W + x, col) = img.at(c, sy, sx);
          }
        }
      }
    }
  }

  Matrix conv = columns * p.stem.kernel.transpose();
  Matrix pre = (conv.array().rowwise() * p.stem.scale.row(0).array()).matrix();
  pre.rowwise() += p.stem.shift.row(0);

  const int gh = H / kPatch, gw = W / kPatch;
  Matrix patches(static_cast<Eigen::Index>(gh) * gw, static_cast<Eigen::Index>(S) * kPatch * kPatch);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index t = static_cast<Eigen::Index>(gy) * gw + gx;
      for (int s = 0; s < S; ++s) {
        for (int py = 0; py < kPatch; ++py) {
          for (int px = 0; px < kPatch; ++px) {
            const Eigen::Index pixel = static_cast<Eigen::Index>(gy * kPatch + py) * W + gx * kPatch + px;
            patches(t, (s * kPatch + py) * kPatch + px) = std::max(pre(pixel, s), 0.0);
          }
        }
      }
    }
  }

  Matrix tokens = patches * p.patch.weight;
  tokens.rowwise() += p.patch.bias.row(0);
  if (cache) {
    cache->height = H;
    cache->width = W;
    cache->in_channels = C;
    cache->columns = std::move(columns);
    cache->conv = std::move(conv);
    cache->pre = std::move(pre);
    cache->patches = std::move(patches);
  }
  return tokens;
}

TokenMatrix project_patches(const EmbedCache& cache, const PatchParams& p) {
  Matrix tokens = cache.patches * p.weight;
  tokens.rowwise() += p.bias.row(0);
  return tokens;
}

Image embed_tokens_backward(const EmbedCache& c, const EmbedParams& p, const Matrix& dtokens, EmbedParams& grads) {
  const int H = c.height, W = c.width, S = p.stem.out_channels();
  grads.patch.weight += c.patches.transpose() * dtokens;
  grads.patch.bias += dtokens.colwise().sum();
  const Matrix dpatches = dtokens * p.patch.weight.transpose();

  // Scatter back to pixels, masking by ReLU.
  const int gh = H / kPatch, gw = W / kPatch;
  Matrix dpre = Matrix::Zero(static_cast<Eigen::Index>(H) * W, S);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index t = static_cast<Eigen::Index>(gy) * gw + gx;
      for (int s = 0; s < S; ++s) {
        for (int py = 0; py < kPatch; ++py) {
          for (int px = 0; px < kPatch; ++px) {
            const Eigen::Index pixel = static_cast<Eigen::Index>(gy * kPatch + py) * W + gx * kPatch + px;
            if (c.pre(pixel, s) > 0.0) dpre(pixel, s) = dpatches(t, (s * kPatch + py) * kPatch + px);
          }
        }
      }
    }
  }

  grads.stem.scale += (dpre.array() * c.conv.array()).matrix().colwise().sum();
  grads.stem.shift += dpre.colwise().sum();
  const Matrix dconv = (dpre.array().rowwise() * p.stem.scale.row(0).array()).matrix();
  grads.stem.kernel += dconv.transpose() * c.columns;
  const Matrix dcolumns = dconv * p.stem.kernel;

  Image dimg(c.in_channels, H, W);
  for (int ch = 0; ch < c.in_channels; ++ch) {
    for (int ky = 0; ky < kStemKernel; ++ky) {
      for (int kx = 0; kx < kStemKernel; ++kx) {
        const Eigen::Index col = (ch * kStemKernel + ky) * kStemKernel + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - kStemPad;
          if (sy < 0 || sy >= H) continue;
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - kStemPad;
            if (sx < 0 || sx >= W) continue;
            dimg.at(ch, sy, sx) += dcolumns(static_cast<Eigen::Index>(y) * W + x, col);
          }
        }
      }
    }
  }
  return dimg;
}

// ---------------------------------------------------------------------------
// positional encoding

Matrix positional_encoding(int grid_h, int grid_w, int d) {
  if (d <= 0 || d % 4 != 0) throw Error(ErrorCode::InvalidValue, "positional encoding width must be a multiple of 4");
  if (grid_h <= 0 || grid_w <= 0) throw Error(ErrorCode::InvalidValue, "positional encoding grid must be non-empty");
  const int quarter = d / 4;
  Matrix pe(static_cast<Eigen::Index>(grid_h) * grid_w, d);
  for (int gy = 0; gy < grid_h; ++gy) {
    for (int gx = 0; gx < grid_w; ++gx) {
      const Eigen::Index t = static_cast<Eigen::Index>(gy) * grid_w + gx;
      for (int i = 0; i < quarter; ++i) {
        const double omega = std::pow(10000.0, -static_cast<double>(i) / quarter);
        pe(t, 2 * i) = std::sin(gy * omega);
        pe(t, 2 * i + 1) = std::cos(gy * omega);
        pe(t, d / 2 + 2 * i) = std::sin(gx * omega);
        pe(t, d / 2 + 2 * i + 1) = std::cos(gx * omega);
      }
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// temporal fusion

TemporalParams TemporalParams::random(int d, int n_heads, int hidden, Rng& rng) {
  TemporalParams p;
  p.attention = AttentionParams::random(d, n_heads, rng);
  p.ln1 = random_layer_norm(d, rng);
  p.ffn = FfnParams::random(d, hidden, d, rng);
  p.ln2 = random_layer_norm(d, rng);
  return p;
}

void TemporalParams::visit(const std::string& prefix, const ParamVisitor& f) {
  attention.visit(prefix + ".attention", f);
  ln1.visit(prefix + ".ln1", f);
  ffn.visit(prefix + ".ffn", f);
  ln2.visit(prefix + ".ln2", f);
}

TokenMatrix temporal_fusion(const TokenMatrix& x_t, const TokenMatrix& x_prev, const TokenMatrix& x_hm,
                            const Matrix& pos, const TemporalParams& p, TemporalCache* cache) {
  require(x_t.rows() == x_prev.rows() && x_t.rows() == x_hm.rows() && x_t.rows() == pos.rows(),
          "temporal fusion: token counts differ");
  require(x_t.cols() == x_prev.cols() && x_t.cols() == x_hm.cols() && x_t.cols() == pos.cols(),
          "temporal fusion: token widths differ");
  TemporalCache local;
  TemporalCache& c = cache ? *cache : local;
  const Matrix a = multi_head_cross_attention(x_t + pos, x_prev + pos, x_prev, p.attention, &c.attention);
  const Matrix xbar = layer_norm(x_t + a, p.ln1, kLayerNormEps, &c.ln1) + x_hm;
  return layer_norm(xbar + ffn(xbar, p.ffn, &c.ffn), p.ln2, kLayerNormEps, &c.ln2);
}

TemporalInputGrads temporal_fusion_backward(const TemporalCache& c, const TemporalParams& p, const Matrix& dy,
                                            TemporalParams& grads) {
  const Matrix du2 = layer_norm_backward(c.ln2, p.ln2, dy, grads.ln2);
  const Matrix dxbar = du2 + ffn_backward(c.ffn, p.ffn, du2, grads.ffn);
  const Matrix du1 = layer_norm_backward(c.ln1, p.ln1, dxbar, grads.ln1);
  const AttentionInputGrads ga = attention_backward(c.attention, p.attention, du1, grads.attention);
  return TemporalInputGrads{du1 + ga.q_in, ga.k_in + ga.v_in, dxbar};
}

// ---------------------------------------------------------------------------
// multimodal fusion

std::string_view to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::Full: return "full";
    case FusionVariant::TffOnly: return "tff";
    case FusionVariant::MffUni: return "mff-uni";
    case FusionVariant::MffMul: return "mff-mul";
    case FusionVariant::MffBoth: return "mff-both";
  }
  return "full";
}

FusionVariant parse_variant(std::string_view s) {
  for (FusionVariant v : {FusionVariant::Full, FusionVariant::TffOnly, FusionVariant::MffUni, FusionVariant::MffMul,
                          FusionVariant::MffBoth}) {
    if (s == to_string(v)) return v;
  }
  throw Error(ErrorCode::InvalidValue, "unknown fusion variant '" + std::string(s) + "'");
}

bool uses_temporal(FusionVariant v) { return v == FusionVariant::Full || v == FusionVariant::TffOnly; }

std::vector<int> bridge_branches(FusionVariant v) {
  switch (v) {
    case FusionVariant::Full:
    case FusionVariant::MffBoth: return {0, 1, 2, 3};
    case FusionVariant::MffUni: return {0, 1};
    case FusionVariant::MffMul: return {2, 3};
    case FusionVariant::TffOnly: return {};
  }
  return {};
}

MultimodalParams MultimodalParams::random(FusionVariant v, int d, int n_heads, int hidden, Rng& rng) {
  MultimodalParams p;
  const std::vector<int> branches = bridge_branches(v);
  for (int b : branches) p.bridge[static_cast<std::size_t>(b)] = AttentionParams::random(d, n_heads, rng);
  p.ffn = FfnParams::random(static_cast<Eigen::Index>(branches.size()) * d, hidden, d, rng);
  p.ln = random_layer_norm(d, rng);
  return p;
}

void MultimodalParams::visit(FusionVariant v, const std::string& prefix, const ParamVisitor& f) {
  for (int b : bridge_branches(v)) bridge[static_cast<std::size_t>(b)].visit(prefix + ".bridge" + std::to_string(b), f);
  ffn.visit(prefix + ".ffn", f);
  ln.visit(prefix + ".ln", f);
}

TokenMatrix multimodal_fusion(const TokenMatrix& xv, const TokenMatrix& xir, const MultimodalParams& p,
                              FusionVariant variant, MultimodalCache* cache) {
  const std::vector<int> branches = bridge_branches(variant);
  require(!branches.empty(), "multimodal fusion: variant has no multimodal stage");
  require(xv.rows() == xir.rows() && xv.cols() == xir.cols(), "multimodal fusion: modality token shapes differ");
  const Eigen::Index d = xv.cols();
  require(p.ffn.w1.rows() == static_cast<Eigen::Index>(branches.size()) * d,
          "multimodal fusion: FFN input width " + std::to_string(p.ffn.w1.rows()) + " does not match " +
              std::to_string(branches.size()) + " branches of width " + std::to_string(d));

  MultimodalCache local;
  MultimodalCache& c = cache ? *cache : local;
  const Matrix xf = xv + xir;
  const std::array<const Matrix*, 3> inputs{&xv, &xir, &xf};
  c.concat.resize(xv.rows(), static_cast<Eigen::Index>(branches.size()) * d);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto b = static_cast<std::size_t>(branches[i]);
    const Matrix& q = *inputs[static_cast<std::size_t>(kBranchInputs[b].query)];
    const Matrix& kv = *inputs[static_cast<std::size_t>(kBranchInputs[b].kv)];
    c.concat.middleCols(static_cast<Eigen::Index>(i) * d, d) =
        multi_head_cross_attention(q, kv, kv, p.bridge[b], &c.bridge[b]);
  }
  return layer_norm(ffn(c.concat, p.ffn, &c.ffn), p.ln, kLayerNormEps, &c.ln);
}

std::pair<Matrix, Matrix> multimodal_fusion_backward(const MultimodalCache& c, const MultimodalParams& p,
                                                     FusionVariant variant, const Matrix& dy,
                                                     MultimodalParams& grads) {
  const std::vector<int> branches = bridge_branches(variant);
  const Matrix dg = layer_norm_backward(c.ln, p.ln, dy, grads.ln);
  const Matrix dcat = ffn_backward(c.ffn, p.ffn, dg, grads.ffn);
  const Eigen::Index d = dy.cols();
  std::array<Matrix, 3> dinputs;
  for (Matrix& m : dinputs) m = Matrix::Zero(dy.rows(), d);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto b = static_cast<std::size_t>(branches[i]);
    const AttentionInputGrads g =
        attention_backward(c.bridge[b], p.bridge[b], dcat.middleCols(static_cast<Eigen::Index>(i) * d, d),
                           grads.bridge[b]);
    dinputs[static_cast<std::size_t>(kBranchInputs[b].query)] += g.q_in;
    dinputs[static_cast<std::size_t>(kBranchInputs[b].kv)] += g.k_in + g.v_in;
  }
  return {dinputs[0] + dinputs[2], dinputs[1] + dinputs[2]};
}

// ---------------------------------------------------------------------------
// composed module

PfmConfig PfmConfig::gradcheck() {
  PfmConfig c;
  c.d = 16;
  c.n_heads = 4;
  c.ffn_hidden = 32;
  c.stem_channels = 2;
  return c;
}

PfmParams PfmParams::random(const PfmConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  PfmParams p;
  p.config = cfg;
  p.embed_visible = EmbedParams::random(cfg.visible_channels, cfg.stem_channels, cfg.d, rng);
  p.embed_infrared = EmbedParams::random(cfg.infrared_channels, cfg.stem_channels, cfg.d, rng);
  if (uses_temporal(cfg.variant)) {
    p.embed_heatmap = EmbedParams::random(1, cfg.stem_channels, cfg.d, rng);
    p.temporal_visible = TemporalParams::random(cfg.d, cfg.n_heads, cfg.ffn_hidden, rng);
    p.temporal_infrared = TemporalParams::random(cfg.d, cfg.n_heads, cfg.ffn_hidden, rng);
  }
  if (cfg.variant != FusionVariant::TffOnly) {
    p.fusion = MultimodalParams::random(cfg.variant, cfg.d, cfg.n_heads, cfg.ffn_hidden, rng);
  }
  return p;
}

void PfmParams::visit(const ParamVisitor& f) {
  embed_visible.visit("embed.visible", f);
  embed_infrared.visit("embed.infrared", f);
  if (uses_temporal(config.variant)) {
    embed_heatmap.visit("embed.heatmap", f);
    temporal_visible.visit("temporal.visible", f);
    temporal_infrared.visit("temporal.infrared", f);
  }
  if (config.variant != FusionVariant::TffOnly) fusion.visit(config.variant, "fusion", f);
}

PfmParams zeros_like(const PfmParams& p) {
  PfmParams z;
  z.config = p.config;
  z.embed_visible = zeros_like(p.embed_visible);
  z.embed_infrared = zeros_like(p.embed_infrared);
  z.embed_heatmap = zeros_like(p.embed_heatmap);
  z.temporal_visible = zeros_like(p.temporal_visible);
  z.temporal_infrared = zeros_like(p.temporal_infrared);
  z.fusion = zeros_like(p.fusion);
  return z;
}

TokenMatrix fuse_tokens(const PfmTokens& x, const PfmParams& p, FuseCache* cache, bool parallel) {
  const FusionVariant v = p.config.variant;
  require(x.vis_t.rows() == static_cast<Eigen::Index>(x.grid_h) * x.grid_w, "fusion: token count differs from grid");
  FuseCache local;
  FuseCache& c = cache ? *cache : local;
  if (uses_temporal(v)) {
    const Matrix pos = positional_encoding(x.grid_h, x.grid_w, static_cast<int>(x.vis_t.cols()));
    const auto run_ir = [&] {
      c.xhat_infrared = temporal_fusion(x.ir_t, x.ir_prev, x.heatmap, pos, p.temporal_infrared, &c.temporal_infrared);
    };
    if (parallel) {
      std::jthread worker(run_ir);
      c.xhat_visible = temporal_fusion(x.vis_t, x.vis_prev, x.heatmap, pos, p.temporal_visible, &c.temporal_visible);
    } else {
      c.xhat_visible = temporal_fusion(x.vis_t, x.vis_prev, x.heatmap, pos, p.temporal_visible, &c.temporal_visible);
      run_ir();
    }
  } else {
    c.xhat_visible = x.vis_t;
    c.xhat_infrared = x.ir_t;
  }
  if (v == FusionVariant::TffOnly) return c.xhat_visible + c.xhat_infrared;
  return multimodal_fusion(c.xhat_visible, c.xhat_infrared, p.fusion, v, &c.fusion);
}

PfmTokens fuse_tokens_backward(const FuseCache& c, const PfmParams& p, const Matrix& dy, PfmParams& grads) {
  const FusionVariant v = p.config.variant;
  Matrix dxv, dxir;
  if (v == FusionVariant::TffOnly) {
    dxv = dy;
    dxir = dy;
  } else {
    std::tie(dxv, dxir) = multimodal_fusion_backward(c.fusion, p.fusion, v, dy, grads.fusion);
  }

  PfmTokens d;
  const Matrix zero = Matrix::Zero(dy.rows(), dy.cols());
  if (uses_temporal(v)) {
    const TemporalInputGrads gv = temporal_fusion_backward(c.temporal_visible, p.temporal_visible, dxv,
                                                           grads.temporal_visible);
    const TemporalInputGrads gi = temporal_fusion_backward(c.temporal_infrared, p.temporal_infrared, dxir,
                                                           grads.temporal_infrared);
    d.vis_t = gv.x_t;
    d.vis_prev = gv.x_prev;
    d.ir_t = gi.x_t;
    d.ir_prev = gi.x_prev;
    d.heatmap = gv.x_hm + gi.x_hm;
  } else {
    d.vis_t = dxv;
    d.ir_t = dxir;
    d.vis_prev = zero;
    d.ir_prev = zero;
    d.heatmap = zero;
  }
  return d;
}

TokenMatrix pfm_forward(const PfmImages& img, const PfmParams& p, PfmCache* cache, bool parallel) {
  const PfmConfig& cfg = p.config;
  validate(cfg);
  for (const Image* im : {&img.vis_t, &img.ir_t}) {
    require(im->height == cfg.height && im->width == cfg.width,
            "pfm: image is " + std::to_string(im->height) + "x" + std::to_string(im->width) + ", configured " +
                std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  PfmCache local;
  PfmCache& c = cache ? *cache : local;
  PfmTokens& x = c.tokens;
  x.grid_h = cfg.height / kPatch;
  x.grid_w = cfg.width / kPatch;
  x.vis_t = embed_tokens(img.vis_t, p.embed_visible, &c.embed[0]);
  x.ir_t = embed_tokens(img.ir_t, p.embed_infrared, &c.embed[2]);
  if (uses_temporal(cfg.variant)) {
    for (const Image* im : {&img.vis_prev, &img.ir_prev, &img.heatmap}) {
      require(im->height == cfg.height && im->width == cfg.width, "pfm: previous frame or heatmap size differs");
    }
    x.vis_prev = embed_tokens(img.vis_prev, p.embed_visible, &c.embed[1]);
    x.ir_prev = embed_tokens(img.ir_prev, p.embed_infrared, &c.embed[3]);
    x.heatmap = embed_tokens(img.heatmap, p.embed_heatmap, &c.embed[4]);
  }
  return fuse_tokens(x, p, &c.fuse, parallel);
}

PfmImages pfm_backward(const PfmCache& c, const PfmParams& p, const Matrix& dy, PfmParams& grads) {
  const PfmTokens dt = fuse_tokens_backward(c.fuse, p, dy, grads);
  PfmImages out;
  out.vis_t = embed_tokens_backward(c.embed[0], p.embed_visible, dt.vis_t, grads.embed_visible);
  out.ir_t = embed_tokens_backward(c.embed[2], p.embed_infrared, dt.ir_t, grads.embed_infrared);
  if (uses_temporal(p.config.variant)) {
    out.vis_prev = embed_tokens_backward(c.embed[1], p.embed_visible, dt.vis_prev, grads.embed_visible);
    out.ir_prev = embed_tokens_backward(c.embed[3], p.embed_infrared, dt.ir_prev, grads.embed_infrared);
    out.heatmap = embed_tokens_backward(c.embed[4], p.embed_heatmap, dt.heatmap, grads.embed_heatmap);
  }
  return out;
}

TokenMatrix pfm_forward(const Image& vis_t, const Image& vis_prev, const Image& ir_t, const Image& ir_prev,
                        std::span<const ObjectCenter> prev_objects, const PfmParams& p, PfmCache* cache) {
  PfmImages img{vis_t, vis_prev, ir_t, ir_prev,
                render_heatmap(prev_objects, p.config.height, p.config.width).as_image()};
  return pfm_forward(img, p, cache);
}

std::map<std::string, Matrix> stage_outputs(const PfmCache& c, const PfmParams& p, const Matrix& fused) {
  std::map<std::string, Matrix> out;
  const FusionVariant v = p.config.variant;
  out["embed.visible.t"] = c.tokens.vis_t;
  out["embed.infrared.t"] = c.tokens.ir_t;
  if (uses_temporal(v)) {
    out["embed.visible.prev"] = c.tokens.vis_prev;
    out["embed.infrared.prev"] = c.tokens.ir_prev;
    out["embed.heatmap"] = c.tokens.heatmap;
    out["positional"] = positional_encoding(c.tokens.grid_h, c.tokens.grid_w, p.config.d);
    out["temporal.visible"] = c.fuse.xhat_visible;
    out["temporal.infrared"] = c.fuse.xhat_infrared;
  }
  if (v != FusionVariant::TffOnly) {
    out["fusion.concat"] = c.fuse.fusion.concat;
  }
  out["fused"] = fused;
  return out;
}

}  // namespace vtmot::pfm
