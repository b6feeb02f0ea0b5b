// SPDX-License-Identifier: Apache-2.0
#include "vtmot/pfm/gradcheck.hpp"

#include "vtmot/error.hpp"
#include "vtmot/pfm/extended.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string_view>

namespace vtmot::pfm {

namespace {

constexpr int kMaxAttempts = 64;
constexpr double kStemMargin = 2e-5;
constexpr double kFfnMargin = 1e-4;

GradSlot slot(std::string name, Matrix& value, const Matrix& grad) {
  return GradSlot{std::move(name), std::span<double>(value.data(), static_cast<std::size_t>(value.size())),
                  std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size()))};
}

GradSlot slot(std::string name, Image& value, const Image& grad) {
  return GradSlot{std::move(name), std::span<double>(value.data), std::span<const double>(grad.data)};
}

double min_abs(const Matrix& m) { return m.size() == 0 ? std::numeric_limits<double>::infinity() : m.cwiseAbs().minCoeff(); }

std::uint64_t attempt_seed(std::uint64_t seed, int attempt) {
  return seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL;
}

[[noreturn]] void no_seed(std::string_view what) {
  throw Error(ErrorCode::NonFinite, std::string(what) + ": no seed kept ReLU pre-activations away from zero");
}

// Parameter/gradient slots in visit order, excluding names with `skip_prefix`.
std::vector<GradSlot> param_slots(PfmParams& p, PfmParams& g, std::string_view skip_prefix = {}) {
  std::vector<std::pair<std::string, Matrix*>> values, grads;
  p.visit([&](const std::string& n, Matrix& m) { values.emplace_back(n, &m); });
  g.visit([&](const std::string& n, Matrix& m) { grads.emplace_back(n, &m); });
  std::vector<GradSlot> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!skip_prefix.empty() && values[i].first.starts_with(skip_prefix)) continue;
    out.push_back(slot(values[i].first, *values[i].second, *grads[i].second));
  }
  return out;
}

double fuse_margin(const FuseCache& c, FusionVariant v) {
  double m = std::numeric_limits<double>::infinity();
  if (uses_temporal(v)) m = std::min({m, min_abs(c.temporal_visible.ffn.pre), min_abs(c.temporal_infrared.ffn.pre)});
  if (v != FusionVariant::TffOnly) m = std::min(m, min_abs(c.fusion.ffn.pre));
  return m;
}

// Loss relative to its value at the unperturbed point, evaluated in extended
// precision; the constant offset leaves the difference quotient unchanged.
template <class F>
LossFn relative_loss(F eval) {
  const extended::Real base = eval();
  return [eval, base](const GradSlot&) { return static_cast<double>(eval() - base); };
}

constexpr double kRefineAbove = kGradTolerance / 100.0;

// Double-precision differences, with entries near the tolerance re-measured
// in extended precision.
template <class Fast, class Precise>
GradReport check(std::span<const GradSlot> slots, Fast fast, Precise precise) {
  return grad_check(slots, [fast](const GradSlot&) { return fast(); }, relative_loss(precise), kRefineAbove, kGradStep);
}

PfmTokens random_tokens(const PfmConfig& cfg, Rng& rng) {
  const int gh = cfg.height / kPatch, gw = cfg.width / kPatch;
  const Eigen::Index n = static_cast<Eigen::Index>(gh) * gw;
  PfmTokens x;
  x.grid_h = gh;
  x.grid_w = gw;
  for (Matrix* m : {&x.vis_t, &x.vis_prev, &x.ir_t, &x.ir_prev, &x.heatmap}) *m = random_matrix(n, cfg.d, rng, 1.0);
  return x;
}

}  // namespace

GradReport check_linear(std::uint64_t seed) {
  Rng rng(seed);
  Matrix x = random_matrix(4, 16, rng, 1.0);
  Matrix w = random_matrix(16, 8, rng, 1.0);
  const Matrix y = x * w;
  const Matrix dx = 2.0 * y * w.transpose();
  const Matrix dw = x.transpose() * (2.0 * y);
  const std::vector<GradSlot> slots{slot("x", x, dx), slot("w", w, dw)};
  return check(slots, [&] { return sum_squares(x * w); },
               [&] { return extended::sum_squares(extended::widen(x) * extended::widen(w)); });
}

GradReport check_softmax(std::uint64_t seed) {
  Rng rng(seed);
  Matrix x = random_matrix(6, 8, rng, 2.0);
  const Matrix y = softmax_rows(x);
  const Matrix dx = softmax_rows_backward(y, 2.0 * y);
  const std::vector<GradSlot> slots{slot("x", x, dx)};
  return check(slots, [&] { return sum_squares(softmax_rows(x)); },
               [&] { return extended::sum_squares(extended::softmax_rows(extended::widen(x))); });
}

GradReport check_layer_norm(std::uint64_t seed) {
  Rng rng(seed);
  Matrix x = random_matrix(8, 16, rng, 1.0);
  LayerNormParams p{random_matrix(1, 16, rng, 0.5).array() + 1.0, random_matrix(1, 16, rng, 0.5)};
  LayerNormCache cache;
  const Matrix y = layer_norm(x, p, kLayerNormEps, &cache);
  LayerNormParams g = zeros_like(p);
  const Matrix dx = layer_norm_backward(cache, p, 2.0 * y, g);
  const std::vector<GradSlot> slots{slot("x", x, dx), slot("gamma", p.gamma, g.gamma), slot("beta", p.beta, g.beta)};
  return check(slots, [&] { return sum_squares(layer_norm(x, p)); },
               [&] { return extended::sum_squares(extended::layer_norm(extended::widen(x), p)); });
}

GradReport check_attention(std::uint64_t seed, int d, int n_tokens, int n_heads) {
  Rng rng(seed);
  AttentionParams p = AttentionParams::random(d, n_heads, rng);
  Matrix q = random_matrix(n_tokens, d, rng, 1.0);
  Matrix k = random_matrix(n_tokens, d, rng, 1.0);
  Matrix v = random_matrix(n_tokens, d, rng, 1.0);
  AttentionCache cache;
  const Matrix y = multi_head_cross_attention(q, k, v, p, &cache);
  AttentionParams g = zeros_like(p);
  const AttentionInputGrads gi = attention_backward(cache, p, 2.0 * y, g);
  std::vector<GradSlot> slots{slot("q_in", q, gi.q_in), slot("k_in", k, gi.k_in), slot("v_in", v, gi.v_in)};
  std::vector<const Matrix*> grads;
  g.visit("", [&](const std::string&, Matrix& m) { grads.push_back(&m); });
  std::size_t i = 0;
  p.visit("attention", [&](const std::string& n, Matrix& m) { slots.push_back(slot(n, m, *grads[i++])); });
  return check(slots, [&] { return sum_squares(multi_head_cross_attention(q, k, v, p)); },
               [&] {
                 return extended::sum_squares(
                     extended::cross_attention(extended::widen(q), extended::widen(k), extended::widen(v), p));
               });
}

GradReport check_ffn(std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(attempt_seed(seed, attempt));
    FfnParams p = FfnParams::random(16, 32, 12, rng);
    Matrix x = random_matrix(8, 16, rng, 1.0);
    FfnCache cache;
    const Matrix y = ffn(x, p, &cache);
    if (min_abs(cache.pre) < kFfnMargin) continue;
    FfnParams g = zeros_like(p);
    const Matrix dx = ffn_backward(cache, p, 2.0 * y, g);
    const std::vector<GradSlot> slots{slot("x", x, dx), slot("ffn.w1", p.w1, g.w1), slot("ffn.b1", p.b1, g.b1),
                                      slot("ffn.w2", p.w2, g.w2), slot("ffn.b2", p.b2, g.b2)};
    return check(slots, [&] { return sum_squares(ffn(x, p)); },
                 [&] { return extended::sum_squares(extended::ffn(extended::widen(x), p)); });
  }
  no_seed("check_ffn");
}

GradReport check_fusion_stage(FusionVariant variant, std::uint64_t seed, PfmConfig cfg) {
  cfg.variant = variant;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    PfmParams p = PfmParams::random(cfg, s);
    Rng rng(s ^ 0xA5A5A5A5ULL);
    PfmTokens x = random_tokens(cfg, rng);
    FuseCache cache;
    const Matrix y = fuse_tokens(x, p, &cache);
    if (fuse_margin(cache, variant) < kFfnMargin) continue;

    PfmParams g = zeros_like(p);
    PfmTokens dx = fuse_tokens_backward(cache, p, 2.0 * y, g);
    std::vector<GradSlot> slots = param_slots(p, g, "embed.");
    slots.push_back(slot("tokens.vis_t", x.vis_t, dx.vis_t));
    slots.push_back(slot("tokens.ir_t", x.ir_t, dx.ir_t));
    if (uses_temporal(variant)) {
      slots.push_back(slot("tokens.vis_prev", x.vis_prev, dx.vis_prev));
      slots.push_back(slot("tokens.ir_prev", x.ir_prev, dx.ir_prev));
      slots.push_back(slot("tokens.heatmap", x.heatmap, dx.heatmap));
    }
    return check(slots, [&] { return sum_squares(fuse_tokens(x, p)); },
                 [&] { return extended::sum_squares(extended::fuse_tokens(extended::widen(x), p)); });
  }
  no_seed("check_fusion_stage");
}

GradReport check_pfm_at(PfmParams p, PfmImages img) {
  const PfmConfig& cfg = p.config;
  const bool temporal = uses_temporal(cfg.variant);
  PfmCache base;
  const Matrix y = pfm_forward(img, p, &base);
  PfmParams g = zeros_like(p);
  PfmImages dimg = pfm_backward(base, p, 2.0 * y, g);
  std::vector<GradSlot> slots = param_slots(p, g);
  slots.push_back(slot("input.vis_t", img.vis_t, dimg.vis_t));
  slots.push_back(slot("input.ir_t", img.ir_t, dimg.ir_t));
  if (temporal) {
    slots.push_back(slot("input.vis_prev", img.vis_prev, dimg.vis_prev));
    slots.push_back(slot("input.ir_prev", img.ir_prev, dimg.ir_prev));
    slots.push_back(slot("input.heatmap", img.heatmap, dimg.heatmap));
  }

  // Both evaluations restart from the first stage the changed slot feeds;
  // upstream stages come from the unperturbed baseline.
  const std::array<const Image*, 5> images{&img.vis_t, &img.vis_prev, &img.ir_t, &img.ir_prev, &img.heatmap};
  const std::array<const EmbedParams*, 5> embeds{&p.embed_visible, &p.embed_visible, &p.embed_infrared,
                                                 &p.embed_infrared, &p.embed_heatmap};
  const std::array<std::string, 5> image_names{"input.vis_t", "input.vis_prev", "input.ir_t", "input.ir_prev",
                                               "input.heatmap"};
  const std::array<std::string, 5> embed_names{"embed.visible", "embed.visible", "embed.infrared",
                                               "embed.infrared", "embed.heatmap"};
  const auto used = [&](std::size_t i) { return temporal || i == 0 || i == 2; };
  enum class Restart { None, Stem, Patch };
  const auto restart = [&](const std::string& n, std::size_t i) {
    if (!used(i)) return Restart::None;
    if (n == image_names[i] || n.starts_with(embed_names[i] + ".stem")) return Restart::Stem;
    if (n.starts_with(embed_names[i] + ".patch")) return Restart::Patch;
    return Restart::None;
  };

  const auto fast = [&](const GradSlot& changed) {
    PfmTokens x = base.tokens;
    const std::array<Matrix*, 5> tok{&x.vis_t, &x.vis_prev, &x.ir_t, &x.ir_prev, &x.heatmap};
    for (std::size_t i = 0; i < 5; ++i) {
      switch (restart(changed.name, i)) {
        case Restart::Stem: *tok[i] = embed_tokens(*images[i], *embeds[i]); break;
        case Restart::Patch: *tok[i] = project_patches(base.embed[i], embeds[i]->patch); break;
        case Restart::None: break;
      }
    }
    return sum_squares(fuse_tokens(x, p));
  };

  std::array<extended::XMatrix, 5> base_patches;
  extended::XTokens xbase;
  xbase.grid_h = base.tokens.grid_h;
  xbase.grid_w = base.tokens.grid_w;
  const std::array<extended::XMatrix*, 5> xbase_tok{&xbase.vis_t, &xbase.vis_prev, &xbase.ir_t, &xbase.ir_prev,
                                                    &xbase.heatmap};
  for (std::size_t i = 0; i < 5; ++i) {
    if (!used(i)) continue;
    base_patches[i] = extended::stem_patches(*images[i], embeds[i]->stem);
    *xbase_tok[i] = extended::project_patches(base_patches[i], embeds[i]->patch);
  }
  const extended::Real xbase_loss = extended::sum_squares(extended::fuse_tokens(xbase, p));
  const auto precise = [&](const GradSlot& changed) {
    extended::XTokens x = xbase;
    const std::array<extended::XMatrix*, 5> tok{&x.vis_t, &x.vis_prev, &x.ir_t, &x.ir_prev, &x.heatmap};
    for (std::size_t i = 0; i < 5; ++i) {
      switch (restart(changed.name, i)) {
        case Restart::Stem: *tok[i] = extended::embed_tokens(*images[i], *embeds[i]); break;
        case Restart::Patch: *tok[i] = extended::project_patches(base_patches[i], embeds[i]->patch); break;
        case Restart::None: break;
      }
    }
    return static_cast<double>(extended::sum_squares(extended::fuse_tokens(x, p)) - xbase_loss);
  };
  return grad_check(slots, fast, precise, kRefineAbove, kGradStep);
}

GradReport check_pfm_forward(const PfmConfig& cfg, std::uint64_t seed) {
  const bool temporal = uses_temporal(cfg.variant);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    PfmParams p = PfmParams::random(cfg, s);
    Rng rng(s ^ 0x5A5A5A5AULL);
    PfmImages img;
    img.vis_t = Image::random(cfg.visible_channels, cfg.height, cfg.width, rng);
    img.ir_t = Image::random(cfg.infrared_channels, cfg.height, cfg.width, rng);
    if (temporal) {
      img.vis_prev = Image::random(cfg.visible_channels, cfg.height, cfg.width, rng);
      img.ir_prev = Image::random(cfg.infrared_channels, cfg.height, cfg.width, rng);
      std::vector<ObjectCenter> objects;
      for (int i = 0; i < 2; ++i) {
        objects.push_back(ObjectCenter{rng.uniform(0.0, cfg.width), rng.uniform(0.0, cfg.height),
                                       rng.uniform(4.0, 16.0), rng.uniform(4.0, 16.0)});
      }
      img.heatmap = render_heatmap(objects, cfg.height, cfg.width).as_image();
    }

    PfmCache base;
    const Matrix y = pfm_forward(img, p, &base);
    double margin = fuse_margin(base.fuse, cfg.variant) / kFfnMargin;
    for (std::size_t i = 0; i < base.embed.size(); ++i) {
      if (temporal || i == 0 || i == 2) margin = std::min(margin, min_abs(base.embed[i].pre) / kStemMargin);
    }
    if (margin < 1.0) continue;

    return check_pfm_at(p, img);
  }
  no_seed("check_pfm_forward");
}

std::vector<GradCase> run_grad_suite(const PfmConfig& cfg, std::uint64_t seed, bool quick) {
  std::vector<GradCase> out;
  const auto timed = [&](std::string name, const auto& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    GradReport r = fn();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(GradCase{std::move(name), std::move(r), secs});
  };
  timed("softmax", [&] { return check_softmax(seed); });
  timed("layer_norm", [&] { return check_layer_norm(seed); });
  timed("attention", [&] { return check_attention(seed, cfg.d, 8, cfg.n_heads); });
  timed("ffn", [&] { return check_ffn(seed); });
  for (FusionVariant v : {FusionVariant::Full, FusionVariant::TffOnly, FusionVariant::MffUni, FusionVariant::MffMul,
                          FusionVariant::MffBoth}) {
    timed("fusion_stage." + std::string(to_string(v)), [&] { return check_fusion_stage(v, seed, cfg); });
  }
  if (!quick) {
    timed("pfm_forward." + std::string(to_string(cfg.variant)), [&] { return check_pfm_forward(cfg, seed); });
  }
  return out;
}

}  // namespace vtmot::pfm
