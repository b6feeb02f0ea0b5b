// SPDX-License-Identifier: Apache-2.0
#include "vtmot/pfm/extended.hpp"

#include <cmath>

namespace vtmot::pfm::extended {

namespace {

XMatrix w(const Matrix& m) { return m.cast<Real>(); }

XMatrix add_row(XMatrix x, const Matrix& bias) {
  x.rowwise() += bias.cast<Real>().row(0);
  return x;
}

XMatrix positional(int gh, int gw, int d) {
  const int quarter = d / 4;
  XMatrix pe(static_cast<Eigen::Index>(gh) * gw, d);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index t = static_cast<Eigen::Index>(gy) * gw + gx;
      for (int i = 0; i < quarter; ++i) {
        const Real omega = std::pow(Real{10000}, -static_cast<Real>(i) / quarter);
        pe(t, 2 * i) = std::sin(gy * omega);
        pe(t, 2 * i + 1) = std::cos(gy * omega);
        pe(t, d / 2 + 2 * i) = std::sin(gx * omega);
        pe(t, d / 2 + 2 * i + 1) = std::cos(gx * omega);
      }
    }
  }
  return pe;
}

}  // namespace

XMatrix widen(const Matrix& m) { return w(m); }

Real sum_squares(const XMatrix& m) {
  Real s = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) s += m.data()[i] * m.data()[i];
  return s;
}

XMatrix softmax_rows(const XMatrix& m) {
  XMatrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Real mx = m.row(r).maxCoeff();
    Real total = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(r, c) = std::exp(m(r, c) - mx);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

XMatrix layer_norm(const XMatrix& x, const LayerNormParams& p, double eps) {
  XMatrix y(x.rows(), x.cols());
  const Real d = static_cast<Real>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Real mean = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= d;
    Real var = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= d;
    const Real inv = 1 / std::sqrt(var + static_cast<Real>(eps));
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      y(r, c) = (x(r, c) - mean) * inv * static_cast<Real>(p.gamma(0, c)) + static_cast<Real>(p.beta(0, c));
    }
  }
  return y;
}

XMatrix cross_attention(const XMatrix& q_in, const XMatrix& k_in, const XMatrix& v_in, const AttentionParams& p) {
  XMatrix q = q_in * w(p.wq), k = k_in * w(p.wk), v = v_in * w(p.wv);
  if (p.use_bias) {
    q = add_row(q, p.bq);
    k = add_row(k, p.bk);
    v = add_row(v, p.bv);
  }
  const Eigen::Index d = p.dim(), dh = d / p.n_heads;
  const Real scale = 1 / std::sqrt(static_cast<Real>(dh));
  XMatrix heads(q.rows(), d);
  for (int h = 0; h < p.n_heads; ++h) {
    const XMatrix scores = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
    heads.middleCols(h * dh, dh) = extended::softmax_rows(scores) * v.middleCols(h * dh, dh);
  }
  XMatrix y = heads * w(p.wo);
  return p.use_bias ? add_row(y, p.bo) : y;
}

XMatrix ffn(const XMatrix& x, const FfnParams& p) {
  const XMatrix hidden = add_row(x * w(p.w1), p.b1).cwiseMax(Real{0});
  return add_row(hidden * w(p.w2), p.b2);
}

XMatrix stem_patches(const Image& img, const StemParams& p) {
  const int C = img.channels, H = img.height, W = img.width, S = p.out_channels();
  const int gw = W / kPatch;
  XMatrix patches = XMatrix::Zero(static_cast<Eigen::Index>(H / kPatch) * gw, static_cast<Eigen::Index>(S) * kPatch * kPatch);
  for (int s = 0; s < S; ++s) {
    const Real scale = p.scale(0, s), shift = p.shift(0, s);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        Real acc = 0;
        for (int c = 0; c < C; ++c) {
          for (int ky = 0; ky < kStemKernel; ++ky) {
            const int sy = y + ky - kStemPad;
            if (sy < 0 || sy >= H) continue;
            for (int kx = 0; kx < kStemKernel; ++kx) {
              const int sx = x + kx - kStemPad;
              if (sx < 0 || sx >= W) continue;
              acc += static_cast<Real>(p.kernel(s, (c * kStemKernel + ky) * kStemKernel + kx)) * img.at(c, sy, sx);
            }
          }
        }
        const Real v = acc * scale + shift;
        const Eigen::Index t = static_cast<Eigen::Index>(y / kPatch) * gw + x / kPatch;
        patches(t, (s * kPatch + y % kPatch) * kPatch + x % kPatch) = v > 0 ? v : Real{0};
      }
    }
  }
  return patches;
}

XMatrix project_patches(const XMatrix& patches, const PatchParams& p) {
  return add_row(patches * w(p.weight), p.bias);
}

XMatrix embed_tokens(const Image& image, const EmbedParams& p) {
  return extended::project_patches(stem_patches(image, p.stem), p.patch);
}

XMatrix temporal_fusion(const XMatrix& x_t, const XMatrix& x_prev, const XMatrix& x_hm, const XMatrix& pos,
                        const TemporalParams& p) {
  const XMatrix a = extended::cross_attention(x_t + pos, x_prev + pos, x_prev, p.attention);
  const XMatrix xbar = extended::layer_norm(x_t + a, p.ln1) + x_hm;
  return extended::layer_norm(xbar + extended::ffn(xbar, p.ffn), p.ln2);
}

XMatrix multimodal_fusion(const XMatrix& xv, const XMatrix& xir, const MultimodalParams& p, FusionVariant variant) {
  const XMatrix xf = xv + xir;
  const std::vector<int> branches = bridge_branches(variant);
  const Eigen::Index d = xv.cols();
  XMatrix cat(xv.rows(), static_cast<Eigen::Index>(branches.size()) * d);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto b = static_cast<std::size_t>(branches[i]);
    XMatrix out;
    switch (b) {
      case 0: out = extended::cross_attention(xv, xf, xf, p.bridge[b]); break;
      case 1: out = extended::cross_attention(xir, xf, xf, p.bridge[b]); break;
      case 2: out = extended::cross_attention(xf, xv, xv, p.bridge[b]); break;
      default: out = extended::cross_attention(xf, xir, xir, p.bridge[b]); break;
    }
    cat.middleCols(static_cast<Eigen::Index>(i) * d, d) = out;
  }
  return extended::layer_norm(extended::ffn(cat, p.ffn), p.ln);
}

XTokens widen(const PfmTokens& t) {
  return XTokens{w(t.vis_t), w(t.vis_prev), w(t.ir_t), w(t.ir_prev), w(t.heatmap), t.grid_h, t.grid_w};
}

XMatrix fuse_tokens(const XTokens& x, const PfmParams& p) {
  const FusionVariant v = p.config.variant;
  XMatrix xv = x.vis_t, xir = x.ir_t;
  if (uses_temporal(v)) {
    const XMatrix pos = positional(x.grid_h, x.grid_w, static_cast<int>(x.vis_t.cols()));
    xv = extended::temporal_fusion(x.vis_t, x.vis_prev, x.heatmap, pos, p.temporal_visible);
    xir = extended::temporal_fusion(x.ir_t, x.ir_prev, x.heatmap, pos, p.temporal_infrared);
  }
  if (v == FusionVariant::TffOnly) return xv + xir;
  return extended::multimodal_fusion(xv, xir, p.fusion, v);
}

XMatrix pfm_forward(const PfmImages& img, const PfmParams& p) {
  XTokens x;
  x.grid_h = p.config.height / kPatch;
  x.grid_w = p.config.width / kPatch;
  x.vis_t = extended::embed_tokens(img.vis_t, p.embed_visible);
  x.ir_t = extended::embed_tokens(img.ir_t, p.embed_infrared);
  if (uses_temporal(p.config.variant)) {
    x.vis_prev = extended::embed_tokens(img.vis_prev, p.embed_visible);
    x.ir_prev = extended::embed_tokens(img.ir_prev, p.embed_infrared);
    x.heatmap = extended::embed_tokens(img.heatmap, p.embed_heatmap);
  }
  return fuse_tokens(x, p);
}

}  // namespace vtmot::pfm::extended
