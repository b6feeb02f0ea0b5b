// SPDX-License-Identifier: Apache-2.0
//
// Independent forward evaluation of the fusion module in extended precision
// (long double), written with direct loops rather than the im2col and cached
// formulation of the main implementation. Used as the finite-difference side
// of the gradient checks: a step of 1e-5 on a loss near 60 leaves double
// rounding at ~1e-10 in the difference quotient, too coarse for gradients
// below ~1e-6.
#pragma once

#include "vtmot/pfm/fusion.hpp"

namespace vtmot::pfm::extended {

using Real = long double;
using XMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

XMatrix widen(const Matrix& m);
Real sum_squares(const XMatrix& m);

XMatrix softmax_rows(const XMatrix& m);
XMatrix layer_norm(const XMatrix& x, const LayerNormParams& p, double eps = kLayerNormEps);
XMatrix cross_attention(const XMatrix& q_in, const XMatrix& k_in, const XMatrix& v_in, const AttentionParams& p);
XMatrix ffn(const XMatrix& x, const FfnParams& p);

/// Stem output rearranged into patch rows, n_tokens x (stem_channels * 256).
XMatrix stem_patches(const Image& image, const StemParams& p);
XMatrix project_patches(const XMatrix& patches, const PatchParams& p);
XMatrix embed_tokens(const Image& image, const EmbedParams& p);

XMatrix temporal_fusion(const XMatrix& x_t, const XMatrix& x_prev, const XMatrix& x_hm, const XMatrix& pos,
                        const TemporalParams& p);
XMatrix multimodal_fusion(const XMatrix& xv, const XMatrix& xir, const MultimodalParams& p, FusionVariant variant);

struct XTokens {
  XMatrix vis_t, vis_prev, ir_t, ir_prev, heatmap;
  int grid_h = 0;
  int grid_w = 0;
};

XTokens widen(const PfmTokens& t);
XMatrix fuse_tokens(const XTokens& x, const PfmParams& p);
XMatrix pfm_forward(const PfmImages& images, const PfmParams& p);

}  // namespace vtmot::pfm::extended
