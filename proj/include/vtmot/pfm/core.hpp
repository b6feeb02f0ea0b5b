// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit building blocks of the fusion module with hand-written
// backward passes: row softmax, layer normalization, multi-head cross
// attention, and a two-layer feed-forward block.
//
// Conventions: tokens are rows. Linear maps act on the right (X * W), so a
// weight mapping width a to width b is an a x b matrix. Bias and scale
// vectors are stored as 1 x n matrices so every parameter is a Matrix.
// Backward functions accumulate parameter gradients into a container of the
// same type as the parameters and return gradients with respect to inputs.
#pragma once

#include "vtmot/random.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vtmot::pfm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TokenMatrix = Matrix;

inline constexpr double kLayerNormEps = 1e-5;

/// Visits named parameter matrices; used for serialization and gradient checks.
using ParamVisitor = std::function<void(const std::string& name, Matrix& value)>;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale);

/// Sum of squared entries, the scalar loss used by the gradient checks.
double sum_squares(const Matrix& m);

// ---------------------------------------------------------------------------

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);
/// Gradient w.r.t. the logits given the softmax output y and upstream dy.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

// ---------------------------------------------------------------------------

struct LayerNormParams {
  Matrix gamma;  // 1 x d
  Matrix beta;   // 1 x d

  static LayerNormParams identity(Eigen::Index d);
  Eigen::Index dim() const { return gamma.cols(); }
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

/// Per row: (x - mean) / sqrt(var + eps) * gamma + beta, biased variance.
Matrix layer_norm(const Matrix& x, const LayerNormParams& p, double eps = kLayerNormEps,
                  LayerNormCache* cache = nullptr);
Matrix layer_norm_backward(const LayerNormCache& cache, const LayerNormParams& p, const Matrix& dy,
                           LayerNormParams& grads);

// ---------------------------------------------------------------------------

struct AttentionParams {
  int n_heads = 1;
  Matrix wq, wk, wv, wo;  // d x d
  bool use_bias = false;
  Matrix bq, bk, bv, bo;  // 1 x d when use_bias

  static AttentionParams random(Eigen::Index d, int n_heads, Rng& rng, bool use_bias = false);
  Eigen::Index dim() const { return wq.rows(); }
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct AttentionCache {
  Matrix q_in, k_in, v_in;
  Matrix q, k, v;    // projected
  Matrix heads;      // concatenated head outputs, n_q x d
  std::vector<Matrix> probs;  // per head, n_q x n_kv
};

/// softmax(Q_h K_h^T / sqrt(d_h)) V_h per head, concatenated, then W_o.
/// Throws Error(ShapeMismatch) on inconsistent shapes.
TokenMatrix multi_head_cross_attention(const TokenMatrix& q_in, const TokenMatrix& k_in, const TokenMatrix& v_in,
                                       const AttentionParams& p, AttentionCache* cache = nullptr);

struct AttentionInputGrads {
  Matrix q_in, k_in, v_in;
};
AttentionInputGrads attention_backward(const AttentionCache& cache, const AttentionParams& p, const Matrix& dy,
                                       AttentionParams& grads);

// ---------------------------------------------------------------------------

struct FfnParams {
  Matrix w1;  // d_in x d_hidden
  Matrix b1;  // 1 x d_hidden
  Matrix w2;  // d_hidden x d_out
  Matrix b2;  // 1 x d_out

  static FfnParams random(Eigen::Index d_in, Eigen::Index d_hidden, Eigen::Index d_out, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct FfnCache {
  Matrix x;
  Matrix pre;  // x * w1 + b1
};

/// relu(x * w1 + b1) * w2 + b2 per row.
TokenMatrix ffn(const TokenMatrix& x, const FfnParams& p, FfnCache* cache = nullptr);
Matrix ffn_backward(const FfnCache& cache, const FfnParams& p, const Matrix& dy, FfnParams& grads);

/// Same shapes as `p`, all zeros; used as gradient accumulators.
LayerNormParams zeros_like(const LayerNormParams& p);
AttentionParams zeros_like(const AttentionParams& p);
FfnParams zeros_like(const FfnParams& p);

// ---------------------------------------------------------------------------
// Finite-difference verification

/// A contiguous block of scalars together with its analytic gradient.
struct GradSlot {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

struct GradReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t n_checked = 0;
  std::size_t n_refined = 0;
};

/// Re-evaluates the loss after one slot entry changed. The slot is passed so
/// callers can restart the forward pass from the first affected stage.
using LossFn = std::function<double(const GradSlot& changed)>;

/// Central differences (L(x+h) - L(x-h)) / 2h for every scalar of every slot,
/// compared with the analytic gradient. The relative error of an entry uses
/// max(|analytic|, |numeric|, 1e-8) as denominator. Values are restored
/// bit-exactly. Throws Error(NonFinite) on non-finite losses or gradients.
GradReport grad_check(std::span<const GradSlot> slots, const LossFn& loss, double h = 1e-5);

/// As above, but an entry whose relative error exceeds `refine_above` is
/// measured again with `refined`, a more precise evaluation of the same loss
/// (up to a constant), and the second measurement is the one reported.
GradReport grad_check(std::span<const GradSlot> slots, const LossFn& loss, const LossFn& refined, double refine_above,
                      double h = 1e-5);

}  // namespace vtmot::pfm
