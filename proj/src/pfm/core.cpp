// SPDX-License-Identifier: Apache-2.0
#include "vtmot/pfm/core.hpp"

#include "vtmot/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vtmot::pfm {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

Matrix col_sum(const Matrix& m) { return m.colwise().sum(); }

}  // namespace

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

double sum_squares(const Matrix& m) { return m.squaredNorm(); }

// ---------------------------------------------------------------------------
// softmax

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    out.row(r) = (m.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  Matrix dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double dot = y.row(r).dot(dy.row(r));
    dx.row(r) = (y.row(r).array() * (dy.row(r).array() - dot)).matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// layer norm

LayerNormParams LayerNormParams::identity(Eigen::Index d) {
  return LayerNormParams{Matrix::Ones(1, d), Matrix::Zero(1, d)};
}

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".gamma", gamma);
  f(prefix + ".beta", beta);
}

Matrix layer_norm(const Matrix& x, const LayerNormParams& p, double eps, LayerNormCache* cache) {
  require(p.gamma.rows() == 1 && p.gamma.cols() == x.cols() && p.beta.rows() == 1 && p.beta.cols() == x.cols(),
          "layer_norm: gamma/beta width differs from input width");
  require(x.cols() >= 2, "layer_norm: width must be at least 2");
  const double d = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const Eigen::RowVectorXd centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * p.gamma.row(0).array()).matrix();
  y.rowwise() += p.beta.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const LayerNormParams& p, const Matrix& dy,
                           LayerNormParams& grads) {
  const Matrix& xhat = cache.xhat;
  grads.gamma += (dy.array() * xhat.array()).matrix().colwise().sum();
  grads.beta += col_sum(dy);
  const Matrix dxhat = (dy.array().rowwise() * p.gamma.row(0).array()).matrix();
  const double d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_dxhat = dxhat.row(r).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(r).dot(xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_dxhat - xhat.row(r).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// attention

AttentionParams AttentionParams::random(Eigen::Index d, int n_heads, Rng& rng, bool use_bias) {
  AttentionParams p;
  p.n_heads = n_heads;
  const double s = std::sqrt(3.0 / static_cast<double>(d));
  p.wq = random_matrix(d, d, rng, s);
  p.wk = random_matrix(d, d, rng, s);
  p.wv = random_matrix(d, d, rng, s);
  p.wo = random_matrix(d, d, rng, s);
  p.use_bias = use_bias;
  if (use_bias) {
    p.bq = random_matrix(1, d, rng, 0.1);
    p.bk = random_matrix(1, d, rng, 0.1);
    p.bv = random_matrix(1, d, rng, 0.1);
    p.bo = random_matrix(1, d, rng, 0.1);
  }
  return p;
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".wq", wq);
  f(prefix + ".wk", wk);
  f(prefix + ".wv", wv);
  f(prefix + ".wo", wo);
  if (use_bias) {
    f(prefix + ".bq", bq);
    f(prefix + ".bk", bk);
    f(prefix + ".bv", bv);
    f(prefix + ".bo", bo);
  }
}

TokenMatrix multi_head_cross_attention(const TokenMatrix& q_in, const TokenMatrix& k_in, const TokenMatrix& v_in,
                                       const AttentionParams& p, AttentionCache* cache) {
  const Eigen::Index d = p.dim();
  require(p.n_heads >= 1 && d % p.n_heads == 0, "attention: width not divisible by head count");
  require(p.wq.cols() == d && p.wk.rows() == d && p.wk.cols() == d && p.wv.rows() == d && p.wv.cols() == d &&
              p.wo.rows() == d && p.wo.cols() == d,
          "attention: projection matrices must be d x d");
  require(q_in.cols() == d && k_in.cols() == d && v_in.cols() == d, "attention: token width differs from d");
  require(k_in.rows() == v_in.rows() && k_in.rows() >= 1, "attention: key and value token counts differ");
  if (p.use_bias) {
    require(p.bq.size() == d && p.bk.size() == d && p.bv.size() == d && p.bo.size() == d,
            "attention: bias width differs from d");
  }

  Matrix q = q_in * p.wq;
  Matrix k = k_in * p.wk;
  Matrix v = v_in * p.wv;
  if (p.use_bias) {
    q.rowwise() += p.bq.row(0);
    k.rowwise() += p.bk.row(0);
    v.rowwise() += p.bv.row(0);
  }

  const Eigen::Index dh = d / p.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix heads(q_in.rows(), d);
  std::vector<Matrix> probs;
  probs.reserve(static_cast<std::size_t>(p.n_heads));
  for (int h = 0; h < p.n_heads; ++h) {
    const Eigen::Index c0 = h * dh;
    const Matrix scores = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
    Matrix pr = softmax_rows(scores);
    heads.middleCols(c0, dh) = pr * v.middleCols(c0, dh);
    probs.push_back(std::move(pr));
  }
  Matrix y = heads * p.wo;
  if (p.use_bias) y.rowwise() += p.bo.row(0);

  if (cache) {
    cache->q_in = q_in;
    cache->k_in = k_in;
    cache->v_in = v_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads = std::move(heads);
    cache->probs = std::move(probs);
  }
  return y;
}

AttentionInputGrads attention_backward(const AttentionCache& c, const AttentionParams& p, const Matrix& dy,
                                       AttentionParams& grads) {
  const Eigen::Index d = p.dim();
  const Eigen::Index dh = d / p.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  grads.wo += c.heads.transpose() * dy;
  if (p.use_bias) grads.bo += col_sum(dy);
  const Matrix dheads = dy * p.wo.transpose();

  Matrix dq = Matrix::Zero(c.q.rows(), d);
  Matrix dk = Matrix::Zero(c.k.rows(), d);
  Matrix dv = Matrix::Zero(c.v.rows(), d);
  for (int h = 0; h < p.n_heads; ++h) {
    const Eigen::Index c0 = h * dh;
    const Matrix& pr = c.probs[static_cast<std::size_t>(h)];
    const Matrix dout = dheads.middleCols(c0, dh);
    const Matrix dprobs = dout * c.v.middleCols(c0, dh).transpose();
    dv.middleCols(c0, dh) = pr.transpose() * dout;
    const Matrix dscores = softmax_rows_backward(pr, dprobs) * scale;
    dq.middleCols(c0, dh) = dscores * c.k.middleCols(c0, dh);
    dk.middleCols(c0, dh) = dscores.transpose() * c.q.middleCols(c0, dh);
  }

  grads.wq += c.q_in.transpose() * dq;
  grads.wk += c.k_in.transpose() * dk;
  grads.wv += c.v_in.transpose() * dv;
  if (p.use_bias) {
    grads.bq += col_sum(dq);
    grads.bk += col_sum(dk);
    grads.bv += col_sum(dv);
  }
  return AttentionInputGrads{dq * p.wq.transpose(), dk * p.wk.transpose(), dv * p.wv.transpose()};
}

// ---------------------------------------------------------------------------
// feed-forward

FfnParams FfnParams::random(Eigen::Index d_in, Eigen::Index d_hidden, Eigen::Index d_out, Rng& rng) {
  FfnParams p;
  p.w1 = random_matrix(d_in, d_hidden, rng, std::sqrt(3.0 / static_cast<double>(d_in)));
  p.b1 = random_matrix(1, d_hidden, rng, 0.1);
  p.w2 = random_matrix(d_hidden, d_out, rng, std::sqrt(3.0 / static_cast<double>(d_hidden)));
  p.b2 = random_matrix(1, d_out, rng, 0.1);
  return p;
}

void FfnParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".w1", w1);
  f(prefix + ".b1", b1);
  f(prefix + ".w2", w2);
  f(prefix + ".b2", b2);
}

TokenMatrix ffn(const TokenMatrix& x, const FfnParams& p, FfnCache* cache) {
  require(p.w1.rows() == x.cols(), "ffn: input width differs from w1 rows");
  require(p.b1.rows() == 1 && p.b1.cols() == p.w1.cols() && p.w2.rows() == p.w1.cols() && p.b2.rows() == 1 &&
              p.b2.cols() == p.w2.cols(),
          "ffn: inconsistent parameter shapes");
  Matrix pre = x * p.w1;
  pre.rowwise() += p.b1.row(0);
  Matrix y = pre.cwiseMax(0.0) * p.w2;
  y.rowwise() += p.b2.row(0);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
  }
  return y;
}

Matrix ffn_backward(const FfnCache& c, const FfnParams& p, const Matrix& dy, FfnParams& grads) {
  const Matrix act = c.pre.cwiseMax(0.0);
  grads.w2 += act.transpose() * dy;
  grads.b2 += col_sum(dy);
  Matrix dpre = dy * p.w2.transpose();
  dpre = (dpre.array() * (c.pre.array() > 0.0).cast<double>()).matrix();
  grads.w1 += c.x.transpose() * dpre;
  grads.b1 += col_sum(dpre);
  return dpre * p.w1.transpose();
}

LayerNormParams zeros_like(const LayerNormParams& p) {
  return LayerNormParams{Matrix::Zero(p.gamma.rows(), p.gamma.cols()), Matrix::Zero(p.beta.rows(), p.beta.cols())};
}

AttentionParams zeros_like(const AttentionParams& p) {
  AttentionParams z;
  z.n_heads = p.n_heads;
  z.use_bias = p.use_bias;
  for (auto [dst, src] : {std::pair{&z.wq, &p.wq}, {&z.wk, &p.wk}, {&z.wv, &p.wv}, {&z.wo, &p.wo},
                          {&z.bq, &p.bq}, {&z.bk, &p.bk}, {&z.bv, &p.bv}, {&z.bo, &p.bo}}) {
    *dst = Matrix::Zero(src->rows(), src->cols());
  }
  return z;
}

FfnParams zeros_like(const FfnParams& p) {
  return FfnParams{Matrix::Zero(p.w1.rows(), p.w1.cols()), Matrix::Zero(p.b1.rows(), p.b1.cols()),
                   Matrix::Zero(p.w2.rows(), p.w2.cols()), Matrix::Zero(p.b2.rows(), p.b2.cols())};
}

// ---------------------------------------------------------------------------
// gradient check

GradReport grad_check(std::span<const GradSlot> slots, const LossFn& loss, double h) {
  return grad_check(slots, loss, LossFn{}, std::numeric_limits<double>::infinity(), h);
}

GradReport grad_check(std::span<const GradSlot> slots, const LossFn& loss, const LossFn& refined, double refine_above,
                      double h) {
  GradReport report;
  for (const GradSlot& slot : slots) {
    require(slot.value.size() == slot.grad.size(), "grad_check: value and gradient sizes differ");
    for (std::size_t i = 0; i < slot.value.size(); ++i) {
      const auto entry = [&] { return slot.name + "[" + std::to_string(i) + "]"; };
      const double analytic = slot.grad[i];
      const auto measure = [&](const LossFn& f) {
        const double original = slot.value[i];
        slot.value[i] = original + h;
        const double plus = f(slot);
        slot.value[i] = original - h;
        const double minus = f(slot);
        slot.value[i] = original;
        if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(analytic)) {
          throw Error(ErrorCode::NonFinite, "grad_check: non-finite value at " + entry());
        }
        return (plus - minus) / (2.0 * h);
      };
      const auto relative = [&](double numeric) {
        return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      };

      double numeric = measure(loss);
      if (relative(numeric) > refine_above && refined) {
        numeric = measure(refined);
        ++report.n_refined;
      }
      const double abs_err = std::fabs(analytic - numeric);
      const double rel_err = relative(numeric);
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel_err > report.max_rel_err || report.worst_param.empty()) {
        report.max_rel_err = rel_err;
        report.worst_param = entry();
      }
      ++report.n_checked;
    }
  }
  return report;
}

}  // namespace vtmot::pfm
