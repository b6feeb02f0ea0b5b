// SPDX-License-Identifier: Apache-2.0
#include "vtmot/error.hpp"
#include "vtmot/pfm/core.hpp"
#include "vtmot/pfm/gradcheck.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace vtmot;
using namespace vtmot::pfm;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

Matrix permute_rows(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.row(r) = m.row(perm[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<int> shuffled(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(rng.integer(0, i))]);
  return p;
}

// Attention written with scalar loops, one head at a time.
Matrix attention_oracle(const Matrix& qi, const Matrix& ki, const Matrix& vi, const AttentionParams& p) {
  const Matrix q = qi * p.wq, k = ki * p.wk, v = vi * p.wv;
  const Eigen::Index d = p.dim(), dh = d / p.n_heads;
  Matrix heads = Matrix::Zero(qi.rows(), d);
  for (int h = 0; h < p.n_heads; ++h) {
    for (Eigen::Index i = 0; i < qi.rows(); ++i) {
      std::vector<double> logits(static_cast<std::size_t>(ki.rows()));
      double mx = -1e300;
      for (Eigen::Index j = 0; j < ki.rows(); ++j) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        logits[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (Eigen::Index j = 0; j < ki.rows(); ++j) {
        for (Eigen::Index c = 0; c < dh; ++c) heads(i, h * dh + c) += logits[static_cast<std::size_t>(j)] / z * v(j, h * dh + c);
      }
    }
  }
  return heads * p.wo;
}

}  // namespace

TEST_CASE("softmax examples") {
  Matrix m(2, 3);
  m << 0, 0, 0, 1, 2, 3;
  const Matrix y = softmax_rows(m);
  for (int c = 0; c < 3; ++c) CHECK(y(0, c) == doctest::Approx(1.0 / 3.0));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(y(1, 2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));

  // large logits stay finite thanks to max subtraction
  Matrix big(1, 2);
  big << 1000, 1000;
  CHECK(softmax_rows(big)(0, 0) == 0.5);

  // shift invariance and row sums
  Rng rng(1);
  const Matrix r = random_matrix(5, 7, rng, 3.0);
  const Matrix shifted = (r.array() + 12.5).matrix();
  CHECK(max_abs_diff(softmax_rows(r), softmax_rows(shifted)) <= 1e-14);
  const Eigen::VectorXd sums = softmax_rows(r).rowwise().sum();
  for (Eigen::Index i = 0; i < sums.size(); ++i) CHECK(sums(i) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("layer norm statistics") {
  Rng rng(2);
  const Matrix x = random_matrix(6, 16, rng, 4.0);
  const Matrix y = layer_norm(x, LayerNormParams::identity(16));
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double mean = y.row(r).mean();
    const double var = (y.row(r).array() - mean).square().mean();
    CHECK(std::abs(mean) <= 1e-12);
    const double raw_var = (x.row(r).array() - x.row(r).mean()).square().mean();
    CHECK(var == doctest::Approx(raw_var / (raw_var + kLayerNormEps)).epsilon(1e-12));
  }

  // a constant row maps to beta
  LayerNormParams p = LayerNormParams::identity(4);
  p.beta << 1, 2, 3, 4;
  const Matrix c = Matrix::Constant(1, 4, 7.0);
  CHECK(max_abs_diff(layer_norm(c, p), p.beta) == 0.0);

  // invariant under x -> a x + b for a > 0 when eps is negligible
  const Matrix scaled = (x.array() * 3.0 + 5.0).matrix();
  CHECK(max_abs_diff(layer_norm(x, LayerNormParams::identity(16), 1e-14),
                     layer_norm(scaled, LayerNormParams::identity(16), 1e-14)) <= 1e-10);
}

TEST_CASE("attention with one key returns the projected value") {
  Rng rng(3);
  const AttentionParams p = AttentionParams::random(8, 2, rng);
  const Matrix q = random_matrix(5, 8, rng, 1.0);
  const Matrix kv = random_matrix(1, 8, rng, 1.0);
  const Matrix out = multi_head_cross_attention(q, kv, kv, p);
  const Matrix expected = kv * p.wv * p.wo;
  for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK(max_abs_diff(out.row(r), expected) <= 1e-12);
}

TEST_CASE("attention matches the scalar oracle") {
  Rng rng(4);
  for (int heads : {1, 2, 4}) {
    const AttentionParams p = AttentionParams::random(8, heads, rng);
    const Matrix q = random_matrix(2, 8, rng, 1.0);
    const Matrix k = random_matrix(2, 8, rng, 1.0);
    const Matrix v = random_matrix(2, 8, rng, 1.0);
    CHECK(max_abs_diff(multi_head_cross_attention(q, k, v, p), attention_oracle(q, k, v, p)) <= 1e-12);
  }
}

TEST_CASE("attention permutation properties") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const AttentionParams p = AttentionParams::random(16, 4, rng);
    const Matrix q = random_matrix(6, 16, rng, 1.0);
    const Matrix kv = random_matrix(9, 16, rng, 1.0);
    const Matrix out = multi_head_cross_attention(q, kv, kv, p);

    const Matrix kv_perm = permute_rows(kv, shuffled(9, rng));
    CHECK(max_abs_diff(multi_head_cross_attention(q, kv_perm, kv_perm, p), out) <= 1e-12);

    const std::vector<int> qp = shuffled(6, rng);
    CHECK(max_abs_diff(multi_head_cross_attention(permute_rows(q, qp), kv, kv, p), permute_rows(out, qp)) <= 1e-12);
  }
}

TEST_CASE("attention rejects bad shapes") {
  Rng rng(6);
  const AttentionParams p = AttentionParams::random(8, 2, rng);
  const Matrix q = random_matrix(3, 8, rng, 1.0);
  CHECK_THROWS_AS(multi_head_cross_attention(q, random_matrix(3, 6, rng, 1.0), random_matrix(3, 6, rng, 1.0), p),
                  Error);
  CHECK_THROWS_AS(multi_head_cross_attention(q, random_matrix(3, 8, rng, 1.0), random_matrix(4, 8, rng, 1.0), p),
                  Error);
}

TEST_CASE("ffn oracle") {
  Rng rng(7);
  const FfnParams p = FfnParams::random(4, 6, 3, rng);
  const Matrix x = random_matrix(5, 4, rng, 1.0);
  const Matrix y = ffn(x, p);
  REQUIRE(y.rows() == 5);
  REQUIRE(y.cols() == 3);
  for (Eigen::Index r = 0; r < 5; ++r) {
    for (Eigen::Index o = 0; o < 3; ++o) {
      double acc = p.b2(0, o);
      for (Eigen::Index h = 0; h < 6; ++h) {
        double pre = p.b1(0, h);
        for (Eigen::Index i = 0; i < 4; ++i) pre += x(r, i) * p.w1(i, h);
        acc += std::max(pre, 0.0) * p.w2(h, o);
      }
      CHECK(y(r, o) == doctest::Approx(acc).epsilon(1e-13));
    }
  }
}

TEST_CASE("grad_check on a linear map") {
  // L = sum((x w)^2), dL/dw = 2 x^T (x w)
  Rng rng(8);
  Matrix x = random_matrix(4, 3, rng, 1.0);
  Matrix w = random_matrix(3, 2, rng, 1.0);
  const Matrix g = 2.0 * x.transpose() * (x * w);
  const std::vector<GradSlot> slots{{"w", std::span<double>(w.data(), static_cast<std::size_t>(w.size())),
                                     std::span<const double>(g.data(), static_cast<std::size_t>(g.size()))}};
  const Matrix w_before = w;
  const GradReport r = grad_check(slots, [&](const GradSlot&) { return sum_squares(x * w); });
  CHECK(r.n_checked == 6);
  CHECK(r.max_rel_err <= 1e-10);
  CHECK(w == w_before);

  // a wrong gradient is detected
  Matrix bad = g;
  bad(0, 0) += 1.0;
  const std::vector<GradSlot> bad_slots{{"w", std::span<double>(w.data(), static_cast<std::size_t>(w.size())),
                                         std::span<const double>(bad.data(), static_cast<std::size_t>(bad.size()))}};
  const GradReport rb = grad_check(bad_slots, [&](const GradSlot&) { return sum_squares(x * w); });
  CHECK(rb.max_rel_err > 1e-2);
  CHECK(rb.worst_param.find('w') != std::string::npos);
}

TEST_CASE("grad_check rejects non-finite losses") {
  Matrix w = Matrix::Ones(1, 1);
  const Matrix g = Matrix::Ones(1, 1);
  const std::vector<GradSlot> slots{{"w", std::span<double>(w.data(), 1), std::span<const double>(g.data(), 1)}};
  CHECK_THROWS_AS(grad_check(slots, [](const GradSlot&) { return std::nan(""); }), Error);
}

TEST_CASE("backward passes agree with finite differences") {
  for (std::uint64_t seed : {1u, 2u}) {
    CHECK(check_linear(seed).max_rel_err <= kGradTolerance);
    CHECK(check_softmax(seed).max_rel_err <= kGradTolerance);
    CHECK(check_layer_norm(seed).max_rel_err <= kGradTolerance);
    CHECK(check_attention(seed).max_rel_err <= kGradTolerance);
    CHECK(check_attention(seed, 8, 3, 1).max_rel_err <= kGradTolerance);
    CHECK(check_ffn(seed).max_rel_err <= kGradTolerance);
  }
}

TEST_CASE("zeros_like keeps shapes") {
  Rng rng(9);
  const AttentionParams p = AttentionParams::random(8, 2, rng, true);
  const AttentionParams z = zeros_like(p);
  CHECK(z.wq.rows() == 8);
  CHECK(z.bo.cols() == 8);
  CHECK(z.n_heads == 2);
  CHECK(z.wv.cwiseAbs().maxCoeff() == 0.0);
}
