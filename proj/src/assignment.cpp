// SPDX-License-Identifier: Apache-2.0
#include "vtmot/assignment.hpp"

#include "vtmot/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vtmot {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

// Square Kuhn-Munkres with potentials; returns col assigned to each row.
std::vector<int> solve_square(const Eigen::MatrixXd& c) {
  const int n = static_cast<int>(c.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  Assignment out;
  const Eigen::Index rows = cost.rows();
  const Eigen::Index cols = cost.cols();
  if (rows == 0 || cols == 0) return out;
  if (!cost.allFinite()) throw Error(ErrorCode::NonFinite, "cost matrix has non-finite entries");

  const Eigen::Index n = std::max(rows, cols);
  Eigen::MatrixXd square;
  if (rows == cols) {
    square = cost;
  } else {
    const double pad = cost.cwiseAbs().maxCoeff() + 1.0;
    square = Eigen::MatrixXd::Constant(n, n, pad);
    square.topLeftCorner(rows, cols) = cost;
  }

  const std::vector<int> row_to_col = solve_square(square);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int c = row_to_col[static_cast<std::size_t>(r)];
    if (c < 0 || c >= cols) continue;
    out.pairs.emplace_back(static_cast<int>(r), c);
    out.total_cost += cost(r, c);
  }
  return out;
}

Assignment max_weight_matching(const Eigen::MatrixXd& weight,
                               const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& eligible) {
  if (weight.rows() != eligible.rows() || weight.cols() != eligible.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "weight and eligibility masks differ in shape");
  }
  Assignment out;
  if (weight.size() == 0 || !eligible.any()) return out;

  // Ineligible pairs cost 0, which is what leaving both sides unmatched is worth.
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(weight.rows(), weight.cols());
  for (Eigen::Index r = 0; r < weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < weight.cols(); ++c) {
      if (eligible(r, c)) cost(r, c) = -weight(r, c);
    }
  }
  const Assignment full = hungarian(cost);
  for (const auto& [r, c] : full.pairs) {
    if (!eligible(r, c)) continue;
    out.pairs.emplace_back(r, c);
    out.total_cost += weight(r, c);
  }
  return out;
}

Assignment match_with_threshold(const CostMatrix& sim, double threshold) {
  const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> eligible =
      (sim.array() >= threshold).matrix();
  return max_weight_matching(sim, eligible);
}

}  // namespace vtmot
