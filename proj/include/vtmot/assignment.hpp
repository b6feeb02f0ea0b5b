// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace vtmot {

/// Axis-aligned box, top-left corner plus extent, in pixels.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Intersection over union. Zero-area boxes never overlap anything, themselves included.
double iou(const Box& a, const Box& b);

/// Dense cost (or similarity) matrix, rows x cols. Entries must be finite.
using CostMatrix = Eigen::MatrixXd;

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double total_cost = 0.0;
};

/// Minimum-cost assignment (Kuhn-Munkres, O(n^3)).
///
/// Rectangular inputs are padded to square with a constant larger than every
/// real entry; padded pairs are dropped from the result, so
/// |pairs| = min(rows, cols). Rows are inserted in increasing order and
/// columns scanned in increasing order with strict comparisons, so among
/// equal-cost alternatives the earlier row/column wins and the output is
/// reproducible. Throws Error(NonFinite) on NaN or infinite entries.
Assignment hungarian(const CostMatrix& cost);

/// Maximum total weight matching restricted to pairs where `eligible` is true.
/// Weights of eligible pairs must be >= 0. total_cost holds the summed weight.
Assignment max_weight_matching(const Eigen::MatrixXd& weight,
                               const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& eligible);

/// Maximum total similarity matching using only pairs with sim >= threshold.
Assignment match_with_threshold(const CostMatrix& sim, double threshold);

}  // namespace vtmot
