// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every hand-written backward pass, each on a
// sum-of-squares loss over the operation's output. Parameters and inputs are
// drawn from a seeded generator; a seed whose ReLU pre-activations sit close
// enough to zero for a step of h to cross the kink is skipped for the next.
#pragma once

#include "vtmot/pfm/fusion.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vtmot::pfm {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

GradReport check_linear(std::uint64_t seed);
GradReport check_softmax(std::uint64_t seed);
GradReport check_layer_norm(std::uint64_t seed);
GradReport check_attention(std::uint64_t seed, int d = 16, int n_tokens = 8, int n_heads = 4);
GradReport check_ffn(std::uint64_t seed);

/// Temporal and multimodal stages of a variant on random tokens (2x2 grid),
/// over the stage parameters and all token inputs the variant reads.
GradReport check_fusion_stage(FusionVariant variant, std::uint64_t seed, PfmConfig cfg = PfmConfig::gradcheck());

/// Whole forward pass from pixels, over every parameter and every input pixel
/// (including the rendered heatmap).
GradReport check_pfm_forward(const PfmConfig& cfg, std::uint64_t seed);

/// Same check at the given parameters and images, without seed screening.
/// Unused images of an Mff variant may be empty.
GradReport check_pfm_at(PfmParams p, PfmImages images);

struct GradCase {
  std::string name;
  GradReport report;
  double seconds = 0.0;

  bool passed() const { return report.max_rel_err <= kGradTolerance; }
};

/// softmax, layer_norm, attention, ffn, the fusion stage of each variant,
/// and (unless `quick`) the composed forward pass of `cfg`.
std::vector<GradCase> run_grad_suite(const PfmConfig& cfg = PfmConfig::gradcheck(), std::uint64_t seed = 1,
                                     bool quick = false);

}  // namespace vtmot::pfm
