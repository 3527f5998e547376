// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "shr/heatmap.hpp"

namespace shr {

// Row-column correlation: RCC(l, m) = sum_i HT(l, i) * HT(i, m), i.e. the
// heatmap multiplied by itself as a square matrix. Non-square heatmaps must
// be zero-padded to square by the caller.

Heatmap rcc_forward(const Heatmap& hm);

/// rcc_forward divided by its own maximum.
Heatmap rcc_normalized(const Heatmap& hm);

/// Forward pass that keeps what the backward pass needs.
struct RccResult {
  Heatmap raw;         // rcc_forward(input)
  Heatmap normalized;  // raw / z
  double z = 0.0;      // maximum of raw
  PixelPos z_pos;      // where the maximum sits
};
RccResult rcc_normalized_full(const Heatmap& hm);

/// Gradient of sum(upstream * rcc_forward(hm)) with respect to hm.
Heatmap rcc_backward(const Heatmap& hm, const Heatmap& upstream);

/// Gradient of sum(upstream * rcc_normalized(hm)). With `through_normalizer`
/// false the normalizer z is held constant (the training default); with true
/// the dependence of z on the argmax entry is included.
Heatmap rcc_normalized_backward(const Heatmap& hm, const RccResult& fwd, const Heatmap& upstream,
                                bool through_normalizer);

struct Theorem1Report {
  double c1 = 0.0;
  double max_abs_error = 0.0;             // |RCC(G) - c1 G|
  double normalized_max_abs_error = 0.0;  // |normalized RCC(G) - G|
};

/// Single Gaussian on a width x width grid: checks RCC(G) == C1 * G.
Theorem1Report verify_theorem1(const GaussianPeak& peak, int width);

struct CrossCoefficient {
  int a = 0;
  int b = 0;
  double value = 0.0;
};

struct Theorem2Report {
  Heatmap reconstructed;  // sum_{a!=b} C_ab G_ab + sum_n C_n G_n
  Heatmap direct;         // RCC of the summed heatmap
  double max_abs_error = 0.0;
  std::vector<double> self_coefficients;          // C_n per peak
  std::vector<CrossCoefficient> cross_coefficients;  // C_ab per ordered pair, a != b
};

/// Multi-peak decomposition of RCC over a sum of N >= 2 Gaussians.
Theorem2Report verify_theorem2(const std::vector<GaussianPeak>& peaks, int width);

/// C_ab = sum_i exp(-(i - kc_a)^2 / (2 s_a^2) - (i - kr_b)^2 / (2 s_b^2)); with
/// a == b this is the single-peak constant C_n.
double rcc_coefficient(const GaussianPeak& a, const GaussianPeak& b, int width);

/// Joint sub-heatmap G_ab(l, m) = exp(-(l - kr_a)^2 / (2 s_a^2) - (m - kc_b)^2 / (2 s_b^2)).
Heatmap rcc_joint_gaussian(const GaussianPeak& a, const GaussianPeak& b, int width);

}  // namespace shr
