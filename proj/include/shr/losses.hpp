// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "shr/heatmap.hpp"

namespace shr {

struct LossValue {
  double value = 0.0;
  Heatmap grad_primary;                   // w.r.t. logits / clean output / prediction
  std::optional<Heatmap> grad_secondary;  // w.r.t. perturbed output, pairwise losses only
};

/// -sum w * y * log softmax(logits). Labels must be 0/1, weights in [0, 1].
LossValue wce_loss(const Heatmap& logits, const Heatmap& weights, const Heatmap& labels);

/// Same loss where r = scores / sum(scores) for strictly positive scores
/// (e.g. a normalized RCC map). Gradient is w.r.t. the scores.
LossValue wce_loss_scores(const Heatmap& scores, const Heatmap& weights, const Heatmap& labels);

/// Mean squared per-pixel drift plus squared drift at the clean argmax. The
/// anchor position is treated as a constant.
LossValue mst_loss(const Heatmap& r_clean, const Heatmap& r_pert);

/// ||r_pert - r_clean||_2 over the whole grid; zero gradient at zero drift.
LossValue st_loss(const Heatmap& r_clean, const Heatmap& r_pert);

/// Mean squared error against a Gaussian target.
LossValue l2_gaussian_loss(const Heatmap& pred, const Heatmap& target);

enum class LossId { wce, mst, st, l2, rcc_composite, rcc_wce };

LossId parse_loss_id(const std::string& name);
std::string to_string(LossId id);

/// Arguments for a gradient check. Which fields are read depends on the loss:
///   wce:           primary = logits, weights, labels
///   mst, st:       primary = clean, secondary = perturbed
///   l2:            primary = prediction, secondary = target
///   rcc_composite: l2(rcc_forward(primary), secondary)
///   rcc_wce:       wce over normalized RCC of softmax(primary)
struct GradCheckInputs {
  Heatmap primary;
  Heatmap secondary;
  Heatmap weights;
  Heatmap labels;
};

/// Random inputs of a given side length for `id`. Draws that put an mst
/// anchor near a tie are rejected and redrawn.
GradCheckInputs random_grad_check_inputs(LossId id, int side, std::uint64_t seed);

/// Worst relative error between the analytic gradient and central finite
/// differences over every differentiated coordinate. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-12).
double grad_check(LossId id, const GradCheckInputs& inputs, double step);
double grad_check(const std::string& loss_id, const GradCheckInputs& inputs, double step);

/// Element-wise relative error with the grad_check denominator.
double relative_error(double analytic, double numeric);

}  // namespace shr
