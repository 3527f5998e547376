// SPDX-License-Identifier: Apache-2.0
#include "shr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "shr/rcc.hpp"
#include "shr/rng.hpp"

namespace shr {

namespace {

void check_wce_targets(const Heatmap& weights, const Heatmap& labels) {
  for (double y : labels.values()) {
    if (y != 0.0 && y != 1.0) {
      throw DomainError("wce_loss: labels must be binary");
    }
  }
  for (double w : weights.values()) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw DomainError("wce_loss: weights must lie in [0, 1]");
    }
  }
}

}  // namespace

LossValue wce_loss(const Heatmap& logits, const Heatmap& weights, const Heatmap& labels) {
  require_same_shape(logits, weights, "wce_loss");
  require_same_shape(logits, labels, "wce_loss");
  check_wce_targets(weights, labels);
  const Heatmap logp = log_softmax_heatmap(logits);
  LossValue out;
  out.grad_primary = Heatmap(logits.height(), logits.width());
  const auto lp = logp.values();
  const auto w = weights.values();
  const auto y = labels.values();
  double mass = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double wy = w[i] * y[i];
    if (wy != 0.0) {
      out.value -= wy * lp[i];
      mass += wy;
    }
  }
  // d/dz_k = softmax_k * sum(w y) - w_k y_k
  auto g = out.grad_primary.values();
  for (std::size_t i = 0; i < lp.size(); ++i) {
    g[i] = std::exp(lp[i]) * mass - w[i] * y[i];
  }
  return out;
}

LossValue wce_loss_scores(const Heatmap& scores, const Heatmap& weights, const Heatmap& labels) {
  require_same_shape(scores, weights, "wce_loss");
  require_same_shape(scores, labels, "wce_loss");
  check_wce_targets(weights, labels);
  const auto s = scores.values();
  double total = 0.0;
  for (double v : s) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError("wce_loss_scores: scores must be positive and finite");
    }
    total += v;
  }
  const double log_total = std::log(total);
  LossValue out;
  out.grad_primary = Heatmap(scores.height(), scores.width());
  const auto w = weights.values();
  const auto y = labels.values();
  double mass = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double wy = w[i] * y[i];
    if (wy != 0.0) {
      out.value -= wy * (std::log(s[i]) - log_total);
      mass += wy;
    }
  }
  // d/ds_k = -w_k y_k / s_k + sum(w y) / sum(s)
  auto g = out.grad_primary.values();
  for (std::size_t i = 0; i < s.size(); ++i) {
    g[i] = mass / total - w[i] * y[i] / s[i];
  }
  return out;
}

LossValue mst_loss(const Heatmap& r_clean, const Heatmap& r_pert) {
  require_same_shape(r_clean, r_pert, "mst_loss");
  const PixelPos anchor = argmax_pos(r_clean);
  const double n = static_cast<double>(r_clean.size());
  LossValue out;
  out.grad_primary = Heatmap(r_clean.height(), r_clean.width());
  out.grad_secondary = Heatmap(r_clean.height(), r_clean.width());
  const auto c = r_clean.values();
  const auto p = r_pert.values();
  auto gc = out.grad_primary.values();
  auto gp = out.grad_secondary->values();
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = p[i] - c[i];
    sum_sq += d * d;
    gp[i] = 2.0 * d / n;
    gc[i] = -gp[i];
  }
  const double d1 = r_pert[anchor] - r_clean[anchor];
  out.value = sum_sq / n + d1 * d1;
  (*out.grad_secondary)[anchor] += 2.0 * d1;
  out.grad_primary[anchor] -= 2.0 * d1;
  return out;
}

LossValue st_loss(const Heatmap& r_clean, const Heatmap& r_pert) {
  require_same_shape(r_clean, r_pert, "st_loss");
  LossValue out;
  out.grad_primary = Heatmap(r_clean.height(), r_clean.width());
  out.grad_secondary = Heatmap(r_clean.height(), r_clean.width());
  const auto c = r_clean.values();
  const auto p = r_pert.values();
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = p[i] - c[i];
    sum_sq += d * d;
  }
  out.value = std::sqrt(sum_sq);
  if (out.value > 0.0) {
    auto gc = out.grad_primary.values();
    auto gp = out.grad_secondary->values();
    for (std::size_t i = 0; i < c.size(); ++i) {
      gp[i] = (p[i] - c[i]) / out.value;
      gc[i] = -gp[i];
    }
  }
  return out;
}

LossValue l2_gaussian_loss(const Heatmap& pred, const Heatmap& target) {
  require_same_shape(pred, target, "l2_gaussian_loss");
  const double n = static_cast<double>(pred.size());
  LossValue out;
  out.grad_primary = Heatmap(pred.height(), pred.width());
  const auto a = pred.values();
  const auto b = target.values();
  auto g = out.grad_primary.values();
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum_sq += d * d;
    g[i] = 2.0 * d / n;
  }
  out.value = sum_sq / n;
  return out;
}

LossId parse_loss_id(const std::string& name) {
  if (name == "wce") return LossId::wce;
  if (name == "mst") return LossId::mst;
  if (name == "st") return LossId::st;
  if (name == "l2") return LossId::l2;
  if (name == "rcc_composite") return LossId::rcc_composite;
  if (name == "rcc_wce") return LossId::rcc_wce;
  throw DomainError("unknown loss id '" + name + "'");
}

std::string to_string(LossId id) {
  switch (id) {
    case LossId::wce:
      return "wce";
    case LossId::mst:
      return "mst";
    case LossId::st:
      return "st";
    case LossId::l2:
      return "l2";
    case LossId::rcc_composite:
      return "rcc_composite";
    case LossId::rcc_wce:
      return "rcc_wce";
  }
  return "unknown";
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

namespace {

Heatmap uniform_grid(CounterRng& rng, int side, double lo, double hi) {
  Heatmap h(side, side);
  for (double& v : h.values()) {
    v = rng.uniform(lo, hi);
  }
  return h;
}

PixelPos random_pos(CounterRng& rng, int side) {
  return {static_cast<int>(rng.below(static_cast<std::uint64_t>(side))),
          static_cast<int>(rng.below(static_cast<std::uint64_t>(side)))};
}

// Value and gradients for one loss evaluation, flattened for the checker.
struct Evaluated {
  double value = 0.0;
  Heatmap grad_primary;
  std::optional<Heatmap> grad_secondary;
};

Evaluated evaluate(LossId id, const Heatmap& primary, const GradCheckInputs& in) {
  switch (id) {
    case LossId::wce: {
      auto l = wce_loss(primary, in.weights, in.labels);
      return {l.value, std::move(l.grad_primary), std::nullopt};
    }
    case LossId::mst: {
      auto l = mst_loss(primary, in.secondary);
      return {l.value, std::move(l.grad_primary), std::move(l.grad_secondary)};
    }
    case LossId::st: {
      auto l = st_loss(primary, in.secondary);
      return {l.value, std::move(l.grad_primary), std::move(l.grad_secondary)};
    }
    case LossId::l2: {
      auto l = l2_gaussian_loss(primary, in.secondary);
      return {l.value, std::move(l.grad_primary), std::nullopt};
    }
    case LossId::rcc_composite: {
      auto l = l2_gaussian_loss(rcc_forward(primary), in.secondary);
      return {l.value, rcc_backward(primary, l.grad_primary), std::nullopt};
    }
    case LossId::rcc_wce: {
      const Heatmap p = softmax_heatmap(primary);
      const RccResult r = rcc_normalized_full(p);
      auto l = wce_loss_scores(r.normalized, in.weights, in.labels);
      const Heatmap g_p = rcc_normalized_backward(p, r, l.grad_primary, false);
      return {l.value, softmax_backward(p, g_p), std::nullopt};
    }
  }
  throw DomainError("unknown loss id");
}

double loss_value(LossId id, const Heatmap& primary, const Heatmap& secondary,
                  const GradCheckInputs& in) {
  GradCheckInputs copy = in;
  copy.secondary = secondary;
  return evaluate(id, primary, copy).value;
}

}  // namespace

GradCheckInputs random_grad_check_inputs(LossId id, int side, std::uint64_t seed) {
  CounterRng rng = CounterRng(seed).fork({static_cast<std::uint64_t>(id)});
  GradCheckInputs in;
  const HDConfig hd{0.7, std::max(1, side / 4), DistanceMetric::chessboard};
  switch (id) {
    case LossId::wce:
    case LossId::rcc_wce: {
      in.primary = uniform_grid(rng, side, -2.0, 2.0);
      const PixelPos kp = random_pos(rng, side);
      in.weights = hd_heatmap(kp, hd, side, side);
      in.labels = multilabel_map(kp, hd, side, side);
      break;
    }
    case LossId::mst:
      for (;;) {
        in.primary = uniform_grid(rng, side, 0.0, 1.0);
        const TopTwo t = top_two(in.primary);
        if (t.first - t.second > 1e-3) {
          break;
        }
      }
      in.secondary = uniform_grid(rng, side, 0.0, 1.0);
      break;
    case LossId::st:
      in.primary = uniform_grid(rng, side, 0.0, 1.0);
      in.secondary = uniform_grid(rng, side, 0.0, 1.0);
      break;
    case LossId::l2:
    case LossId::rcc_composite: {
      in.primary = uniform_grid(rng, side, 0.0, 1.0);
      const PixelPos kp = random_pos(rng, side);
      in.secondary = gaussian_heatmap({static_cast<double>(kp.row), static_cast<double>(kp.col),
                                       rng.uniform(1.0, 2.0)},
                                      side, side);
      if (id == LossId::l2) {
        // A relative-error check is meaningless where the gradient is near zero.
        for (std::size_t i = 0; i < in.primary.size(); ++i) {
          while (std::abs(in.primary.values()[i] - in.secondary.values()[i]) < 0.05) {
            in.primary.values()[i] = rng.uniform(0.0, 1.0);
          }
        }
      }
      if (id == LossId::rcc_composite) {
        // Keep the target on the same scale as RCC of the input.
        for (double& v : in.secondary.values()) {
          v *= side / 4.0;
        }
      }
      break;
    }
  }
  return in;
}

double grad_check(LossId id, const GradCheckInputs& inputs, double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) {
    throw DomainError("grad_check: step must lie in [1e-7, 1e-3]");
  }
  const Evaluated base = evaluate(id, inputs.primary, inputs);
  double worst = 0.0;

  Heatmap primary = inputs.primary;
  for (std::size_t i = 0; i < primary.size(); ++i) {
    const double keep = primary.values()[i];
    primary.values()[i] = keep + step;
    const double up = loss_value(id, primary, inputs.secondary, inputs);
    primary.values()[i] = keep - step;
    const double down = loss_value(id, primary, inputs.secondary, inputs);
    primary.values()[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, relative_error(base.grad_primary.values()[i], numeric));
  }

  if (base.grad_secondary) {
    Heatmap secondary = inputs.secondary;
    for (std::size_t i = 0; i < secondary.size(); ++i) {
      const double keep = secondary.values()[i];
      secondary.values()[i] = keep + step;
      const double up = loss_value(id, inputs.primary, secondary, inputs);
      secondary.values()[i] = keep - step;
      const double down = loss_value(id, inputs.primary, secondary, inputs);
      secondary.values()[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, relative_error(base.grad_secondary->values()[i], numeric));
    }
  }
  return worst;
}

double grad_check(const std::string& loss_id, const GradCheckInputs& inputs, double step) {
  return grad_check(parse_loss_id(loss_id), inputs, step);
}

}  // namespace shr
