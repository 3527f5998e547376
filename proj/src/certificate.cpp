// SPDX-License-Identifier: Apache-2.0
#include "shr/certificate.hpp"

#include <cmath>

#include "shr/rng.hpp"

namespace shr {

CertificateReport certify(const Heatmap& r_clean, const Heatmap& r_pert) {
  require_same_shape(r_clean, r_pert, "certify");
  if (r_clean.size() < 2) {
    throw DomainError("certify: need at least 2 pixels");
  }
  CertificateReport rep;
  const TopTwo top = top_two(r_clean);
  rep.r1 = top.first;
  rep.r2 = top.second;
  rep.lhs = rep.r1 - rep.r2;

  const auto c = r_clean.values();
  const auto p = r_pert.values();
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = p[i] - c[i];
    sum_sq += d * d;
  }
  rep.delta_anchor = r_pert[top.first_pos] - r_clean[top.first_pos];
  rep.delta_norm = std::sqrt(sum_sq);
  const double hw = static_cast<double>(r_clean.size());
  rep.rhs_paper = std::sqrt(sum_sq + hw * rep.delta_anchor * rep.delta_anchor);
  rep.rhs_strengthened = rep.delta_norm + std::abs(rep.delta_anchor);
  rep.holds_paper = rep.lhs >= rep.rhs_paper;
  rep.holds_strengthened = rep.lhs > rep.rhs_strengthened;
  rep.argmax_stable = argmax_pos(r_clean) == argmax_pos(r_pert);
  return rep;
}

double min_margin_for_stability(double perturb_budget) {
  if (!(perturb_budget >= 0.0)) {
    throw DomainError("min_margin_for_stability: budget must be non-negative");
  }
  return perturb_budget + perturb_budget;
}

SoundnessSummary certificate_soundness_sweep(std::uint64_t pairs, int side, std::uint64_t seed) {
  SoundnessSummary s;
  const CounterRng root(seed);
  Heatmap clean(side, side);
  Heatmap pert(side, side);
  for (std::uint64_t k = 0; k < pairs; ++k) {
    CounterRng rng = root.fork({k});
    for (double& v : clean.values()) {
      v = rng.uniform();
    }
    const double scale = std::pow(10.0, rng.uniform(-4.0, 0.0));
    auto cv = clean.values();
    auto pv = pert.values();
    for (std::size_t i = 0; i < cv.size(); ++i) {
      pv[i] = cv[i] + scale * rng.uniform(-1.0, 1.0);
    }
    if (rng.uniform() < 0.5) {
      const std::size_t j = static_cast<std::size_t>(rng.below(cv.size()));
      pv[j] += 10.0 * scale * rng.uniform();
    }
    const CertificateReport rep = certify(clean, pert);
    ++s.pairs;
    if (rep.holds_strengthened) {
      ++s.strengthened_holds;
      if (!rep.argmax_stable) {
        ++s.strengthened_violations;
      }
    }
    if (rep.holds_paper) {
      ++s.paper_holds;
      if (!rep.argmax_stable) {
        ++s.paper_violations;
      }
    }
  }
  return s;
}

}  // namespace shr

namespace shr {

HeatmapPair certificate_boundary_example() {
  return {Heatmap(2, 2, {0.6, 0.5897, 0.0, 0.0}), Heatmap(2, 2, {0.599, 0.5997, 0.0, 0.0})};
}

}  // namespace shr
