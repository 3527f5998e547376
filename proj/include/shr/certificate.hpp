// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "shr/heatmap.hpp"

namespace shr {

/// Margin condition for argmax stability between a clean output heatmap and
/// its perturbed counterpart.
///
/// Two conditions are evaluated on the same margin lhs = r1 - r2:
///   plain form:        lhs >= sqrt(sum D^2 + H W D1^2)
///   strengthened form: lhs >  sqrt(sum D^2) + |D1|
/// where D = perturbed - clean and D1 is D at the clean argmax. The
/// strengthened form is sufficient for an unchanged argmax; the plain form
/// admits counterexamples (see tests/fixtures/certificate_boundary_*.csv).
struct CertificateReport {
  double r1 = 0.0;
  double r2 = 0.0;
  double lhs = 0.0;
  double rhs_paper = 0.0;
  double rhs_strengthened = 0.0;
  double delta_anchor = 0.0;  // signed D1
  double delta_norm = 0.0;    // sqrt(sum D^2)
  bool holds_paper = false;
  bool holds_strengthened = false;
  bool argmax_stable = false;
};

CertificateReport certify(const Heatmap& r_clean, const Heatmap& r_pert);

struct HeatmapPair {
  Heatmap clean;
  Heatmap perturbed;
};

/// 2x2 pair on which the plain condition holds while the argmax moves.
HeatmapPair certificate_boundary_example();

/// Smallest margin that guarantees the strengthened condition for every
/// perturbation with sqrt(sum D^2) <= budget (|D1| is at most the budget).
double min_margin_for_stability(double perturb_budget);

struct SoundnessSummary {
  std::uint64_t pairs = 0;
  std::uint64_t strengthened_holds = 0;
  std::uint64_t strengthened_violations = 0;  // holds but argmax moved
  std::uint64_t paper_holds = 0;
  std::uint64_t paper_violations = 0;
};

/// Randomized soundness sweep over seeded heatmap pairs. Clean heatmaps are
/// uniform in [0, 1]; perturbations mix small dense noise with a sparse push on
/// one competitor so both conditions are exercised near their boundary.
SoundnessSummary certificate_soundness_sweep(std::uint64_t pairs, int side, std::uint64_t seed);

}  // namespace shr
