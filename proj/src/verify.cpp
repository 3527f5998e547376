// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>

#include "shr/certificate.hpp"
#include "shr/harness.hpp"
#include "shr/losses.hpp"
#include "shr/rcc.hpp"
#include "shr/rng.hpp"

namespace shr {

namespace {

class Checklist {
 public:
  Checklist(std::ostream& log, std::vector<VerificationCheck>* out) : log_(log), out_(out) {}

  void record(const std::string& name, bool ok, const std::string& detail, double worst = 0.0) {
    log_ << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    all_ok_ = all_ok_ && ok;
    if (out_ != nullptr) {
      out_->push_back({name, ok, detail, worst});
    }
  }

  bool all_ok() const { return all_ok_; }

 private:
  std::ostream& log_;
  std::vector<VerificationCheck>* out_;
  bool all_ok_ = true;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::vector<GaussianPeak> random_interior_peaks(CounterRng& rng, int count, int width) {
  std::vector<GaussianPeak> peaks;
  for (int i = 0; i < count; ++i) {
    const double sigma = rng.uniform(1.0, 3.0);
    const double margin = 4.0 * sigma;
    peaks.push_back({std::round(rng.uniform(margin, width - 1 - margin)),
                     std::round(rng.uniform(margin, width - 1 - margin)), sigma});
  }
  return peaks;
}

}  // namespace

bool run_verification_suite(std::ostream& log, std::vector<VerificationCheck>* checks_out) {
  Checklist checks(log, checks_out);

  double t1_err = 0.0;
  double t1_norm_err = 0.0;
  for (int width : {16, 64}) {
    for (double sigma : {1.0, 2.0, 3.0}) {
      const double center = (width - 1) / 2.0;
      const auto rep = verify_theorem1({std::floor(center), std::ceil(center), sigma}, width);
      t1_err = std::max(t1_err, rep.max_abs_error);
      t1_norm_err = std::max(t1_norm_err, rep.normalized_max_abs_error);
    }
  }
  checks.record("rcc.single_gaussian", t1_err < 1e-9 && t1_norm_err < 1e-6,
                "max abs err " + sci(t1_err) + ", normalized " + sci(t1_norm_err), t1_err);

  double t2_err = 0.0;
  const CounterRng t2_root(2024);
  for (std::uint64_t c = 0; c < 20; ++c) {
    CounterRng rng = t2_root.fork({c});
    const int n_peaks = c % 2 == 0 ? 2 : 3;
    const auto rep = verify_theorem2(random_interior_peaks(rng, n_peaks, 64), 64);
    t2_err = std::max(t2_err, rep.max_abs_error);
  }
  checks.record("rcc.peak_decomposition", t2_err < 1e-9, "max abs err " + sci(t2_err), t2_err);

  const HeatmapPair boundary = certificate_boundary_example();
  const auto b = certify(boundary.clean, boundary.perturbed);
  checks.record("certificate.boundary_example",
                b.holds_paper && !b.argmax_stable && !b.holds_strengthened,
                "plain form holds, argmax moves, strengthened rejects");
  const auto sweep = certificate_soundness_sweep(100000, 8, 7);
  checks.record("certificate.soundness", sweep.strengthened_violations == 0,
                std::to_string(sweep.strengthened_holds) + " certified of " +
                    std::to_string(sweep.pairs) + ", " +
                    std::to_string(sweep.strengthened_violations) + " violations");

  for (LossId id : {LossId::wce, LossId::mst, LossId::st, LossId::l2, LossId::rcc_composite,
                    LossId::rcc_wce}) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      worst = std::max(worst, grad_check(id, random_grad_check_inputs(id, 8, seed), 1e-5));
    }
    // The softmax -> normalized RCC -> weighted cross-entropy chain has
    // entries far below the loss scale, where two-point differences lose
    // about one more digit.
    const double tol = id == LossId::rcc_wce ? 1e-4 : 1e-5;
    checks.record("grad." + to_string(id), worst < tol, "worst rel err " + sci(worst), worst);
  }

  ModelConfig tiny;
  tiny.input_size = 8;
  tiny.layers = {{1, 3, false}};
  ModelConfig full;
  full.input_size = 8;
  full.layers = {{2, 3, true}, {1, 1, false}};
  full.rcc_head = true;
  full.rcc_full_gradient = true;
  for (const auto& [name, cfg] : {std::pair{"grad.toy_conv", tiny}, std::pair{"grad.toy_pipeline", full}}) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      worst = std::max(worst, toy_grad_check(cfg, seed));
    }
    checks.record(name, worst < 1e-5, "worst rel err " + sci(worst), worst);
  }
  return checks.all_ok();
}

}  // namespace shr
