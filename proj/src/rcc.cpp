// SPDX-License-Identifier: Apache-2.0
#include "shr/rcc.hpp"

#include <algorithm>
#include <cmath>

#include "shr/kernels.hpp"

namespace shr {

namespace {

void require_square(const Heatmap& hm, const char* what) {
  if (!hm.is_square()) {
    throw DomainError(std::string(what) + ": heatmap must be square, got " +
                      std::to_string(hm.height()) + "x" + std::to_string(hm.width()) +
                      " (zero-pad to square first)");
  }
}

void require_interior(const GaussianPeak& p, int width, const char* what) {
  if (!(p.sigma > 0.0) || p.center_row < 0.0 || p.center_col < 0.0 ||
      p.center_row > width - 1 || p.center_col > width - 1) {
    throw DomainError(std::string(what) + ": peak must lie inside the grid with sigma > 0");
  }
}

}  // namespace

Heatmap rcc_forward(const Heatmap& hm) {
  require_square(hm, "rcc_forward");
  Heatmap out(hm.height(), hm.width());
  kernels::omp::matmul(hm.values(), hm.values(), out.values(), hm.width());
  return out;
}

RccResult rcc_normalized_full(const Heatmap& hm) {
  RccResult r;
  r.raw = rcc_forward(hm);
  r.z_pos = argmax_pos(r.raw);
  r.z = r.raw[r.z_pos];
  if (!(r.z > 0.0)) {
    throw DegenerateInputError("rcc_normalized: RCC output has no positive maximum (Z = " +
                               std::to_string(r.z) + ")");
  }
  r.normalized = r.raw;
  for (double& v : r.normalized.values()) {
    v /= r.z;
  }
  return r;
}

Heatmap rcc_normalized(const Heatmap& hm) { return rcc_normalized_full(hm).normalized; }

Heatmap rcc_backward(const Heatmap& hm, const Heatmap& upstream) {
  require_square(hm, "rcc_backward");
  require_same_shape(hm, upstream, "rcc_backward");
  const int n = hm.width();
  // d/dH sum(U * H H) = U H^T + H^T U
  Heatmap grad(n, n);
  Heatmap second(n, n);
  kernels::omp::matmul_nt(upstream.values(), hm.values(), grad.values(), n);
  kernels::omp::matmul_tn(hm.values(), upstream.values(), second.values(), n);
  auto g = grad.values();
  auto s = second.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] += s[i];
  }
  return grad;
}

Heatmap rcc_normalized_backward(const Heatmap& hm, const RccResult& fwd, const Heatmap& upstream,
                                bool through_normalizer) {
  require_same_shape(fwd.raw, upstream, "rcc_normalized_backward");
  Heatmap grad_raw = upstream;
  for (double& v : grad_raw.values()) {
    v /= fwd.z;
  }
  if (through_normalizer) {
    double dot = 0.0;
    const auto u = upstream.values();
    const auto r = fwd.raw.values();
    for (std::size_t i = 0; i < u.size(); ++i) {
      dot += u[i] * r[i];
    }
    grad_raw[fwd.z_pos] -= dot / (fwd.z * fwd.z);
  }
  return rcc_backward(hm, grad_raw);
}

double rcc_coefficient(const GaussianPeak& a, const GaussianPeak& b, int width) {
  const double sa2 = a.sigma * a.sigma;
  const double sb2 = b.sigma * b.sigma;
  double c = 0.0;
  for (int i = 0; i < width; ++i) {
    const double dc = i - a.center_col;
    const double dr = i - b.center_row;
    c += std::exp(-(sb2 * dc * dc + sa2 * dr * dr) / (2.0 * sa2 * sb2));
  }
  return c;
}

Heatmap rcc_joint_gaussian(const GaussianPeak& a, const GaussianPeak& b, int width) {
  const double sa2 = a.sigma * a.sigma;
  const double sb2 = b.sigma * b.sigma;
  Heatmap g(width, width);
  for (int l = 0; l < width; ++l) {
    const double dl = l - a.center_row;
    for (int m = 0; m < width; ++m) {
      const double dm = m - b.center_col;
      g(l, m) = std::exp(-(sb2 * dl * dl + sa2 * dm * dm) / (2.0 * sa2 * sb2));
    }
  }
  return g;
}

Theorem1Report verify_theorem1(const GaussianPeak& peak, int width) {
  require_interior(peak, width, "verify_theorem1");
  const Heatmap g = gaussian_heatmap(peak, width, width);
  Theorem1Report rep;
  const double inv = 1.0 / (2.0 * peak.sigma * peak.sigma);
  for (int i = 0; i < width; ++i) {
    const double dc = i - peak.center_col;
    const double dr = i - peak.center_row;
    rep.c1 += std::exp(-(dc * dc + dr * dr) * inv);
  }
  const Heatmap out = rcc_forward(g);
  const Heatmap norm = rcc_normalized(g);
  const auto o = out.values();
  const auto gv = g.values();
  const auto nv = norm.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(o[i] - rep.c1 * gv[i]));
    rep.normalized_max_abs_error = std::max(rep.normalized_max_abs_error, std::abs(nv[i] - gv[i]));
  }
  return rep;
}

Theorem2Report verify_theorem2(const std::vector<GaussianPeak>& peaks, int width) {
  if (peaks.size() < 2) {
    throw DomainError("verify_theorem2: need at least two peaks");
  }
  for (const auto& p : peaks) {
    require_interior(p, width, "verify_theorem2");
  }
  Theorem2Report rep;
  rep.direct = rcc_forward(gaussian_sum(peaks, width, width));
  rep.reconstructed = Heatmap(width, width);
  const int n = static_cast<int>(peaks.size());
  auto accumulate = [&](double coeff, const Heatmap& g) {
    auto dst = rep.reconstructed.values();
    const auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] += coeff * src[i];
    }
  };
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) {
        continue;
      }
      const double c = rcc_coefficient(peaks[a], peaks[b], width);
      rep.cross_coefficients.push_back({a, b, c});
      accumulate(c, rcc_joint_gaussian(peaks[a], peaks[b], width));
    }
  }
  for (int k = 0; k < n; ++k) {
    const double c = rcc_coefficient(peaks[k], peaks[k], width);
    rep.self_coefficients.push_back(c);
    accumulate(c, gaussian_heatmap(peaks[k], width, width));
  }
  const auto r = rep.reconstructed.values();
  const auto d = rep.direct.values();
  for (std::size_t i = 0; i < r.size(); ++i) {
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(r[i] - d[i]));
  }
  return rep;
}

}  // namespace shr
