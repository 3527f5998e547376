// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-row work units shared by the serial and OpenMP kernels. Each unit writes
// a disjoint slice of the output, so the two drivers only differ in how they
// distribute units across threads.

#include <cstddef>
#include <span>

#include "shr/kernels.hpp"

namespace shr::kernels::rows {

inline std::size_t idx(std::size_t a, std::size_t b, std::size_t stride) { return a * stride + b; }

// out row i = a row i * b
inline void matmul_row(const double* a, const double* b, double* out, int n, int i) {
  double* orow = out + idx(i, 0, n);
  for (int j = 0; j < n; ++j) {
    orow[j] = 0.0;
  }
  const double* arow = a + idx(i, 0, n);
  for (int k = 0; k < n; ++k) {
    const double aik = arow[k];
    const double* brow = b + idx(k, 0, n);
    for (int j = 0; j < n; ++j) {
      orow[j] += aik * brow[j];
    }
  }
}

// out row i = a row i * b^T
inline void matmul_nt_row(const double* a, const double* b, double* out, int n, int i) {
  const double* arow = a + idx(i, 0, n);
  for (int j = 0; j < n; ++j) {
    const double* brow = b + idx(j, 0, n);
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      acc += arow[k] * brow[k];
    }
    out[idx(i, j, n)] = acc;
  }
}

// out row i = (a^T) row i * b
inline void matmul_tn_row(const double* a, const double* b, double* out, int n, int i) {
  double* orow = out + idx(i, 0, n);
  for (int j = 0; j < n; ++j) {
    orow[j] = 0.0;
  }
  for (int k = 0; k < n; ++k) {
    const double aki = a[idx(k, i, n)];
    const double* brow = b + idx(k, 0, n);
    for (int j = 0; j < n; ++j) {
      orow[j] += aki * brow[j];
    }
  }
}

inline void conv_forward_row(const ConvShape& s, const double* pin, const double* w,
                             const double* bias, double* out, int co, int y) {
  const int pw = s.padded_width();
  const std::size_t pplane = static_cast<std::size_t>(s.padded_height()) * pw;
  const int k = s.kernel;
  double* orow = out + (static_cast<std::size_t>(co) * s.height + y) * s.width;
  for (int x = 0; x < s.width; ++x) {
    orow[x] = bias[co];
  }
  for (int ci = 0; ci < s.in_channels; ++ci) {
    const double* wk = w + (static_cast<std::size_t>(co) * s.in_channels + ci) * k * k;
    const double* plane = pin + ci * pplane;
    for (int ky = 0; ky < k; ++ky) {
      const double* irow = plane + static_cast<std::size_t>(y + ky) * pw;
      for (int kx = 0; kx < k; ++kx) {
        const double wv = wk[ky * k + kx];
        const double* src = irow + kx;
        for (int x = 0; x < s.width; ++x) {
          orow[x] += wv * src[x];
        }
      }
    }
  }
}

// Gradient into one padded input channel.
inline void conv_backward_input_channel(const ConvShape& s, const double* gout, const double* w,
                                        double* gpin, int ci) {
  const int pw = s.padded_width();
  const std::size_t pplane = static_cast<std::size_t>(s.padded_height()) * pw;
  const std::size_t oplane = static_cast<std::size_t>(s.height) * s.width;
  const int k = s.kernel;
  double* gplane = gpin + ci * pplane;
  for (std::size_t i = 0; i < pplane; ++i) {
    gplane[i] = 0.0;
  }
  for (int co = 0; co < s.out_channels; ++co) {
    const double* wk = w + (static_cast<std::size_t>(co) * s.in_channels + ci) * k * k;
    const double* go = gout + co * oplane;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double wv = wk[ky * k + kx];
        for (int y = 0; y < s.height; ++y) {
          double* dst = gplane + static_cast<std::size_t>(y + ky) * pw + kx;
          const double* g = go + static_cast<std::size_t>(y) * s.width;
          for (int x = 0; x < s.width; ++x) {
            dst[x] += wv * g[x];
          }
        }
      }
    }
  }
}

// Weight gradients for one (co, ci) kernel slice. `lanes` is scratch of
// s.width doubles; partial sums are kept per column and reduced in a fixed
// order so the loop vectorizes without reassociation.
inline void conv_backward_weights_pair(const ConvShape& s, const double* gout, const double* pin,
                                       double* gw, int co, int ci, double* lanes) {
  const int pw = s.padded_width();
  const std::size_t pplane = static_cast<std::size_t>(s.padded_height()) * pw;
  const std::size_t oplane = static_cast<std::size_t>(s.height) * s.width;
  const int k = s.kernel;
  const double* go = gout + co * oplane;
  const double* plane = pin + ci * pplane;
  double* gk = gw + (static_cast<std::size_t>(co) * s.in_channels + ci) * k * k;
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      for (int x = 0; x < s.width; ++x) {
        lanes[x] = 0.0;
      }
      for (int y = 0; y < s.height; ++y) {
        const double* g = go + static_cast<std::size_t>(y) * s.width;
        const double* src = plane + static_cast<std::size_t>(y + ky) * pw + kx;
        for (int x = 0; x < s.width; ++x) {
          lanes[x] += g[x] * src[x];
        }
      }
      double acc = 0.0;
      for (int x = 0; x < s.width; ++x) {
        acc += lanes[x];
      }
      gk[ky * k + kx] += acc;
    }
  }
}

inline void conv_backward_bias(const ConvShape& s, const double* gout, double* gb, int co,
                               double* lanes) {
  const double* go = gout + static_cast<std::size_t>(co) * s.height * s.width;
  for (int x = 0; x < s.width; ++x) {
    lanes[x] = 0.0;
  }
  for (int y = 0; y < s.height; ++y) {
    const double* g = go + static_cast<std::size_t>(y) * s.width;
    for (int x = 0; x < s.width; ++x) {
      lanes[x] += g[x];
    }
  }
  double acc = 0.0;
  for (int x = 0; x < s.width; ++x) {
    acc += lanes[x];
  }
  gb[co] += acc;
}

}  // namespace shr::kernels::rows
