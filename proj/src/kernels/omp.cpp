// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include "rows.hpp"
#include "shr/kernels.hpp"

namespace shr::kernels::omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    rows::matmul_row(a.data(), b.data(), out.data(), n, i);
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    rows::matmul_nt_row(a.data(), b.data(), out.data(), n, i);
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    rows::matmul_tn_row(a.data(), b.data(), out.data(), n, i);
  }
}

void conv2d_forward(const ConvShape& s, std::span<const double> padded_in,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < s.out_channels; ++co) {
    for (int y = 0; y < s.height; ++y) {
      rows::conv_forward_row(s, padded_in.data(), weights.data(), bias.data(), out.data(), co, y);
    }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out,
                           std::span<const double> weights, std::span<double> grad_padded_in) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < s.in_channels; ++ci) {
    rows::conv_backward_input_channel(s, grad_out.data(), weights.data(), grad_padded_in.data(),
                                      ci);
  }
}

void conv2d_backward_weights(const ConvShape& s, std::span<const double> grad_out,
                             std::span<const double> padded_in, std::span<double> grad_weights,
                             std::span<double> grad_bias) {
#pragma omp parallel
  {
    std::vector<double> lanes(static_cast<std::size_t>(s.width));
#pragma omp for collapse(2) schedule(static)
    for (int co = 0; co < s.out_channels; ++co) {
      for (int ci = 0; ci < s.in_channels; ++ci) {
        rows::conv_backward_weights_pair(s, grad_out.data(), padded_in.data(),
                                         grad_weights.data(), co, ci, lanes.data());
      }
    }
#pragma omp for schedule(static)
    for (int co = 0; co < s.out_channels; ++co) {
      rows::conv_backward_bias(s, grad_out.data(), grad_bias.data(), co, lanes.data());
    }
  }
}

}  // namespace shr::kernels::omp
