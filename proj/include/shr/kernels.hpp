// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

// Dense inner loops shared by RCC, the toy convolutional model and the blur
// corruptions. Every kernel exists twice: `serial` is the reference, `omp`
// splits the output across threads. Both accumulate each output element in the
// same order, so their results are bitwise equal; tests rely on that.
//
// Layouts are row-major; multi-channel planes are channel-major (C x H x W).

namespace shr::kernels {

struct ConvShape {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;  // odd, square
  int height = 1;  // unpadded output plane
  int width = 1;

  int pad() const noexcept { return kernel / 2; }
  int padded_height() const noexcept { return height + 2 * pad(); }
  int padded_width() const noexcept { return width + 2 * pad(); }
};

/// Reflect-pads (edge pixel not repeated) each channel by `pad` pixels.
/// Requires height, width > pad.
void reflect_pad(std::span<const double> in, int channels, int height, int width, int pad,
                 std::span<double> out);

/// Adjoint of reflect_pad: folds a padded gradient back onto the source grid.
void reflect_pad_adjoint(std::span<const double> padded, int channels, int height, int width,
                         int pad, std::span<double> out);

namespace serial {

/// out = a * b for n x n matrices.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, int n);
/// out = a * b^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, int n);
/// out = a^T * b
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, int n);

/// out[co] = bias[co] + sum_ci weights[co][ci] (*) padded_in[ci]
void conv2d_forward(const ConvShape& s, std::span<const double> padded_in,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out);

/// Gradient w.r.t. the padded input (overwritten).
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out,
                           std::span<const double> weights, std::span<double> grad_padded_in);

/// Accumulates weight and bias gradients.
void conv2d_backward_weights(const ConvShape& s, std::span<const double> grad_out,
                             std::span<const double> padded_in, std::span<double> grad_weights,
                             std::span<double> grad_bias);

}  // namespace serial

namespace omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, int n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, int n);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, int n);

void conv2d_forward(const ConvShape& s, std::span<const double> padded_in,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out);
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out,
                           std::span<const double> weights, std::span<double> grad_padded_in);
void conv2d_backward_weights(const ConvShape& s, std::span<const double> grad_out,
                             std::span<const double> padded_in, std::span<double> grad_weights,
                             std::span<double> grad_bias);

}  // namespace omp

/// Applies SHR_NUM_THREADS from the environment, if set. Returns the thread
/// count in effect.
int configure_threads_from_env();

}  // namespace shr::kernels
