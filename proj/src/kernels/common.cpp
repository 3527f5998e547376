// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string>

#include <omp.h>

#include "shr/error.hpp"
#include "shr/kernels.hpp"

namespace shr::kernels {

namespace {

int reflect_index(int i, int n) {
  if (i < 0) {
    return -i;
  }
  if (i >= n) {
    return 2 * (n - 1) - i;
  }
  return i;
}

void check_pad(int height, int width, int pad) {
  if (pad < 0 || height <= pad || width <= pad) {
    throw DomainError("reflect padding of " + std::to_string(pad) + " needs a grid larger than " +
                      std::to_string(pad) + " pixels per side");
  }
}

}  // namespace

void reflect_pad(std::span<const double> in, int channels, int height, int width, int pad,
                 std::span<double> out) {
  check_pad(height, width, pad);
  const int ph = height + 2 * pad;
  const int pw = width + 2 * pad;
  for (int c = 0; c < channels; ++c) {
    const double* src = in.data() + static_cast<std::size_t>(c) * height * width;
    double* dst = out.data() + static_cast<std::size_t>(c) * ph * pw;
    for (int r = 0; r < ph; ++r) {
      const double* srow = src + static_cast<std::size_t>(reflect_index(r - pad, height)) * width;
      double* drow = dst + static_cast<std::size_t>(r) * pw;
      for (int k = 0; k < pad; ++k) {
        drow[k] = srow[reflect_index(k - pad, width)];
      }
      for (int k = 0; k < width; ++k) {
        drow[pad + k] = srow[k];
      }
      for (int k = pad + width; k < pw; ++k) {
        drow[k] = srow[reflect_index(k - pad, width)];
      }
    }
  }
}

void reflect_pad_adjoint(std::span<const double> padded, int channels, int height, int width,
                         int pad, std::span<double> out) {
  check_pad(height, width, pad);
  const int ph = height + 2 * pad;
  const int pw = width + 2 * pad;
  for (int c = 0; c < channels; ++c) {
    const double* src = padded.data() + static_cast<std::size_t>(c) * ph * pw;
    double* dst = out.data() + static_cast<std::size_t>(c) * height * width;
    for (int i = 0; i < height * width; ++i) {
      dst[i] = 0.0;
    }
    for (int r = 0; r < ph; ++r) {
      double* drow = dst + static_cast<std::size_t>(reflect_index(r - pad, height)) * width;
      const double* srow = src + static_cast<std::size_t>(r) * pw;
      for (int k = 0; k < pw; ++k) {
        drow[reflect_index(k - pad, width)] += srow[k];
      }
    }
  }
}

int configure_threads_from_env() {
  if (const char* env = std::getenv("SHR_NUM_THREADS"); env != nullptr && *env != '\0') {
    const int n = std::atoi(env);
    if (n > 0) {
      omp_set_num_threads(n);
    }
  }
  return omp_get_max_threads();
}

}  // namespace shr::kernels
