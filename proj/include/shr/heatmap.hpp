// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "shr/grid.hpp"

namespace shr {

/// Isotropic Gaussian bump. The center may be fractional; verifiers and the
/// dataset generator use integral centers.
struct GaussianPeak {
  double center_row = 0.0;
  double center_col = 0.0;
  double sigma = 1.0;
};

enum class DistanceMetric { chessboard, euclidean, city_block };

/// Highly differentiated ground truth: value alpha^d inside distance t_hd of
/// the keypoint, zero outside.
struct HDConfig {
  double alpha = 0.7;
  int t_hd = 8;
  DistanceMetric metric = DistanceMetric::chessboard;

  void validate() const;
};

DistanceMetric parse_distance_metric(const std::string& name);
std::string to_string(DistanceMetric metric);

Heatmap gaussian_heatmap(const GaussianPeak& peak, int height, int width);

/// Sum of several Gaussian bumps on one grid.
Heatmap gaussian_sum(std::span<const GaussianPeak> peaks, int height, int width);

Heatmap hd_heatmap(PixelPos keypoint, const HDConfig& cfg, int height, int width);

/// Binary mask of the support of hd_heatmap.
Heatmap multilabel_map(PixelPos keypoint, const HDConfig& cfg, int height, int width);

/// Max-shifted softmax over every pixel of the grid.
Heatmap softmax_heatmap(const Heatmap& logits);

/// Gradient w.r.t. the logits given probs = softmax(logits) and the gradient
/// w.r.t. probs.
Heatmap softmax_backward(const Heatmap& probs, const Heatmap& upstream);

/// log(softmax(logits)) computed without forming the probabilities.
Heatmap log_softmax_heatmap(const Heatmap& logits);

/// Row-major first occurrence of the maximum.
PixelPos argmax_pos(const Heatmap& hm);

/// Positions of the n largest values, descending; ties in row-major order.
std::vector<PixelPos> topk_pos(const Heatmap& hm, int n);

/// Largest value and the largest value at any other position.
struct TopTwo {
  PixelPos first_pos;
  double first = 0.0;
  double second = 0.0;
};
TopTwo top_two(const Heatmap& hm);

/// Divides by the maximum; requires a positive maximum.
Heatmap peak_normalized(const Heatmap& hm);

void write_csv(std::ostream& out, const Heatmap& hm);
Heatmap read_csv(std::istream& in);
void save_csv(const std::string& path, const Heatmap& hm);
Heatmap load_csv(const std::string& path);

}  // namespace shr
