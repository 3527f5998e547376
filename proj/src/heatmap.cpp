// SPDX-License-Identifier: Apache-2.0
#include "shr/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace shr {

namespace {

void require_inside(PixelPos p, int height, int width, const char* what) {
  if (p.row < 0 || p.col < 0 || p.row >= height || p.col >= width) {
    throw DomainError(std::string(what) + ": position (" + std::to_string(p.row) + ", " +
                      std::to_string(p.col) + ") outside " + std::to_string(height) + "x" +
                      std::to_string(width) + " grid");
  }
}

double keypoint_distance(DistanceMetric metric, int dr, int dc) {
  dr = std::abs(dr);
  dc = std::abs(dc);
  switch (metric) {
    case DistanceMetric::chessboard:
      return static_cast<double>(std::max(dr, dc));
    case DistanceMetric::city_block:
      return static_cast<double>(dr + dc);
    case DistanceMetric::euclidean:
      return std::sqrt(static_cast<double>(dr * dr + dc * dc));
  }
  return 0.0;
}

void require_finite(const Heatmap& hm, const char* what) {
  for (double v : hm.values()) {
    if (!std::isfinite(v)) {
      throw DomainError(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace

void HDConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("hd alpha must lie in (0, 1)");
  }
  if (t_hd < 1) {
    throw DomainError("hd threshold must be at least 1 pixel");
  }
}

DistanceMetric parse_distance_metric(const std::string& name) {
  if (name == "chessboard") return DistanceMetric::chessboard;
  if (name == "euclidean") return DistanceMetric::euclidean;
  if (name == "city_block") return DistanceMetric::city_block;
  throw DomainError("unknown distance metric '" + name + "'");
}

std::string to_string(DistanceMetric metric) {
  switch (metric) {
    case DistanceMetric::chessboard:
      return "chessboard";
    case DistanceMetric::euclidean:
      return "euclidean";
    case DistanceMetric::city_block:
      return "city_block";
  }
  return "chessboard";
}

Heatmap gaussian_heatmap(const GaussianPeak& peak, int height, int width) {
  const GaussianPeak peaks[] = {peak};
  return gaussian_sum(peaks, height, width);
}

Heatmap gaussian_sum(std::span<const GaussianPeak> peaks, int height, int width) {
  Heatmap hm(height, width);
  for (const GaussianPeak& p : peaks) {
    if (!(p.sigma > 0.0)) {
      throw DomainError("gaussian sigma must be positive");
    }
    if (p.center_row < 0.0 || p.center_col < 0.0 || p.center_row > height - 1 ||
        p.center_col > width - 1) {
      throw DomainError("gaussian center outside grid");
    }
    const double inv = 1.0 / (2.0 * p.sigma * p.sigma);
    for (int r = 0; r < height; ++r) {
      const double dr = r - p.center_row;
      for (int c = 0; c < width; ++c) {
        const double dc = c - p.center_col;
        hm(r, c) += std::exp(-(dr * dr + dc * dc) * inv);
      }
    }
  }
  return hm;
}

Heatmap hd_heatmap(PixelPos keypoint, const HDConfig& cfg, int height, int width) {
  cfg.validate();
  require_inside(keypoint, height, width, "hd_heatmap");
  Heatmap hm(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double d = keypoint_distance(cfg.metric, r - keypoint.row, c - keypoint.col);
      if (d <= cfg.t_hd) {
        hm(r, c) = std::pow(cfg.alpha, d);
      }
    }
  }
  return hm;
}

Heatmap multilabel_map(PixelPos keypoint, const HDConfig& cfg, int height, int width) {
  Heatmap hm = hd_heatmap(keypoint, cfg, height, width);
  for (double& v : hm.values()) {
    v = v > 0.0 ? 1.0 : 0.0;
  }
  return hm;
}

Heatmap softmax_heatmap(const Heatmap& logits) {
  require_finite(logits, "softmax_heatmap");
  const auto vals = logits.values();
  const double mx = *std::max_element(vals.begin(), vals.end());
  Heatmap out(logits.height(), logits.width());
  double total = 0.0;
  auto dst = out.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    dst[i] = std::exp(vals[i] - mx);
    total += dst[i];
  }
  for (double& v : dst) {
    v /= total;
  }
  return out;
}

Heatmap softmax_backward(const Heatmap& probs, const Heatmap& upstream) {
  require_same_shape(probs, upstream, "softmax_backward");
  const auto p = probs.values();
  const auto g = upstream.values();
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    dot += p[i] * g[i];
  }
  Heatmap out(probs.height(), probs.width());
  auto o = out.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    o[i] = p[i] * (g[i] - dot);
  }
  return out;
}

Heatmap log_softmax_heatmap(const Heatmap& logits) {
  require_finite(logits, "log_softmax_heatmap");
  const auto vals = logits.values();
  const double mx = *std::max_element(vals.begin(), vals.end());
  double total = 0.0;
  for (double v : vals) {
    total += std::exp(v - mx);
  }
  const double log_z = mx + std::log(total);
  Heatmap out(logits.height(), logits.width());
  auto dst = out.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    dst[i] = vals[i] - log_z;
  }
  return out;
}

PixelPos argmax_pos(const Heatmap& hm) {
  if (hm.empty()) {
    throw DomainError("argmax_pos: empty heatmap");
  }
  const auto vals = hm.values();
  // max_element returns the first maximal element, i.e. row-major first.
  const auto it = std::max_element(vals.begin(), vals.end());
  return hm.position_of(static_cast<std::size_t>(it - vals.begin()));
}

std::vector<PixelPos> topk_pos(const Heatmap& hm, int n) {
  if (n < 1 || static_cast<std::size_t>(n) > hm.size()) {
    throw DomainError("topk_pos: n=" + std::to_string(n) + " out of range for " +
                      std::to_string(hm.size()) + " pixels");
  }
  std::vector<std::size_t> order(hm.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto vals = hm.values();
  auto before = [&](std::size_t a, std::size_t b) {
    return vals[a] > vals[b] || (vals[a] == vals[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + n, order.end(), before);
  std::vector<PixelPos> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(hm.position_of(order[static_cast<std::size_t>(i)]));
  }
  return out;
}

TopTwo top_two(const Heatmap& hm) {
  if (hm.size() < 2) {
    throw DomainError("top_two: need at least 2 pixels");
  }
  TopTwo t;
  t.first_pos = argmax_pos(hm);
  t.first = hm[t.first_pos];
  t.second = -std::numeric_limits<double>::infinity();
  const auto vals = hm.values();
  const std::size_t skip =
      static_cast<std::size_t>(t.first_pos.row) * hm.width() + t.first_pos.col;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (i != skip) {
      t.second = std::max(t.second, vals[i]);
    }
  }
  return t;
}

Heatmap peak_normalized(const Heatmap& hm) {
  const double mx = hm[argmax_pos(hm)];
  if (!(mx > 0.0)) {
    throw DegenerateInputError("peak_normalized: maximum must be positive");
  }
  Heatmap out = hm;
  for (double& v : out.values()) {
    v /= mx;
  }
  return out;
}

void write_csv(std::ostream& out, const Heatmap& hm) {
  std::ostringstream line;
  line << std::setprecision(17);
  for (int r = 0; r < hm.height(); ++r) {
    line.str("");
    for (int c = 0; c < hm.width(); ++c) {
      if (c > 0) {
        line << ',';
      }
      line << hm(r, c);
    }
    out << line.str() << '\n';
  }
}

Heatmap read_csv(std::istream& in) {
  std::vector<double> values;
  int rows = 0;
  int cols = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) {
        throw IoError("heatmap csv: cannot parse '" + cell + "'");
      }
      values.push_back(v);
      ++n;
    }
    if (cols >= 0 && n != cols) {
      throw IoError("heatmap csv: ragged rows");
    }
    cols = n;
    ++rows;
  }
  if (rows == 0 || cols <= 0) {
    throw IoError("heatmap csv: empty");
  }
  return Heatmap(rows, cols, std::move(values));
}

void save_csv(const std::string& path, const Heatmap& hm) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  write_csv(out, hm);
}

Heatmap load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read " + path);
  }
  return read_csv(in);
}

}  // namespace shr
