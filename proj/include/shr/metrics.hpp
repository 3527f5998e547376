// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "shr/corruptions.hpp"
#include "shr/grid.hpp"

namespace shr {

struct PerturbedPrediction {
  PerturbationSpec spec;
  PixelPos pos;
};

struct PredictionRecord {
  std::uint64_t sample_id = 0;
  PixelPos clean_pred;
  std::vector<PerturbedPrediction> pert_preds;
  PixelPos gt;
};

struct CurvePoint {
  int threshold = 0;
  double proportion = 0.0;
};

/// Mean squared positional drift between clean and perturbed predictions,
/// keyed by corruption kind name. Averages over samples and severities.
std::map<std::string, double> robustness_r(std::span<const PredictionRecord> records);

/// The same drift averaged over every (sample, perturbation) pair.
double robustness_r_mean(std::span<const PredictionRecord> records);

/// Fraction of (sample, perturbation) pairs whose drift is at most p pixels.
double stable_proportion(std::span<const PredictionRecord> records, int p);

struct CurveSummary {
  double area = 0.0;  // mean of the curve values
  std::vector<CurvePoint> curve;
};

/// Stable proportion at P = 0..p_max and its normalized area.
CurveSummary ruc(std::span<const PredictionRecord> records, int p_max = 20);

/// Fraction of clean predictions within t of the ground truth, t = 0..t_max.
CurveSummary pck(std::span<const PredictionRecord> records, int t_max = 10);
double pck_auc(std::span<const PredictionRecord> records, int t_max = 10);

/// Mean over heatmaps of the summed squared distance from the top-2..top-n
/// positions to the top-1 position.
double d_n(std::span<const Heatmap> heatmaps, int n = 64);

/// Mean gap between the largest and second-largest value.
double d_12(std::span<const Heatmap> heatmaps);

struct SurfaceTag {};
using LossSurface = BasicGrid<SurfaceTag>;

/// Loss evaluated on the plane through x spanned by the unit perturbation
/// direction (rows) and a seeded unit Rademacher direction (columns).
/// Entry (i, j) sits at offsets a = i - grid_half, b = j - grid_half.
LossSurface loss_surface(const std::function<double(const Image&)>& loss, const Image& x,
                         const Image& x_pert, double radius = 0.5, int grid_half = 10,
                         std::uint64_t seed = 0);

void write_surface_csv(std::ostream& out, const LossSurface& surface, double radius);

inline constexpr int kMetricsSchemaVersion = 1;

struct MetricsReport {
  int schema_version = kMetricsSchemaVersion;
  std::string pipeline;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::uint64_t samples = 0;
  std::map<std::string, double> r_per_kind;
  double r_mean = 0.0;
  double ruc = 0.0;
  std::vector<CurvePoint> ruc_curve;
  double pck_auc = 0.0;
  std::vector<CurvePoint> pck_curve;
  int d_n_n = 64;
  double d_n = 0.0;
  double d_12 = 0.0;

  void validate() const;
};

struct MetricsOptions {
  int p_max = 20;
  int t_max = 10;
  int d_n_n = 64;
};

/// Fills every metric field from records and clean output heatmaps.
MetricsReport compute_metrics(std::span<const PredictionRecord> records,
                              std::span<const Heatmap> clean_heatmaps, const MetricsOptions& opts);

std::string to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);
std::string to_json(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> records_from_json(const std::string& text);

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve,
                     const std::string& threshold_name);

/// Fixed-layout text table; identical reports render identically.
std::string render_report(const MetricsReport& report);

}  // namespace shr
