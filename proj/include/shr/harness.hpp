// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "shr/corruptions.hpp"
#include "shr/heatmap.hpp"
#include "shr/metrics.hpp"
#include "shr/toymodel.hpp"

namespace shr {

enum class Pipeline { baseline_gaussian_l2, hdhr, hdhr_rcc, hdhr_mst, hdhr_rcc_mst, baseline_st };

/// Accepts the config spellings ("hdhr+rcc+mst", "baseline+st", ...).
Pipeline parse_pipeline(const std::string& name);
std::string to_string(Pipeline p);

struct PipelineToggles {
  bool hdhr = false;  // weighted cross-entropy against the HD heatmap
  bool rcc = false;   // softmax + normalized RCC head
  bool mst = false;   // pairwise MST term
  bool st = false;    // pairwise L2 stability term
};
PipelineToggles toggles(Pipeline p);

struct DatasetConfig {
  std::size_t count = 1024;
  int ambiguity_level = 2;
  std::uint64_t seed = 1;
  std::size_t eval_count = 256;
  std::uint64_t eval_seed = 2;
};

struct OptimizerConfig {
  double lr = 0.05;
  double momentum = 0.9;
  int epochs = 10;
  int batch_size = 16;
};

struct RunConfig {
  Pipeline pipeline = Pipeline::baseline_gaussian_l2;
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  HDConfig hd;
  double gaussian_sigma = 2.0;
  double lambda_mst = 1.0;
  OptimizerConfig optimizer;
  std::vector<CorruptionKind> train_kinds = default_train_kinds();
  std::vector<CorruptionKind> eval_kinds = default_eval_kinds();
  MetricsOptions metrics;
  std::vector<LayerSpec> layers = ModelConfig{}.layers;
  int input_size = 64;
  SeverityTable severity = SeverityTable::defaults();
  /// Draw each sample's training perturbation once instead of every epoch.
  bool reuse_perturbations = false;
  /// Also apply the supervised loss to the perturbed image.
  bool supervise_perturbed = false;
  bool rcc_full_gradient = false;
  /// Compute per-sample gradients in parallel (off by default); the reduction order is fixed,
  /// so results match the serial path bit for bit.
  bool parallel_batch = false;
  std::string output_dir = "runs/default";

  void validate() const;
  ModelConfig model_config() const;
};

/// Parses a TOML run config; unspecified keys keep their defaults. Throws
/// DomainError for unknown keys, invalid values and overlapping kind lists.
RunConfig parse_run_config(const std::string& toml_text);
RunConfig load_run_config(const std::string& path);

/// Canonical JSON rendering of every field that influences results
/// (output_dir and parallel_batch excluded).
std::string canonical_json(const RunConfig& cfg);
/// Hex SHA-256 of canonical_json(cfg).
std::string config_digest(const RunConfig& cfg);

struct TrainingLog {
  std::vector<double> batch_losses;
  std::vector<double> epoch_losses;
};

struct TrainResult {
  Parameters params;
  TrainingLog log;
};

/// Progress callback: (epoch, mean loss of that epoch).
using EpochCallback = std::function<void(int, double)>;

TrainResult train_pipeline(const RunConfig& cfg, const EpochCallback& on_epoch = {});

/// Training perturbation for one (epoch, sample); independent of the pipeline
/// and of lambda_mst.
PerturbationSpec training_perturbation(const RunConfig& cfg, int epoch, std::size_t sample);

/// Pipeline output heatmap for the loss and metric side: raw output for the
/// baseline pipelines, softmax(logits) for HDHR without RCC, and the
/// normalized RCC map with the RCC head.
Heatmap output_heatmap(Pipeline pipeline, const ForwardCache& cache);

/// Name of the map output_heatmap returns: "raw", "softmax" or "rcc_normalized".
std::string_view output_heatmap_kind(Pipeline pipeline);

/// Maps an image (and its eval sample index) to an output heatmap.
using Predictor = std::function<Heatmap(const Image&, std::size_t)>;

/// Runs the evaluation protocol with an arbitrary predictor.
MetricsReport evaluate_predictor(const Predictor& predict, const RunConfig& cfg,
                                 std::vector<PredictionRecord>* records_out = nullptr);

MetricsReport evaluate(const Parameters& params, const RunConfig& cfg,
                       std::vector<PredictionRecord>* records_out = nullptr);

/// Predictor that ignores the image and returns the ground-truth Gaussian.
Predictor oracle_predictor(const RunConfig& cfg);

struct VerificationCheck {
  std::string name;
  bool ok = false;
  std::string detail;
  /// Worst measured error for numeric checks (relative or absolute as named).
  double worst_error = 0.0;
};

/// Runs the built-in verification suite, one line per check. Returns true
/// when every check passes; `checks_out` receives the structured results.
bool run_verification_suite(std::ostream& log, std::vector<VerificationCheck>* checks_out = nullptr);

}  // namespace shr
