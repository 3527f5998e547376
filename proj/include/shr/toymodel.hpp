// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shr/grid.hpp"
#include "shr/heatmap.hpp"
#include "shr/kernels.hpp"
#include "shr/rcc.hpp"

namespace shr {

struct LayerSpec {
  int out_channels = 1;
  int kernel = 3;  // odd
  bool relu = true;
};

struct ModelConfig {
  int input_size = 64;
  std::vector<LayerSpec> layers = {{8, 3, true}, {8, 3, true}, {1, 1, false}};
  /// Appends softmax followed by normalized RCC after the last layer.
  bool rcc_head = false;
  /// Backpropagate through the RCC normalizer instead of treating it as a
  /// constant. Only matters for losses that are not scale invariant.
  bool rcc_full_gradient = false;
  std::uint64_t init_seed = 0;

  void validate() const;
  kernels::ConvShape layer_shape(std::size_t layer) const;
};

std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

/// Per-layer kernels ([out][in][k][k]) and biases. Each object carries an
/// identity and a version counter; mutable access bumps the version, so a
/// forward cache taken earlier can be recognised as stale.
class Parameters {
 public:
  /// All-zero parameters.
  explicit Parameters(ModelConfig cfg);
  /// Glorot-uniform kernels seeded by cfg.init_seed, zero biases.
  static Parameters glorot(ModelConfig cfg);

  Parameters(const Parameters& other);
  Parameters& operator=(const Parameters& other);
  Parameters(Parameters&& other) noexcept;
  Parameters& operator=(Parameters&& other) noexcept;
  ~Parameters() = default;

  const ModelConfig& config() const noexcept { return cfg_; }
  std::size_t layer_count() const noexcept { return cfg_.layers.size(); }

  std::span<const double> weights(std::size_t layer) const { return tensors_[2 * layer]; }
  std::span<const double> bias(std::size_t layer) const { return tensors_[2 * layer + 1]; }
  std::span<double> mutable_weights(std::size_t layer);
  std::span<double> mutable_bias(std::size_t layer);

  /// Tensors in fixed order: weights 0, bias 0, weights 1, ...
  const std::vector<std::vector<double>>& tensors() const noexcept { return tensors_; }
  std::vector<std::vector<double>>& mutable_tensors();

  std::size_t count() const noexcept;
  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t version() const noexcept { return version_; }

  bool operator==(const Parameters& other) const { return tensors_ == other.tensors_; }

 private:
  ModelConfig cfg_;
  std::vector<std::vector<double>> tensors_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

/// Gradients laid out like Parameters::tensors().
struct Gradients {
  std::vector<std::vector<double>> tensors;
  Image input;

  static Gradients zeros_like(const Parameters& params);
  void add(const Gradients& other);
  void scale(double factor);
  bool all_finite() const;
};

struct ForwardCache {
  std::uint64_t params_id = 0;
  std::uint64_t params_version = 0;
  std::vector<std::vector<double>> padded_inputs;  // per layer
  std::vector<std::vector<double>> pre_activations;  // per layer, before relu
  Heatmap logits;
  std::optional<Heatmap> probs;    // rcc head only
  std::optional<RccResult> rcc;    // rcc head only
  /// Pipeline output: logits, or the normalized RCC of softmax(logits).
  Heatmap output;
};

ForwardCache forward(const Parameters& params, const Image& image);

/// Reverse pass for an upstream gradient with respect to `cache.output`.
Gradients backward(const Parameters& params, const ForwardCache& cache, const Heatmap& upstream);

/// Decoded keypoint: argmax of the pipeline output.
PixelPos decode(const ForwardCache& cache);

struct MomentumState {
  std::vector<std::vector<double>> velocity;
};

/// v = momentum * v + g; p -= lr * v, tensor by tensor in fixed order.
void sgd_step(Parameters& params, const Gradients& grads, double lr, MomentumState& state,
              double momentum);

/// Binary layout: "SHRPARAM" magic, u32 format version, u32 layer count,
/// per layer u32 {out, in, kernel}, then weights and bias as little-endian
/// f64. The model config goes to `<path>.json`.
void save_parameters(const std::string& path, const Parameters& params);
Parameters load_parameters(const std::string& path);

/// Central finite-difference check of backward() for a randomly initialized
/// model: linear probe loss sum(u * output) with random u, every parameter and
/// every input pixel probed. Draws that put a relu input within 1e-4 of zero
/// are rejected and redrawn. With the RCC head, coordinates along the
/// softmax shift invariance (analytic |g| <= 1e-9 and a finite difference
/// within roundoff) count as agreeing. Returns the worst relative error.
double toy_grad_check(const ModelConfig& cfg, std::uint64_t seed, double step = 1e-5);

struct Blob {
  GaussianPeak peak;
  double amplitude = 1.0;
};

struct KeypointSample {
  Image image;
  PixelPos keypoint;
  std::vector<Blob> distractors;
};

struct SampleSet {
  std::vector<KeypointSample> samples;
  std::uint64_t generator_seed = 0;
  int ambiguity_level = 0;
};

inline constexpr int kKeypointBorder = 8;
inline constexpr double kDistractorSeparation = 12.0;
inline constexpr int kMaxPlacementAttempts = 10000;

/// Background noise U[0, 0.1], one target blob (sigma 2, amplitude 1) and
/// `ambiguity_level` dimmer distractor blobs, clipped to [0, 1]. Throws
/// DomainError when the image is too small to separate the blobs.
SampleSet synth_dataset(std::size_t count, int ambiguity_level, std::uint64_t seed,
                        int size = 64);

}  // namespace shr
