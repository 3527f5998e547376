// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "shr/grid.hpp"

namespace shr {

enum class CorruptionKind : int {
  gaussian_noise = 0,
  shot_noise,
  speckle_noise,
  gaussian_blur,
  defocus_blur,
  motion_blur,
  zoom_blur,
  glass_blur,
  brightness,
  contrast,
  jpeg,
};

inline constexpr int kCorruptionKindCount = 11;
inline constexpr int kSeverityLevels = 5;

CorruptionKind parse_corruption_kind(const std::string& name);
std::string to_string(CorruptionKind kind);
std::vector<CorruptionKind> all_corruption_kinds();

/// Kinds used for stability training and for held-out evaluation. The two
/// lists are disjoint.
std::vector<CorruptionKind> default_train_kinds();
std::vector<CorruptionKind> default_eval_kinds();

struct PerturbationSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;  // 1..5
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parameters indexed by severity - 1.
struct SeverityTable {
  using Row = std::array<double, kSeverityLevels>;

  Row gaussian_noise_sigma{};
  Row shot_noise_photons{};
  Row speckle_noise_sigma{};
  Row gaussian_blur_sigma{};
  Row defocus_blur_radius{};
  Row motion_blur_length{};
  Row zoom_blur_max{};
  Row zoom_blur_step{};
  Row glass_blur_sigma{};
  Row glass_blur_max_delta{};
  Row glass_blur_iterations{};
  Row brightness_offset{};
  Row contrast_factor{};
  Row jpeg_quality{};

  /// The table shipped in configs/severity_table.toml.
  static const SeverityTable& defaults();

  /// Parses a table laid out like configs/severity_table.toml; entries not
  /// present keep the values of `base`.
  static SeverityTable parse(std::string_view toml_text, const SeverityTable& base);

  /// Sets one parameter row, e.g. set("jpeg", "quality", {...}).
  void set(std::string_view kind, std::string_view param, const Row& values);
};

/// Deterministic in (img, spec, table); output clipped to [0, 1].
Image corrupt(const Image& img, const PerturbationSpec& spec,
              const SeverityTable& table = SeverityTable::defaults());

/// Sub-seed used for one (kind, severity) cell of a perturbation set.
std::uint64_t perturbation_seed(std::uint64_t seed, CorruptionKind kind, int severity);

/// One corrupted image per (kind, severity) pair, kinds outermost.
std::vector<Image> perturbation_set(const Image& img, const std::vector<CorruptionKind>& kinds,
                                    const std::vector<int>& severities, std::uint64_t seed,
                                    const SeverityTable& table = SeverityTable::defaults());

/// Convolves with a normalized square kernel (odd side) using reflect padding.
/// No clipping is applied.
Image convolve_reflect(const Image& img, const std::vector<double>& kernel, int side);

std::vector<double> gaussian_kernel(double sigma, int& side);
std::vector<double> disk_kernel(double radius, int& side);
std::vector<double> motion_kernel(int length, double angle_radians, int& side);

Image clip_unit(Image img);

}  // namespace shr
