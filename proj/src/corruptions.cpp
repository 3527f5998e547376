// SPDX-License-Identifier: Apache-2.0
#include "shr/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <toml.hpp>

#include "severity_table_default.hpp"
#include "shr/image_io.hpp"
#include "shr/kernels.hpp"
#include "shr/rng.hpp"

namespace shr {

namespace {

constexpr const char* kKindNames[kCorruptionKindCount] = {
    "gaussian_noise", "shot_noise", "speckle_noise", "gaussian_blur", "defocus_blur", "motion_blur",
    "zoom_blur",      "glass_blur", "brightness",    "contrast",      "jpeg"};

int level(const PerturbationSpec& spec) { return spec.severity - 1; }

Image gaussian_blur(const Image& img, double sigma) {
  int side = 0;
  const auto k = gaussian_kernel(sigma, side);
  return convolve_reflect(img, k, side);
}

// Bilinear sample with coordinates clamped to the grid.
double sample_bilinear(const Image& img, double r, double c) {
  r = std::clamp(r, 0.0, static_cast<double>(img.height() - 1));
  c = std::clamp(c, 0.0, static_cast<double>(img.width() - 1));
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const int r1 = std::min(r0 + 1, img.height() - 1);
  const int c1 = std::min(c0 + 1, img.width() - 1);
  const double fr = r - r0;
  const double fc = c - c0;
  return (1 - fr) * ((1 - fc) * img(r0, c0) + fc * img(r0, c1)) +
         fr * ((1 - fc) * img(r1, c0) + fc * img(r1, c1));
}

// Center crop of 1/zoom of the image rescaled back to full size.
Image zoom_center(const Image& img, double zoom) {
  Image out(img.height(), img.width());
  const double cr = (img.height() - 1) / 2.0;
  const double cc = (img.width() - 1) / 2.0;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      out(r, c) = sample_bilinear(img, cr + (r - cr) / zoom, cc + (c - cc) / zoom);
    }
  }
  return out;
}

Image zoom_blur(const Image& img, double max_zoom, double step) {
  Image acc = img;
  int count = 1;
  // Zoom factors 1, 1 + step, ... strictly below max_zoom.
  for (int i = 1;; ++i) {
    const double z = 1.0 + i * step;
    if (z >= max_zoom - 1e-12) {
      break;
    }
    const Image zoomed = zoom_center(img, z);
    auto a = acc.values();
    const auto zv = zoomed.values();
    for (std::size_t k = 0; k < a.size(); ++k) {
      a[k] += zv[k];
    }
    ++count;
  }
  for (double& v : acc.values()) {
    v /= count;
  }
  return acc;
}

// Blur, locally shuffle pixels, blur again.
Image glass_blur(const Image& img, double sigma, int max_delta, int iterations, CounterRng& rng) {
  Image x = clip_unit(gaussian_blur(img, sigma));
  const int h = x.height();
  const int w = x.width();
  const auto span = static_cast<std::uint64_t>(2 * max_delta + 1);
  for (int it = 0; it < iterations; ++it) {
    for (int r = h - max_delta - 1; r >= max_delta; --r) {
      for (int c = w - max_delta - 1; c >= max_delta; --c) {
        const int dc = static_cast<int>(rng.below(span)) - max_delta;
        const int dr = static_cast<int>(rng.below(span)) - max_delta;
        std::swap(x(r, c), x(r + dr, c + dc));
      }
    }
  }
  return gaussian_blur(x, sigma);
}

}  // namespace

void PerturbationSpec::validate() const {
  if (severity < 1 || severity > kSeverityLevels) {
    throw DomainError("severity must lie in 1..5, got " + std::to_string(severity));
  }
  const int k = static_cast<int>(kind);
  if (k < 0 || k >= kCorruptionKindCount) {
    throw DomainError("unknown corruption kind");
  }
}

CorruptionKind parse_corruption_kind(const std::string& name) {
  for (int k = 0; k < kCorruptionKindCount; ++k) {
    if (name == kKindNames[k]) {
      return static_cast<CorruptionKind>(k);
    }
  }
  throw DomainError("unknown corruption kind '" + name + "'");
}

std::string to_string(CorruptionKind kind) {
  const int k = static_cast<int>(kind);
  if (k < 0 || k >= kCorruptionKindCount) {
    throw DomainError("unknown corruption kind");
  }
  return kKindNames[k];
}

std::vector<CorruptionKind> all_corruption_kinds() {
  std::vector<CorruptionKind> out;
  for (int k = 0; k < kCorruptionKindCount; ++k) {
    out.push_back(static_cast<CorruptionKind>(k));
  }
  return out;
}

std::vector<CorruptionKind> default_train_kinds() {
  using K = CorruptionKind;
  return {K::brightness,     K::defocus_blur, K::zoom_blur,   K::contrast,
          K::gaussian_noise, K::glass_blur,   K::motion_blur, K::shot_noise};
}

std::vector<CorruptionKind> default_eval_kinds() {
  using K = CorruptionKind;
  return {K::gaussian_blur, K::jpeg, K::speckle_noise};
}

void SeverityTable::set(std::string_view kind, std::string_view param, const Row& values) {
  struct Entry {
    std::string_view kind;
    std::string_view param;
    Row SeverityTable::*row;
  };
  static constexpr Entry entries[] = {
      {"gaussian_noise", "sigma", &SeverityTable::gaussian_noise_sigma},
      {"shot_noise", "photons", &SeverityTable::shot_noise_photons},
      {"speckle_noise", "sigma", &SeverityTable::speckle_noise_sigma},
      {"gaussian_blur", "sigma", &SeverityTable::gaussian_blur_sigma},
      {"defocus_blur", "radius", &SeverityTable::defocus_blur_radius},
      {"motion_blur", "length", &SeverityTable::motion_blur_length},
      {"zoom_blur", "max_zoom", &SeverityTable::zoom_blur_max},
      {"zoom_blur", "step", &SeverityTable::zoom_blur_step},
      {"glass_blur", "sigma", &SeverityTable::glass_blur_sigma},
      {"glass_blur", "max_delta", &SeverityTable::glass_blur_max_delta},
      {"glass_blur", "iterations", &SeverityTable::glass_blur_iterations},
      {"brightness", "offset", &SeverityTable::brightness_offset},
      {"contrast", "factor", &SeverityTable::contrast_factor},
      {"jpeg", "quality", &SeverityTable::jpeg_quality},
  };
  for (const Entry& e : entries) {
    if (e.kind == kind && e.param == param) {
      this->*(e.row) = values;
      return;
    }
  }
  throw DomainError("unknown severity parameter " + std::string(kind) + "." + std::string(param));
}

SeverityTable SeverityTable::parse(std::string_view toml_text, const SeverityTable& base) {
  SeverityTable out = base;
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw DomainError(std::string("severity table: ") + std::string(e.description()));
  }
  for (const auto& [kind, node] : tbl) {
    const toml::table* params = node.as_table();
    if (params == nullptr) {
      throw DomainError("severity table: '" + std::string(kind.str()) + "' is not a table");
    }
    for (const auto& [param, value] : *params) {
      const toml::array* arr = value.as_array();
      if (arr == nullptr || arr->size() != kSeverityLevels) {
        throw DomainError("severity table: " + std::string(kind.str()) + "." +
                          std::string(param.str()) + " must be an array of 5 numbers");
      }
      Row row{};
      for (int i = 0; i < kSeverityLevels; ++i) {
        const auto v = (*arr)[static_cast<std::size_t>(i)].value<double>();
        if (!v) {
          throw DomainError("severity table: non-numeric entry in " + std::string(kind.str()));
        }
        row[static_cast<std::size_t>(i)] = *v;
      }
      out.set(kind.str(), param.str(), row);
    }
  }
  return out;
}

const SeverityTable& SeverityTable::defaults() {
  static const SeverityTable table = parse(detail::kDefaultSeverityTable, SeverityTable{});
  return table;
}

Image clip_unit(Image img) {
  for (double& v : img.values()) {
    v = std::clamp(v, 0.0, 1.0);
  }
  return img;
}

std::vector<double> gaussian_kernel(double sigma, int& side) {
  if (!(sigma > 0.0)) {
    throw DomainError("gaussian kernel sigma must be positive");
  }
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  side = 2 * radius + 1;
  std::vector<double> k(static_cast<std::size_t>(side * side));
  double total = 0.0;
  for (int r = -radius; r <= radius; ++r) {
    for (int c = -radius; c <= radius; ++c) {
      const double v = std::exp(-(r * r + c * c) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((r + radius) * side + c + radius)] = v;
      total += v;
    }
  }
  for (double& v : k) {
    v /= total;
  }
  return k;
}

std::vector<double> disk_kernel(double radius, int& side) {
  if (!(radius > 0.0)) {
    throw DomainError("disk kernel radius must be positive");
  }
  const int half = static_cast<int>(std::ceil(radius));
  side = 2 * half + 1;
  std::vector<double> k(static_cast<std::size_t>(side * side));
  double total = 0.0;
  for (int r = -half; r <= half; ++r) {
    for (int c = -half; c <= half; ++c) {
      if (r * r + c * c <= radius * radius) {
        k[static_cast<std::size_t>((r + half) * side + c + half)] = 1.0;
        total += 1.0;
      }
    }
  }
  for (double& v : k) {
    v /= total;
  }
  return k;
}

std::vector<double> motion_kernel(int length, double angle_radians, int& side) {
  if (length < 1) {
    throw DomainError("motion kernel length must be positive");
  }
  const int half = length / 2 + 1;
  side = 2 * half + 1;
  std::vector<double> k(static_cast<std::size_t>(side * side));
  // Splat evenly spaced points along the segment with bilinear weights.
  const int samples = 4 * length + 1;
  const double extent = (length - 1) / 2.0;
  const double dr = std::sin(angle_radians);
  const double dc = std::cos(angle_radians);
  for (int s = 0; s < samples; ++s) {
    const double t = samples == 1 ? 0.0 : -extent + 2.0 * extent * s / (samples - 1);
    const double r = half + t * dr;
    const double c = half + t * dc;
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0;
    const double fc = c - c0;
    auto add = [&](int rr, int cc, double w) {
      k[static_cast<std::size_t>(rr * side + cc)] += w;
    };
    add(r0, c0, (1 - fr) * (1 - fc));
    add(r0, c0 + 1, (1 - fr) * fc);
    add(r0 + 1, c0, fr * (1 - fc));
    add(r0 + 1, c0 + 1, fr * fc);
  }
  double total = 0.0;
  for (double v : k) {
    total += v;
  }
  for (double& v : k) {
    v /= total;
  }
  return k;
}

Image convolve_reflect(const Image& img, const std::vector<double>& kernel, int side) {
  if (side < 1 || side % 2 == 0 ||
      kernel.size() != static_cast<std::size_t>(side) * static_cast<std::size_t>(side)) {
    throw DomainError("convolve_reflect: kernel must be square with odd side");
  }
  kernels::ConvShape shape{1, 1, side, img.height(), img.width()};
  std::vector<double> padded(static_cast<std::size_t>(shape.padded_height()) *
                             static_cast<std::size_t>(shape.padded_width()));
  kernels::reflect_pad(img.values(), 1, img.height(), img.width(), shape.pad(), padded);
  Image out(img.height(), img.width());
  const double bias[] = {0.0};
  kernels::omp::conv2d_forward(shape, padded, kernel, bias, out.values());
  return out;
}

Image corrupt(const Image& img, const PerturbationSpec& spec, const SeverityTable& table) {
  spec.validate();
  const auto i = static_cast<std::size_t>(level(spec));
  CounterRng rng(spec.seed);
  Image out = img;
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      const double sigma = table.gaussian_noise_sigma[i];
      for (double& v : out.values()) {
        v += sigma * rng.normal();
      }
      break;
    }
    case CorruptionKind::shot_noise: {
      const double photons = table.shot_noise_photons[i];
      for (double& v : out.values()) {
        v = static_cast<double>(rng.poisson(std::max(v, 0.0) * photons)) / photons;
      }
      break;
    }
    case CorruptionKind::speckle_noise: {
      const double sigma = table.speckle_noise_sigma[i];
      for (double& v : out.values()) {
        v += v * sigma * rng.normal();
      }
      break;
    }
    case CorruptionKind::gaussian_blur:
      out = gaussian_blur(img, table.gaussian_blur_sigma[i]);
      break;
    case CorruptionKind::defocus_blur: {
      int side = 0;
      const auto k = disk_kernel(table.defocus_blur_radius[i], side);
      out = convolve_reflect(img, k, side);
      break;
    }
    case CorruptionKind::motion_blur: {
      int side = 0;
      const double angle = rng.uniform(-std::numbers::pi / 4, std::numbers::pi / 4) * 2.0;
      const auto k = motion_kernel(static_cast<int>(table.motion_blur_length[i]), angle, side);
      out = convolve_reflect(img, k, side);
      break;
    }
    case CorruptionKind::zoom_blur:
      out = zoom_blur(img, table.zoom_blur_max[i], table.zoom_blur_step[i]);
      break;
    case CorruptionKind::glass_blur:
      out = glass_blur(img, table.glass_blur_sigma[i],
                       static_cast<int>(table.glass_blur_max_delta[i]),
                       static_cast<int>(table.glass_blur_iterations[i]), rng);
      break;
    case CorruptionKind::brightness: {
      const double offset = table.brightness_offset[i];
      for (double& v : out.values()) {
        v += offset;
      }
      break;
    }
    case CorruptionKind::contrast: {
      const double factor = table.contrast_factor[i];
      double mean = 0.0;
      for (double v : img.values()) {
        mean += v;
      }
      mean /= static_cast<double>(img.size());
      for (double& v : out.values()) {
        v = (v - mean) * factor + mean;
      }
      break;
    }
    case CorruptionKind::jpeg:
      out = jpeg_roundtrip(img, static_cast<int>(table.jpeg_quality[i]));
      break;
  }
  return clip_unit(std::move(out));
}

std::uint64_t perturbation_seed(std::uint64_t seed, CorruptionKind kind, int severity) {
  return CounterRng(seed)
      .fork({static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(severity)})
      .next_u64();
}

std::vector<Image> perturbation_set(const Image& img, const std::vector<CorruptionKind>& kinds,
                                    const std::vector<int>& severities, std::uint64_t seed,
                                    const SeverityTable& table) {
  if (kinds.empty() || severities.empty()) {
    throw DomainError("perturbation_set: kinds and severities must be non-empty");
  }
  const std::size_t ns = severities.size();
  std::vector<Image> out(kinds.size() * ns);
  const int total = static_cast<int>(out.size());
#pragma omp parallel for schedule(dynamic)
  for (int cell = 0; cell < total; ++cell) {
    const CorruptionKind kind = kinds[static_cast<std::size_t>(cell) / ns];
    const int severity = severities[static_cast<std::size_t>(cell) % ns];
    out[static_cast<std::size_t>(cell)] =
        corrupt(img, {kind, severity, perturbation_seed(seed, kind, severity)}, table);
  }
  return out;
}

}  // namespace shr
