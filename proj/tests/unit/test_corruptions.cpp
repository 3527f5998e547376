// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "shr/corruptions.hpp"
#include "shr/image_io.hpp"
#include "shr/rng.hpp"

namespace shr {
namespace {

Image test_image(int size = 32, std::uint64_t seed = 1) {
  CounterRng rng(seed);
  Image img(size, size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dr = r - size / 2.0;
      const double dc = c - size / 3.0;
      img(r, c) = 0.1 * rng.uniform() + 0.8 * std::exp(-(dr * dr + dc * dc) / 18.0);
    }
  }
  return img;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::abs(a.values()[i] - b.values()[i]);
  }
  return s / static_cast<double>(a.size());
}

TEST(Corrupt, BrightnessExamples) {
  EXPECT_DOUBLE_EQ(corrupt(Image(4, 4, 0.5), {CorruptionKind::brightness, 2, 0})(1, 1), 0.6);
  EXPECT_EQ(corrupt(Image(4, 4, 0.9), {CorruptionKind::brightness, 5, 0})(1, 1), 1.0);
}

TEST(Corrupt, ContrastAboutMean) {
  Image img(2, 2, std::vector<double>{0.2, 0.4, 0.6, 0.8});
  const Image out = corrupt(img, {CorruptionKind::contrast, 1, 0});
  const double f = SeverityTable::defaults().contrast_factor[0];
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_NEAR(out.values()[i], 0.5 + f * (img.values()[i] - 0.5), 1e-15);
  }
}

TEST(Corrupt, EveryKindDeterministicAndClipped) {
  const Image img = test_image();
  for (CorruptionKind kind : all_corruption_kinds()) {
    for (int sev = 1; sev <= kSeverityLevels; ++sev) {
      const PerturbationSpec spec{kind, sev, 1234};
      const Image a = corrupt(img, spec);
      const Image b = corrupt(img, spec);
      EXPECT_EQ(a, b) << to_string(kind) << " " << sev;
      EXPECT_EQ(a.height(), img.height());
      for (double v : a.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Corrupt, SeedMattersForNoise) {
  const Image img = test_image();
  EXPECT_NE(corrupt(img, {CorruptionKind::gaussian_noise, 3, 1}),
            corrupt(img, {CorruptionKind::gaussian_noise, 3, 2}));
}

TEST(Corrupt, NoiseSeverityMonotone) {
  const Image img = test_image(64, 9);
  for (CorruptionKind kind :
       {CorruptionKind::gaussian_noise, CorruptionKind::shot_noise, CorruptionKind::speckle_noise}) {
    double prev = 0.0;
    for (int sev = 1; sev <= kSeverityLevels; ++sev) {
      const double d = mean_abs_diff(img, corrupt(img, {kind, sev, 77}));
      EXPECT_GE(d, prev) << to_string(kind) << " severity " << sev;
      prev = d;
    }
  }
}

TEST(Corrupt, InvalidSpec) {
  const Image img(4, 4, 0.5);
  EXPECT_THROW(corrupt(img, {CorruptionKind::jpeg, 0, 0}), DomainError);
  EXPECT_THROW(corrupt(img, {CorruptionKind::jpeg, 6, 0}), DomainError);
  EXPECT_THROW(corrupt(img, {static_cast<CorruptionKind>(42), 1, 0}), DomainError);
  EXPECT_THROW(parse_corruption_kind("frost"), DomainError);
}

TEST(Corrupt, KindNamesRoundTrip) {
  for (CorruptionKind kind : all_corruption_kinds()) {
    EXPECT_EQ(parse_corruption_kind(to_string(kind)), kind);
  }
  EXPECT_EQ(all_corruption_kinds().size(), static_cast<std::size_t>(kCorruptionKindCount));
}

TEST(BlurKernels, NormalizedAndConstantPreserving) {
  int side = 0;
  const Image flat(16, 16, 0.37);
  for (double sigma : {0.5, 1.0, 1.5}) {
    const auto k = gaussian_kernel(sigma, side);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-14);
    const Image out = convolve_reflect(flat, k, side);
    for (double v : out.values()) {
      EXPECT_NEAR(v, 0.37, 1e-14);
    }
  }
  for (double radius : {1.0, 2.0, 3.0}) {
    const auto k = disk_kernel(radius, side);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-14);
    const Image out = convolve_reflect(flat, k, side);
    for (double v : out.values()) {
      EXPECT_NEAR(v, 0.37, 1e-14);
    }
  }
  for (int length : {3, 7, 11}) {
    const auto k = motion_kernel(length, 1.1, side);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-14);
    const Image out = convolve_reflect(flat, k, side);
    for (double v : out.values()) {
      EXPECT_NEAR(v, 0.37, 1e-14);
    }
  }
  EXPECT_THROW(gaussian_kernel(0.0, side), DomainError);
}

TEST(BlurKernels, ConstantImageSurvivesBlurKinds) {
  const Image flat(20, 20, 0.42);
  for (CorruptionKind kind : {CorruptionKind::gaussian_blur, CorruptionKind::defocus_blur,
                              CorruptionKind::motion_blur, CorruptionKind::zoom_blur}) {
    const Image out = corrupt(flat, {kind, 5, 3});
    for (double v : out.values()) {
      EXPECT_NEAR(v, 0.42, 1e-12) << to_string(kind);
    }
  }
}

TEST(PerturbationSet, CardinalityAndOrder) {
  const Image img = test_image(16);
  const std::vector<int> sev{1, 2, 3, 4, 5};
  const auto set = perturbation_set(img, default_train_kinds(), sev, 42);
  ASSERT_EQ(set.size(), 40u);
  const auto kinds = default_train_kinds();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    for (std::size_t s = 0; s < sev.size(); ++s) {
      const PerturbationSpec spec{kinds[k], sev[s], perturbation_seed(42, kinds[k], sev[s])};
      EXPECT_EQ(set[k * sev.size() + s], corrupt(img, spec));
    }
  }
  EXPECT_THROW(perturbation_set(img, {}, sev, 1), DomainError);
  EXPECT_THROW(perturbation_set(img, kinds, {}, 1), DomainError);
}

TEST(PerturbationSet, SubSeedsDistinct) {
  std::set<std::uint64_t> seeds;
  for (CorruptionKind kind : all_corruption_kinds()) {
    for (int sev = 1; sev <= 5; ++sev) {
      seeds.insert(perturbation_seed(7, kind, sev));
    }
  }
  EXPECT_EQ(seeds.size(), 55u);
}

TEST(KindSplits, DefaultsAreDisjointAndMatchProtocol) {
  const auto train = default_train_kinds();
  const auto eval = default_eval_kinds();
  const std::vector<CorruptionKind> want_train = {
      CorruptionKind::brightness,     CorruptionKind::defocus_blur, CorruptionKind::zoom_blur,
      CorruptionKind::contrast,       CorruptionKind::gaussian_noise, CorruptionKind::glass_blur,
      CorruptionKind::motion_blur,    CorruptionKind::shot_noise};
  const std::vector<CorruptionKind> want_eval = {CorruptionKind::gaussian_blur, CorruptionKind::jpeg,
                                                 CorruptionKind::speckle_noise};
  EXPECT_EQ(train, want_train);
  EXPECT_EQ(eval, want_eval);
  for (auto k : train) {
    EXPECT_EQ(std::count(eval.begin(), eval.end(), k), 0);
  }
}

TEST(SeverityTable, DefaultsMatchShippedValues) {
  const auto& t = SeverityTable::defaults();
  EXPECT_EQ(t.gaussian_noise_sigma, (SeverityTable::Row{0.04, 0.06, 0.08, 0.10, 0.14}));
  EXPECT_EQ(t.brightness_offset, (SeverityTable::Row{0.05, 0.10, 0.15, 0.20, 0.30}));
  EXPECT_EQ(t.jpeg_quality, (SeverityTable::Row{80, 65, 50, 35, 20}));
}

TEST(SeverityTable, ParseOverridesAndErrors) {
  const auto t = SeverityTable::parse("[brightness]\noffset = [0.01, 0.02, 0.03, 0.04, 0.05]\n",
                                      SeverityTable::defaults());
  EXPECT_EQ(t.brightness_offset, (SeverityTable::Row{0.01, 0.02, 0.03, 0.04, 0.05}));
  EXPECT_EQ(t.jpeg_quality, SeverityTable::defaults().jpeg_quality);
  EXPECT_THROW(SeverityTable::parse("[brightness]\noffset = [1, 2]\n", t), DomainError);
  EXPECT_THROW(SeverityTable::parse("[frost]\namount = [1, 2, 3, 4, 5]\n", t), DomainError);
  EXPECT_THROW(SeverityTable::parse("not toml ===", t), DomainError);
  SeverityTable copy = t;
  EXPECT_THROW(copy.set("jpeg", "speed", {}), DomainError);
}

TEST(Jpeg, RoundTripStaysClose) {
  const Image img = test_image(32);
  const Image hi = jpeg_roundtrip(img, 95);
  const Image lo = jpeg_roundtrip(img, 10);
  EXPECT_LT(mean_abs_diff(img, hi), 0.02);
  EXPECT_GT(mean_abs_diff(img, lo), mean_abs_diff(img, hi));
  EXPECT_THROW(jpeg_roundtrip(img, 0), DomainError);
}

}  // namespace
}  // namespace shr
