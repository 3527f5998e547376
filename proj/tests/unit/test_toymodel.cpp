// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "shr/rng.hpp"
#include "shr/toymodel.hpp"

namespace shr {
namespace {

namespace fs = std::filesystem;

Image random_image(int size, std::uint64_t seed) {
  CounterRng rng(seed);
  Image img(size, size);
  for (double& v : img.values()) {
    v = rng.uniform();
  }
  return img;
}

Heatmap random_upstream(int size, std::uint64_t seed) {
  CounterRng rng(seed);
  Heatmap h(size, size);
  for (double& v : h.values()) {
    v = rng.uniform(-1.0, 1.0);
  }
  return h;
}

ModelConfig small_config(bool rcc = false) {
  ModelConfig cfg;
  cfg.input_size = 12;
  cfg.layers = {{3, 3, true}, {1, 1, false}};
  cfg.rcc_head = rcc;
  cfg.init_seed = 5;
  return cfg;
}

TEST(ModelConfig, Validation) {
  ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.layers.back().relu = true;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = ModelConfig{};
  cfg.layers.back().out_channels = 2;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = ModelConfig{};
  cfg.layers.front().kernel = 4;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = ModelConfig{};
  cfg.layers.clear();
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(ModelConfig, JsonRoundTrip) {
  ModelConfig cfg = small_config(true);
  cfg.rcc_full_gradient = true;
  const ModelConfig back = model_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_TRUE(back.rcc_head);
  EXPECT_EQ(back.layers.size(), 2u);
}

TEST(Forward, ZeroParametersGiveZeroLogits) {
  const Parameters zero(ModelConfig{});
  const ForwardCache c = forward(zero, random_image(64, 1));
  EXPECT_EQ(c.logits.height(), 64);
  EXPECT_EQ(c.logits.width(), 64);
  for (double v : c.logits.values()) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, ShapeMismatchRejected) {
  const Parameters p = Parameters::glorot(small_config());
  EXPECT_THROW(forward(p, random_image(13, 1)), DomainError);
}

TEST(Forward, DeterministicAndDecodesRccOutput) {
  const Parameters p = Parameters::glorot(small_config(true));
  const Image img = random_image(12, 4);
  const ForwardCache a = forward(p, img);
  const ForwardCache b = forward(p, img);
  EXPECT_EQ(a.output, b.output);
  ASSERT_TRUE(a.rcc.has_value());
  EXPECT_EQ(a.output, a.rcc->normalized);
  EXPECT_EQ(decode(a), argmax_pos(a.rcc->normalized));

  const Parameters plain = Parameters::glorot(small_config(false));
  const ForwardCache c = forward(plain, img);
  EXPECT_EQ(c.output, c.logits);
  EXPECT_EQ(decode(c), argmax_pos(c.logits));
}

// A single 3x3 convolution with identity kernel and bias b reproduces the
// image plus b, independently of the padding mode.
TEST(Forward, IdentityKernel) {
  ModelConfig cfg;
  cfg.input_size = 6;
  cfg.layers = {{1, 3, false}};
  Parameters p(cfg);
  p.mutable_weights(0)[4] = 1.0;
  p.mutable_bias(0)[0] = 0.25;
  const Image img = random_image(6, 8);
  const ForwardCache c = forward(p, img);
  for (int r = 0; r < 6; ++r) {
    for (int col = 0; col < 6; ++col) {
      EXPECT_DOUBLE_EQ(c.logits(r, col), img(r, col) + 0.25);
    }
  }
}

TEST(Forward, ReflectPaddingAtBorder) {
  ModelConfig cfg;
  cfg.input_size = 4;
  cfg.layers = {{1, 3, false}};
  Parameters p(cfg);
  p.mutable_weights(0)[3] = 1.0;  // picks the left neighbour
  Image img(4, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      img(r, c) = 10 * r + c;
    }
  }
  const ForwardCache out = forward(p, img);
  // Column -1 reflects onto column 1.
  EXPECT_EQ(out.logits(2, 0), img(2, 1));
  EXPECT_EQ(out.logits(2, 3), img(2, 2));
}

TEST(Backward, ZeroUpstreamAndLinearity) {
  for (bool rcc : {false, true}) {
    const Parameters p = Parameters::glorot(small_config(rcc));
    const ForwardCache c = forward(p, random_image(12, 2));
    const Gradients zero = backward(p, c, Heatmap(12, 12, 0.0));
    for (const auto& t : zero.tensors) {
      for (double v : t) {
        EXPECT_EQ(v, 0.0);
      }
    }
    const Heatmap up = random_upstream(12, 3);
    Heatmap up2 = up;
    for (double& v : up2.values()) {
      v *= 2.0;
    }
    const Gradients g1 = backward(p, c, up);
    const Gradients g2 = backward(p, c, up2);
    for (std::size_t t = 0; t < g1.tensors.size(); ++t) {
      for (std::size_t i = 0; i < g1.tensors[t].size(); ++i) {
        EXPECT_NEAR(g2.tensors[t][i], 2.0 * g1.tensors[t][i], 1e-12 * (1.0 + std::abs(g1.tensors[t][i])));
      }
    }
  }
}

TEST(Backward, StaleCacheRejected) {
  Parameters p = Parameters::glorot(small_config());
  const ForwardCache c = forward(p, random_image(12, 2));
  p.mutable_bias(0)[0] += 1.0;
  EXPECT_THROW(backward(p, c, Heatmap(12, 12, 1.0)), ContractViolation);
  const Parameters other = Parameters::glorot(small_config());
  EXPECT_THROW(backward(other, forward(p, random_image(12, 2)), Heatmap(12, 12, 1.0)),
               ContractViolation);
}

TEST(GradCheck, TinyConvAndFullPipeline) {
  ModelConfig tiny;
  tiny.input_size = 8;
  tiny.layers = {{1, 3, false}};
  ModelConfig full;
  full.input_size = 8;
  full.layers = {{2, 3, true}, {1, 1, false}};
  full.rcc_head = true;
  full.rcc_full_gradient = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_LT(toy_grad_check(tiny, seed), 1e-5);
    EXPECT_LT(toy_grad_check(full, seed), 1e-5);
  }
  ModelConfig deep;
  deep.input_size = 8;
  deep.layers = {{3, 3, true}, {2, 3, true}, {1, 1, false}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(toy_grad_check(deep, seed), 1e-5);
  }
}

TEST(Sgd, Examples) {
  ModelConfig cfg = small_config();
  Parameters p = Parameters::glorot(cfg);
  const Parameters before = p;
  Gradients g = Gradients::zeros_like(p);
  MomentumState state;
  sgd_step(p, g, 0.1, state, 0.0);
  EXPECT_EQ(p, before);

  for (auto& t : g.tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = 0.5 - static_cast<double>(i % 3);
    }
  }
  MomentumState fresh;
  sgd_step(p, g, 0.1, fresh, 0.0);
  for (std::size_t t = 0; t < p.tensors().size(); ++t) {
    for (std::size_t i = 0; i < p.tensors()[t].size(); ++i) {
      EXPECT_DOUBLE_EQ(p.tensors()[t][i], before.tensors()[t][i] - 0.1 * g.tensors[t][i]);
    }
  }
}

TEST(Sgd, MomentumAccumulates) {
  Parameters p(small_config());
  Gradients g = Gradients::zeros_like(p);
  g.tensors[1][0] = 1.0;
  MomentumState st;
  sgd_step(p, g, 1.0, st, 0.5);
  sgd_step(p, g, 1.0, st, 0.5);
  // v1 = 1, v2 = 1.5; p = -(1 + 1.5)
  EXPECT_DOUBLE_EQ(p.bias(0)[0], -2.5);
}

TEST(Sgd, NonFiniteGradientRejected) {
  Parameters p(small_config());
  Gradients g = Gradients::zeros_like(p);
  g.tensors[0][0] = std::nan("");
  MomentumState st;
  EXPECT_THROW(sgd_step(p, g, 0.1, st, 0.9), TrainingError);
  EXPECT_THROW(sgd_step(p, Gradients::zeros_like(p), 0.0, st, 0.9), DomainError);
  EXPECT_THROW(sgd_step(p, Gradients::zeros_like(p), 0.1, st, 1.0), DomainError);
}

TEST(Parameters, GlorotSeededAndBounded) {
  ModelConfig cfg;
  cfg.init_seed = 3;
  const Parameters a = Parameters::glorot(cfg);
  const Parameters b = Parameters::glorot(cfg);
  EXPECT_EQ(a, b);
  cfg.init_seed = 4;
  EXPECT_FALSE(Parameters::glorot(cfg) == a);
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    const auto s = cfg.layer_shape(l);
    const double fan_in = s.in_channels * s.kernel * s.kernel;
    const double fan_out = s.out_channels * s.kernel * s.kernel;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double w : a.weights(l)) {
      EXPECT_LE(std::abs(w), bound);
    }
    for (double v : a.bias(l)) {
      EXPECT_EQ(v, 0.0);
    }
  }
  // 1*8*9+8 + 8*8*9+8 + 8*1+1
  EXPECT_EQ(a.count(), 80u + 584u + 9u);
}

TEST(Parameters, SaveLoadRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "shr_toymodel_test";
  fs::create_directories(dir);
  const std::string path = (dir / "params.bin").string();
  ModelConfig cfg = small_config(true);
  const Parameters p = Parameters::glorot(cfg);
  save_parameters(path, p);
  const Parameters q = load_parameters(path);
  EXPECT_EQ(p, q);
  EXPECT_EQ(to_json(q.config()), to_json(cfg));

  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "SHRPARAM");

  {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "NOTPARAMS";
  }
  EXPECT_THROW(load_parameters(path), IoError);
  EXPECT_THROW(load_parameters((dir / "missing.bin").string()), IoError);
  fs::remove_all(dir);
}

TEST(Dataset, DeterministicAndInvariants) {
  const SampleSet a = synth_dataset(64, 3, 17);
  const SampleSet b = synth_dataset(64, 3, 17);
  ASSERT_EQ(a.samples.size(), 64u);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].image, b.samples[i].image);
    const auto& s = a.samples[i];
    EXPECT_GE(s.keypoint.row, kKeypointBorder);
    EXPECT_GE(s.keypoint.col, kKeypointBorder);
    EXPECT_LT(s.keypoint.row, 64 - kKeypointBorder);
    EXPECT_LT(s.keypoint.col, 64 - kKeypointBorder);
    EXPECT_EQ(s.distractors.size(), 3u);
    for (const auto& d : s.distractors) {
      EXPECT_LE(d.amplitude, 0.95);
      EXPECT_GE(d.amplitude, 0.6);
      EXPECT_LT(d.amplitude, 1.0);
      EXPECT_GE(d.peak.sigma, 1.5);
      EXPECT_LE(d.peak.sigma, 2.5);
      EXPECT_GE(std::hypot(d.peak.center_row - s.keypoint.row, d.peak.center_col - s.keypoint.col),
                kDistractorSeparation);
    }
    for (double v : s.image.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_NE(synth_dataset(4, 2, 18).samples[0].image, a.samples[0].image);
  EXPECT_THROW(synth_dataset(0, 1, 1), DomainError);
  EXPECT_THROW(synth_dataset(4, 4, 1), DomainError);
  // Every position in a 20x20 image lies within the separation distance of the keypoint.
  EXPECT_THROW(synth_dataset(4, 1, 1, 20), DomainError);
}

TEST(Dataset, SingleBlobArgmaxNearLabel) {
  const SampleSet set = synth_dataset(1000, 0, 23);
  for (const auto& s : set.samples) {
    ASSERT_TRUE(s.distractors.empty());
    const PixelPos p = argmax_pos(Heatmap(s.image.height(), s.image.width(),
                                          std::vector<double>(s.image.values().begin(),
                                                              s.image.values().end())));
    EXPECT_LE(std::abs(p.row - s.keypoint.row), 1);
    EXPECT_LE(std::abs(p.col - s.keypoint.col), 1);
  }
}

}  // namespace
}  // namespace shr
