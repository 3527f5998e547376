// SPDX-License-Identifier: Apache-2.0
#include "shr/toymodel.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "shr/error.hpp"
#include "shr/losses.hpp"
#include "shr/rng.hpp"

namespace shr {

namespace {

std::uint64_t next_param_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

int in_channels_of(const ModelConfig& cfg, std::size_t layer) {
  return layer == 0 ? 1 : cfg.layers[layer - 1].out_channels;
}

std::size_t weight_count(const ModelConfig& cfg, std::size_t layer) {
  const auto& l = cfg.layers[layer];
  return static_cast<std::size_t>(l.out_channels) * in_channels_of(cfg, layer) * l.kernel *
         l.kernel;
}

template <class T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) {
    throw IoError("parameter file truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

constexpr char kMagic[8] = {'S', 'H', 'R', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  if (input_size < 2) {
    throw DomainError("model input_size must be at least 2");
  }
  if (layers.empty()) {
    throw DomainError("model needs at least one layer");
  }
  for (const auto& l : layers) {
    if (l.out_channels < 1 || l.kernel < 1 || l.kernel % 2 == 0) {
      throw DomainError("layers need positive channels and an odd kernel size");
    }
    if (l.kernel / 2 >= input_size) {
      throw DomainError("kernel too large for the input size");
    }
  }
  if (layers.back().out_channels != 1 || layers.back().relu) {
    throw DomainError("the last layer must map to one channel without relu");
  }
}

kernels::ConvShape ModelConfig::layer_shape(std::size_t layer) const {
  const auto& l = layers.at(layer);
  return {in_channels_of(*this, layer), l.out_channels, l.kernel, input_size, input_size};
}

std::string to_json(const ModelConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : cfg.layers) {
    layers.push_back({{"out_channels", l.out_channels}, {"kernel", l.kernel}, {"relu", l.relu}});
  }
  nlohmann::json j{{"input_size", cfg.input_size},
                   {"layers", layers},
                   {"rcc_head", cfg.rcc_head},
                   {"rcc_full_gradient", cfg.rcc_full_gradient},
                   {"init_seed", cfg.init_seed}};
  return j.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    cfg.input_size = j.at("input_size").get<int>();
    cfg.layers.clear();
    for (const auto& l : j.at("layers")) {
      cfg.layers.push_back(
          {l.at("out_channels").get<int>(), l.at("kernel").get<int>(), l.at("relu").get<bool>()});
    }
    cfg.rcc_head = j.at("rcc_head").get<bool>();
    cfg.rcc_full_gradient = j.value("rcc_full_gradient", false);
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("model config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Parameters::Parameters(ModelConfig cfg) : cfg_(std::move(cfg)), id_(next_param_id()) {
  cfg_.validate();
  for (std::size_t l = 0; l < cfg_.layers.size(); ++l) {
    tensors_.emplace_back(weight_count(cfg_, l), 0.0);
    tensors_.emplace_back(static_cast<std::size_t>(cfg_.layers[l].out_channels), 0.0);
  }
}

Parameters Parameters::glorot(ModelConfig cfg) {
  Parameters p(std::move(cfg));
  const CounterRng root(p.cfg_.init_seed);
  for (std::size_t l = 0; l < p.cfg_.layers.size(); ++l) {
    const auto& spec = p.cfg_.layers[l];
    const double area = static_cast<double>(spec.kernel) * spec.kernel;
    const double fan_in = in_channels_of(p.cfg_, l) * area;
    const double fan_out = spec.out_channels * area;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    CounterRng rng = root.fork({l});
    for (double& w : p.tensors_[2 * l]) {
      w = rng.uniform(-limit, limit);
    }
  }
  return p;
}

Parameters::Parameters(const Parameters& other)
    : cfg_(other.cfg_), tensors_(other.tensors_), id_(next_param_id()) {}

Parameters& Parameters::operator=(const Parameters& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    tensors_ = other.tensors_;
    ++version_;
  }
  return *this;
}

Parameters::Parameters(Parameters&& other) noexcept
    : cfg_(std::move(other.cfg_)), tensors_(std::move(other.tensors_)), id_(next_param_id()) {}

Parameters& Parameters::operator=(Parameters&& other) noexcept {
  cfg_ = std::move(other.cfg_);
  tensors_ = std::move(other.tensors_);
  ++version_;
  return *this;
}

std::span<double> Parameters::mutable_weights(std::size_t layer) {
  ++version_;
  return tensors_.at(2 * layer);
}

std::span<double> Parameters::mutable_bias(std::size_t layer) {
  ++version_;
  return tensors_.at(2 * layer + 1);
}

std::vector<std::vector<double>>& Parameters::mutable_tensors() {
  ++version_;
  return tensors_;
}

std::size_t Parameters::count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) {
    n += t.size();
  }
  return n;
}

Gradients Gradients::zeros_like(const Parameters& params) {
  Gradients g;
  for (const auto& t : params.tensors()) {
    g.tensors.emplace_back(t.size(), 0.0);
  }
  const int n = params.config().input_size;
  g.input = Image(n, n);
  return g;
}

void Gradients::add(const Gradients& other) {
  if (other.tensors.size() != tensors.size()) {
    throw ContractViolation("gradient layouts differ");
  }
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (std::size_t i = 0; i < tensors[t].size(); ++i) {
      tensors[t][i] += other.tensors[t][i];
    }
  }
  if (input.same_shape(other.input)) {
    auto dst = input.values();
    const auto src = other.input.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] += src[i];
    }
  }
}

void Gradients::scale(double factor) {
  for (auto& t : tensors) {
    for (double& v : t) {
      v *= factor;
    }
  }
  for (double& v : input.values()) {
    v *= factor;
  }
}

bool Gradients::all_finite() const {
  for (const auto& t : tensors) {
    for (double v : t) {
      if (!std::isfinite(v)) {
        return false;
      }
    }
  }
  return true;
}

ForwardCache forward(const Parameters& params, const Image& image) {
  const ModelConfig& cfg = params.config();
  if (image.height() != cfg.input_size || image.width() != cfg.input_size) {
    throw DomainError("forward: expected a " + std::to_string(cfg.input_size) + "x" +
                      std::to_string(cfg.input_size) + " image, got " +
                      std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  ForwardCache cache;
  cache.params_id = params.id();
  cache.params_version = params.version();

  std::vector<double> act(image.values().begin(), image.values().end());
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
    const auto shape = cfg.layer_shape(l);
    std::vector<double> padded(static_cast<std::size_t>(shape.in_channels) *
                               shape.padded_height() * shape.padded_width());
    kernels::reflect_pad(act, shape.in_channels, shape.height, shape.width, shape.pad(), padded);
    std::vector<double> pre(static_cast<std::size_t>(shape.out_channels) * shape.height *
                            shape.width);
    kernels::omp::conv2d_forward(shape, padded, params.weights(l), params.bias(l), pre);
    act = pre;
    if (cfg.layers[l].relu) {
      for (double& v : act) {
        v = v > 0.0 ? v : 0.0;
      }
    }
    cache.padded_inputs.push_back(std::move(padded));
    cache.pre_activations.push_back(std::move(pre));
  }
  cache.logits = Heatmap(cfg.input_size, cfg.input_size, std::move(act));
  if (cfg.rcc_head) {
    cache.probs = softmax_heatmap(cache.logits);
    cache.rcc = rcc_normalized_full(*cache.probs);
    cache.output = cache.rcc->normalized;
  } else {
    cache.output = cache.logits;
  }
  return cache;
}

Gradients backward(const Parameters& params, const ForwardCache& cache, const Heatmap& upstream) {
  if (cache.params_id != params.id() || cache.params_version != params.version()) {
    throw ContractViolation("backward: forward cache does not belong to these parameters");
  }
  const ModelConfig& cfg = params.config();
  require_same_shape(upstream, cache.output, "backward upstream");

  Heatmap g_logits = upstream;
  if (cfg.rcc_head) {
    const Heatmap g_probs =
        rcc_normalized_backward(*cache.probs, *cache.rcc, upstream, cfg.rcc_full_gradient);
    g_logits = softmax_backward(*cache.probs, g_probs);
  }

  Gradients grads = Gradients::zeros_like(params);
  std::vector<double> g_act(g_logits.values().begin(), g_logits.values().end());
  for (std::size_t l = cfg.layers.size(); l-- > 0;) {
    const auto shape = cfg.layer_shape(l);
    if (cfg.layers[l].relu) {
      const auto& pre = cache.pre_activations[l];
      for (std::size_t i = 0; i < g_act.size(); ++i) {
        g_act[i] = pre[i] > 0.0 ? g_act[i] : 0.0;
      }
    }
    kernels::omp::conv2d_backward_weights(shape, g_act, cache.padded_inputs[l],
                                          grads.tensors[2 * l], grads.tensors[2 * l + 1]);
    std::vector<double> g_padded(cache.padded_inputs[l].size());
    kernels::omp::conv2d_backward_input(shape, g_act, params.weights(l), g_padded);
    std::vector<double> g_in(static_cast<std::size_t>(shape.in_channels) * shape.height *
                             shape.width);
    kernels::reflect_pad_adjoint(g_padded, shape.in_channels, shape.height, shape.width,
                                 shape.pad(), g_in);
    g_act = std::move(g_in);
  }
  grads.input = Image(cfg.input_size, cfg.input_size, std::move(g_act));
  return grads;
}

PixelPos decode(const ForwardCache& cache) { return argmax_pos(cache.output); }

void sgd_step(Parameters& params, const Gradients& grads, double lr, MomentumState& state,
              double momentum) {
  if (!(lr > 0.0)) {
    throw DomainError("sgd_step: lr must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw DomainError("sgd_step: momentum must lie in [0, 1)");
  }
  if (grads.tensors.size() != params.tensors().size()) {
    throw ContractViolation("sgd_step: gradient layout does not match parameters");
  }
  for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
    for (std::size_t i = 0; i < grads.tensors[t].size(); ++i) {
      if (!std::isfinite(grads.tensors[t][i])) {
        throw TrainingError("sgd_step: non-finite gradient in tensor " + std::to_string(t) +
                                " at index " + std::to_string(i),
                            0);
      }
    }
  }
  if (state.velocity.empty()) {
    for (const auto& t : params.tensors()) {
      state.velocity.emplace_back(t.size(), 0.0);
    }
  }
  auto& tensors = params.mutable_tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (std::size_t i = 0; i < tensors[t].size(); ++i) {
      double& v = state.velocity[t][i];
      v = momentum * v + grads.tensors[t][i];
      tensors[t][i] -= lr * v;
    }
  }
}

void save_parameters(const std::string& path, const Parameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  const ModelConfig& cfg = params.config();
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, kFormatVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.layers.size()));
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.layers[l].out_channels));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(in_channels_of(cfg, l)));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.layers[l].kernel));
  }
  for (const auto& t : params.tensors()) {
    for (double v : t) {
      write_le<double>(out, v);
    }
  }
  if (!out) {
    throw IoError("short write to " + path);
  }
  std::ofstream sidecar(path + ".json");
  sidecar << to_json(cfg);
  if (!sidecar) {
    throw IoError("cannot write " + path + ".json");
  }
}

Parameters load_parameters(const std::string& path) {
  std::ifstream sidecar(path + ".json");
  if (!sidecar) {
    throw IoError("cannot read model config " + path + ".json");
  }
  std::stringstream text;
  text << sidecar.rdbuf();
  Parameters params(model_config_from_json(text.str()));
  const ModelConfig& cfg = params.config();

  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path);
  }
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError(path + ": not a parameter file");
  }
  if (read_le<std::uint32_t>(in) != kFormatVersion) {
    throw IoError(path + ": unsupported parameter format version");
  }
  if (read_le<std::uint32_t>(in) != cfg.layers.size()) {
    throw DomainError(path + ": layer count differs from its config sidecar");
  }
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
    const auto out_c = read_le<std::uint32_t>(in);
    const auto in_c = read_le<std::uint32_t>(in);
    const auto k = read_le<std::uint32_t>(in);
    if (static_cast<int>(out_c) != cfg.layers[l].out_channels ||
        static_cast<int>(in_c) != in_channels_of(cfg, l) ||
        static_cast<int>(k) != cfg.layers[l].kernel) {
      throw DomainError(path + ": layer " + std::to_string(l) + " shape differs from config");
    }
  }
  for (auto& t : params.mutable_tensors()) {
    for (double& v : t) {
      v = read_le<double>(in);
      if (!std::isfinite(v)) {
        throw IoError(path + ": non-finite parameter");
      }
    }
  }
  return params;
}

SampleSet synth_dataset(std::size_t count, int ambiguity_level, std::uint64_t seed, int size) {
  if (count < 1) {
    throw DomainError("synth_dataset: count must be at least 1");
  }
  if (ambiguity_level < 0 || ambiguity_level > 3) {
    throw DomainError("synth_dataset: ambiguity_level must lie in 0..3");
  }
  if (size < 2 * kKeypointBorder + 1) {
    throw DomainError("synth_dataset: image too small for the keypoint border");
  }
  SampleSet set;
  set.generator_seed = seed;
  set.ambiguity_level = ambiguity_level;
  set.samples.resize(count);
  const CounterRng root(seed);
  const auto span = static_cast<std::uint64_t>(size - 2 * kKeypointBorder);

  for (std::size_t s = 0; s < count; ++s) {
    CounterRng rng = root.fork({s});
    KeypointSample& sample = set.samples[s];
    sample.image = Image(size, size);
    for (double& v : sample.image.values()) {
      v = rng.uniform(0.0, 0.1);
    }
    auto draw_pos = [&] {
      const int r = kKeypointBorder + static_cast<int>(rng.below(span));
      const int c = kKeypointBorder + static_cast<int>(rng.below(span));
      return PixelPos{r, c};
    };
    sample.keypoint = draw_pos();
    std::vector<PixelPos> placed{sample.keypoint};
    const int limit2 = static_cast<int>(kDistractorSeparation * kDistractorSeparation);
    int attempts = 0;
    while (static_cast<int>(sample.distractors.size()) < ambiguity_level) {
      if (++attempts > kMaxPlacementAttempts) {
        throw DomainError("synth_dataset: cannot place " + std::to_string(ambiguity_level) +
                          " distractors in a " + std::to_string(size) + "x" + std::to_string(size) +
                          " image (sample " + std::to_string(s) + ")");
      }
      const PixelPos p = draw_pos();
      const bool clear = std::all_of(placed.begin(), placed.end(), [&](PixelPos q) {
        return squared_distance(p, q) >= limit2;
      });
      const double sigma = rng.uniform(1.5, 2.5);
      const double amplitude = rng.uniform(0.6, 0.95);
      if (!clear) {
        continue;
      }
      placed.push_back(p);
      sample.distractors.push_back(
          {{static_cast<double>(p.row), static_cast<double>(p.col), sigma}, amplitude});
      const Heatmap blob = gaussian_heatmap(sample.distractors.back().peak, size, size);
      auto img = sample.image.values();
      const auto bv = blob.values();
      for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] += amplitude * bv[i];
      }
    }
    const Heatmap target = gaussian_heatmap(
        {static_cast<double>(sample.keypoint.row), static_cast<double>(sample.keypoint.col), 2.0},
        size, size);
    auto img = sample.image.values();
    const auto tv = target.values();
    for (std::size_t i = 0; i < img.size(); ++i) {
      img[i] = std::clamp(img[i] + tv[i], 0.0, 1.0);
    }
  }
  return set;
}

}  // namespace shr

namespace shr {

namespace {

// Linear probe sum(u * out); its gradient with respect to out is u itself.
double probe_loss(const Heatmap& out, const Heatmap& u) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    total += u.values()[i] * out.values()[i];
  }
  return total;
}

bool near_relu_kink(const Parameters& params, const ForwardCache& cache, double margin) {
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    if (!params.config().layers[l].relu) {
      continue;
    }
    for (double v : cache.pre_activations[l]) {
      if (std::abs(v) < margin) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

double toy_grad_check(const ModelConfig& cfg, std::uint64_t seed, double step) {
  constexpr double kKinkMargin = 1e-4;
  constexpr int kMaxDraws = 1000;
  const int n = cfg.input_size;
  const CounterRng root(seed);
  for (int draw = 0; draw < kMaxDraws; ++draw) {
    CounterRng rng = root.fork({static_cast<std::uint64_t>(draw)});
    ModelConfig c = cfg;
    c.init_seed = rng.next_u64();
    Parameters params = Parameters::glorot(c);
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      for (double& b : params.mutable_bias(l)) {
        b = rng.uniform(-0.1, 0.1);
      }
    }
    Image image(n, n);
    Heatmap upstream(n, n);
    for (double& v : image.values()) {
      v = rng.uniform(0.0, 1.0);
    }
    for (double& v : upstream.values()) {
      v = rng.uniform(-1.0, 1.0);
    }
    const ForwardCache cache = forward(params, image);
    if (near_relu_kink(params, cache, kKinkMargin)) {
      continue;
    }
    const Gradients grads = backward(params, cache, upstream);

    auto loss_at = [&](const Parameters& p, const Image& x) {
      return probe_loss(forward(p, x).output, upstream);
    };
    // Softmax ignores a constant shift of the logits. With the RCC head every
    // parameter direction that only shifts the logits (the last bias, or the
    // bias of a hidden channel that is active everywhere) has a zero
    // gradient, and a relative comparison against finite-difference roundoff
    // is meaningless there. Such coordinates must be zero on both sides up to
    // roundoff instead.
    const double loss0 = probe_loss(cache.output, upstream);
    const double fd_noise = 16.0 * std::numeric_limits<double>::epsilon() *
                            std::max(1.0, std::abs(loss0)) / step;
    auto compare = [&](double analytic, double numeric) {
      if (cfg.rcc_head && std::abs(analytic) <= 1e-9 && std::abs(numeric) <= fd_noise) {
        return 0.0;
      }
      return relative_error(analytic, numeric);
    };
    double worst = 0.0;
    for (std::size_t t = 0; t < params.tensors().size(); ++t) {
      for (std::size_t i = 0; i < params.tensors()[t].size(); ++i) {
        const double keep = params.tensors()[t][i];
        params.mutable_tensors()[t][i] = keep + step;
        const double up = loss_at(params, image);
        params.mutable_tensors()[t][i] = keep - step;
        const double down = loss_at(params, image);
        params.mutable_tensors()[t][i] = keep;
        worst = std::max(worst, compare(grads.tensors[t][i], (up - down) / (2.0 * step)));
      }
    }
    Image probe = image;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double keep = probe.values()[i];
      probe.values()[i] = keep + step;
      const double up = loss_at(params, probe);
      probe.values()[i] = keep - step;
      const double down = loss_at(params, probe);
      probe.values()[i] = keep;
      worst = std::max(worst, compare(grads.input.values()[i], (up - down) / (2.0 * step)));
    }
    return worst;
  }
  throw DegenerateInputError("toy_grad_check: every draw landed near a relu kink");
}

}  // namespace shr
