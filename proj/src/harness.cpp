// SPDX-License-Identifier: Apache-2.0
#include "shr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>
#include <toml.hpp>

#include "shr/error.hpp"
#include "shr/losses.hpp"
#include "shr/rng.hpp"

namespace shr {

namespace {

// Fork tags for the run-level random streams.
constexpr std::uint64_t kTagOrder = 1;
constexpr std::uint64_t kTagPerturb = 2;
constexpr std::uint64_t kTagEval = 3;

struct PipelineName {
  Pipeline pipeline;
  const char* name;
};

constexpr PipelineName kPipelineNames[] = {
    {Pipeline::baseline_gaussian_l2, "baseline_gaussian_l2"},
    {Pipeline::hdhr, "hdhr"},
    {Pipeline::hdhr_rcc, "hdhr+rcc"},
    {Pipeline::hdhr_mst, "hdhr+mst"},
    {Pipeline::hdhr_rcc_mst, "hdhr+rcc+mst"},
    {Pipeline::baseline_st, "baseline+st"},
};

// ---- TOML helpers --------------------------------------------------------

void check_keys(const toml::table& tbl, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, node] : tbl) {
    const std::string k(key.str());
    if (allowed.count(k) == 0U) {
      throw DomainError("config: unknown key '" + k + "' in " + where);
    }
  }
}

template <class T>
void read_value(const toml::table& tbl, const char* key, T& out, const std::string& where) {
  const toml::node* node = tbl.get(key);
  if (node == nullptr) {
    return;
  }
  std::optional<T> v;
  if constexpr (std::is_same_v<T, double>) {
    v = node->value<double>();
  } else if constexpr (std::is_same_v<T, bool>) {
    if (node->is_boolean()) {
      v = node->value<bool>();
    }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (node->is_string()) {
      v = node->value<std::string>();
    }
  } else {
    if (node->is_integer()) {
      const auto i = node->value<std::int64_t>();
      if (i && *i >= 0) {
        v = static_cast<T>(*i);
      } else if (i && std::is_signed_v<T>) {
        v = static_cast<T>(*i);
      }
    }
  }
  if (!v) {
    throw DomainError("config: bad value for '" + std::string(key) + "' in " + where);
  }
  out = *v;
}

std::vector<CorruptionKind> read_kinds(const toml::table& tbl, const char* key,
                                       std::vector<CorruptionKind> fallback) {
  const toml::node* node = tbl.get(key);
  if (node == nullptr) {
    return fallback;
  }
  const toml::array* arr = node->as_array();
  if (arr == nullptr) {
    throw DomainError("config: corruptions." + std::string(key) + " must be an array");
  }
  std::vector<CorruptionKind> out;
  for (const auto& item : *arr) {
    const auto name = item.value<std::string>();
    if (!name) {
      throw DomainError("config: corruptions." + std::string(key) + " must list kind names");
    }
    out.push_back(parse_corruption_kind(*name));
  }
  return out;
}

// ---- training ------------------------------------------------------------

struct Targets {
  Heatmap gaussian;
  Heatmap hd_weights;
  Heatmap labels;
};

Targets make_targets(const RunConfig& cfg, const PipelineToggles& t, PixelPos kp) {
  Targets out;
  const int n = cfg.input_size;
  if (t.hdhr) {
    out.hd_weights = hd_heatmap(kp, cfg.hd, n, n);
    out.labels = multilabel_map(kp, cfg.hd, n, n);
  } else {
    out.gaussian = gaussian_heatmap(
        {static_cast<double>(kp.row), static_cast<double>(kp.col), cfg.gaussian_sigma}, n, n);
  }
  return out;
}

// Supervised loss with its gradient with respect to cache.output.
LossValue supervised_loss(const PipelineToggles& t, const ForwardCache& cache,
                          const Targets& targets) {
  if (!t.hdhr) {
    return l2_gaussian_loss(cache.output, targets.gaussian);
  }
  if (t.rcc) {
    return wce_loss_scores(cache.output, targets.hd_weights, targets.labels);
  }
  return wce_loss(cache.logits, targets.hd_weights, targets.labels);
}

struct PairGrad {
  double value = 0.0;
  Heatmap clean;
  Heatmap perturbed;
};

// Stability term with gradients with respect to both caches' outputs.
PairGrad stability_loss(Pipeline p, const PipelineToggles& t, const ForwardCache& clean,
                        const ForwardCache& pert) {
  PairGrad out;
  if (t.st) {
    LossValue lv = st_loss(clean.output, pert.output);
    out.value = lv.value;
    out.clean = std::move(lv.grad_primary);
    out.perturbed = std::move(*lv.grad_secondary);
    return out;
  }
  if (t.rcc) {
    LossValue lv = mst_loss(clean.output, pert.output);
    out.value = lv.value;
    out.clean = std::move(lv.grad_primary);
    out.perturbed = std::move(*lv.grad_secondary);
    return out;
  }
  // MST on softmax probabilities; chain back to the logits.
  const Heatmap pc = output_heatmap(p, clean);
  const Heatmap pp = output_heatmap(p, pert);
  LossValue lv = mst_loss(pc, pp);
  out.value = lv.value;
  out.clean = softmax_backward(pc, lv.grad_primary);
  out.perturbed = softmax_backward(pp, *lv.grad_secondary);
  return out;
}

struct SampleStep {
  double loss = 0.0;
  Gradients grads;
};

SampleStep sample_step(const RunConfig& cfg, const PipelineToggles& t, const Parameters& params,
                       const KeypointSample& sample, int epoch, std::size_t index) {
  const Targets targets = make_targets(cfg, t, sample.keypoint);
  const ForwardCache clean = forward(params, sample.image);
  LossValue sup = supervised_loss(t, clean, targets);
  SampleStep out;
  out.loss = sup.value;

  const bool pairwise = (t.mst || t.st) && cfg.lambda_mst != 0.0;
  if (!pairwise && !cfg.supervise_perturbed) {
    out.grads = backward(params, clean, sup.grad_primary);
    return out;
  }

  const Image pert_img = corrupt(sample.image, training_perturbation(cfg, epoch, index),
                                 cfg.severity);
  const ForwardCache pert = forward(params, pert_img);
  Heatmap up_clean = std::move(sup.grad_primary);
  Heatmap up_pert(up_clean.height(), up_clean.width());
  if (pairwise) {
    const PairGrad stab = stability_loss(cfg.pipeline, t, clean, pert);
    out.loss += cfg.lambda_mst * stab.value;
    for (std::size_t i = 0; i < up_clean.size(); ++i) {
      up_clean.values()[i] += cfg.lambda_mst * stab.clean.values()[i];
      up_pert.values()[i] += cfg.lambda_mst * stab.perturbed.values()[i];
    }
  }
  if (cfg.supervise_perturbed) {
    const LossValue sp = supervised_loss(t, pert, targets);
    out.loss += sp.value;
    for (std::size_t i = 0; i < up_pert.size(); ++i) {
      up_pert.values()[i] += sp.grad_primary.values()[i];
    }
  }
  out.grads = backward(params, clean, up_clean);
  out.grads.add(backward(params, pert, up_pert));
  return out;
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace

Pipeline parse_pipeline(const std::string& name) {
  for (const auto& pn : kPipelineNames) {
    if (name == pn.name) {
      return pn.pipeline;
    }
  }
  throw DomainError("unknown pipeline '" + name + "'");
}

std::string to_string(Pipeline p) {
  for (const auto& pn : kPipelineNames) {
    if (p == pn.pipeline) {
      return pn.name;
    }
  }
  throw DomainError("unknown pipeline");
}

PipelineToggles toggles(Pipeline p) {
  switch (p) {
    case Pipeline::baseline_gaussian_l2:
      return {};
    case Pipeline::hdhr:
      return {true, false, false, false};
    case Pipeline::hdhr_rcc:
      return {true, true, false, false};
    case Pipeline::hdhr_mst:
      return {true, false, true, false};
    case Pipeline::hdhr_rcc_mst:
      return {true, true, true, false};
    case Pipeline::baseline_st:
      return {false, false, false, true};
  }
  throw DomainError("unknown pipeline");
}

void RunConfig::validate() const {
  if (dataset.count < 1 || dataset.eval_count < 1) {
    throw DomainError("config: dataset counts must be at least 1");
  }
  if (dataset.ambiguity_level < 0 || dataset.ambiguity_level > 3) {
    throw DomainError("config: ambiguity_level must lie in 0..3");
  }
  hd.validate();
  if (!(gaussian_sigma > 0.0)) {
    throw DomainError("config: gaussian_sigma must be positive");
  }
  if (!(lambda_mst >= 0.0) || !std::isfinite(lambda_mst)) {
    throw DomainError("config: lambda_mst must be a finite non-negative number");
  }
  if (!(optimizer.lr > 0.0) || !(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0) ||
      optimizer.epochs < 0 || optimizer.batch_size < 1) {
    throw DomainError("config: invalid optimizer settings");
  }
  if (train_kinds.empty() || eval_kinds.empty()) {
    throw DomainError("config: train_kinds and eval_kinds must be non-empty");
  }
  for (CorruptionKind k : train_kinds) {
    if (std::find(eval_kinds.begin(), eval_kinds.end(), k) != eval_kinds.end()) {
      throw DomainError("config: corruption kind '" + to_string(k) +
                        "' appears in both train_kinds and eval_kinds");
    }
  }
  if (metrics.p_max < 1 || metrics.t_max < 1 || metrics.d_n_n < 2 ||
      metrics.d_n_n > input_size * input_size) {
    throw DomainError("config: invalid metrics settings");
  }
  model_config().validate();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.input_size = input_size;
  m.layers = layers;
  m.rcc_head = toggles(pipeline).rcc;
  m.rcc_full_gradient = rcc_full_gradient;
  m.init_seed = seed;
  return m;
}

RunConfig parse_run_config(const std::string& toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line;
    throw DomainError(msg.str());
  }
  RunConfig cfg;
  check_keys(root,
             {"pipeline", "seed", "output_dir", "gaussian_sigma", "lambda_mst",
              "reuse_perturbations", "supervise_perturbed", "rcc_full_gradient", "parallel_batch",
              "dataset", "hd", "optimizer", "corruptions", "metrics", "model"},
             "top level");
  std::string pipeline = to_string(cfg.pipeline);
  read_value(root, "pipeline", pipeline, "top level");
  cfg.pipeline = parse_pipeline(pipeline);
  read_value(root, "seed", cfg.seed, "top level");
  read_value(root, "output_dir", cfg.output_dir, "top level");
  read_value(root, "gaussian_sigma", cfg.gaussian_sigma, "top level");
  read_value(root, "lambda_mst", cfg.lambda_mst, "top level");
  read_value(root, "reuse_perturbations", cfg.reuse_perturbations, "top level");
  read_value(root, "supervise_perturbed", cfg.supervise_perturbed, "top level");
  read_value(root, "rcc_full_gradient", cfg.rcc_full_gradient, "top level");
  read_value(root, "parallel_batch", cfg.parallel_batch, "top level");

  auto section = [&](const char* name) -> const toml::table* {
    const toml::node* node = root.get(name);
    if (node == nullptr) {
      return nullptr;
    }
    if (!node->is_table()) {
      throw DomainError("config: [" + std::string(name) + "] must be a table");
    }
    return node->as_table();
  };

  if (const auto* t = section("dataset")) {
    check_keys(*t, {"count", "ambiguity_level", "seed", "eval_count", "eval_seed"}, "[dataset]");
    read_value(*t, "count", cfg.dataset.count, "[dataset]");
    read_value(*t, "ambiguity_level", cfg.dataset.ambiguity_level, "[dataset]");
    read_value(*t, "seed", cfg.dataset.seed, "[dataset]");
    read_value(*t, "eval_count", cfg.dataset.eval_count, "[dataset]");
    read_value(*t, "eval_seed", cfg.dataset.eval_seed, "[dataset]");
  }
  if (const auto* t = section("hd")) {
    check_keys(*t, {"alpha", "t_hd", "metric"}, "[hd]");
    read_value(*t, "alpha", cfg.hd.alpha, "[hd]");
    read_value(*t, "t_hd", cfg.hd.t_hd, "[hd]");
    std::string metric = to_string(cfg.hd.metric);
    read_value(*t, "metric", metric, "[hd]");
    cfg.hd.metric = parse_distance_metric(metric);
  }
  if (const auto* t = section("optimizer")) {
    check_keys(*t, {"lr", "momentum", "epochs", "batch_size"}, "[optimizer]");
    read_value(*t, "lr", cfg.optimizer.lr, "[optimizer]");
    read_value(*t, "momentum", cfg.optimizer.momentum, "[optimizer]");
    read_value(*t, "epochs", cfg.optimizer.epochs, "[optimizer]");
    read_value(*t, "batch_size", cfg.optimizer.batch_size, "[optimizer]");
  }
  if (const auto* t = section("metrics")) {
    check_keys(*t, {"p_max", "t_max", "d_n_n"}, "[metrics]");
    read_value(*t, "p_max", cfg.metrics.p_max, "[metrics]");
    read_value(*t, "t_max", cfg.metrics.t_max, "[metrics]");
    read_value(*t, "d_n_n", cfg.metrics.d_n_n, "[metrics]");
  }
  if (const auto* t = section("model")) {
    check_keys(*t, {"input_size", "hidden_channels", "kernel"}, "[model]");
    read_value(*t, "input_size", cfg.input_size, "[model]");
    int kernel = 3;
    read_value(*t, "kernel", kernel, "[model]");
    if (const toml::node* hc = t->get("hidden_channels")) {
      const toml::array* arr = hc->as_array();
      if (arr == nullptr) {
        throw DomainError("config: model.hidden_channels must be an array of integers");
      }
      cfg.layers.clear();
      for (const auto& item : *arr) {
        const auto c = item.value<std::int64_t>();
        if (!c || *c < 1) {
          throw DomainError("config: model.hidden_channels must hold positive integers");
        }
        cfg.layers.push_back({static_cast<int>(*c), kernel, true});
      }
      cfg.layers.push_back({1, 1, false});
    } else {
      for (std::size_t l = 0; l + 1 < cfg.layers.size(); ++l) {
        cfg.layers[l].kernel = kernel;
      }
    }
  }
  if (const auto* t = section("corruptions")) {
    cfg.train_kinds = read_kinds(*t, "train_kinds", cfg.train_kinds);
    cfg.eval_kinds = read_kinds(*t, "eval_kinds", cfg.eval_kinds);
    for (const auto& [key, node] : *t) {
      const std::string k(key.str());
      if (k == "train_kinds" || k == "eval_kinds") {
        continue;
      }
      parse_corruption_kind(k);  // rejects unknown names
      const toml::table* params = node.as_table();
      if (params == nullptr) {
        throw DomainError("config: corruptions." + k + " must be a table");
      }
      for (const auto& [param, value] : *params) {
        const toml::array* arr = value.as_array();
        if (arr == nullptr || arr->size() != static_cast<std::size_t>(kSeverityLevels)) {
          throw DomainError("config: corruptions." + k + "." + std::string(param.str()) +
                            " must be an array of 5 numbers");
        }
        SeverityTable::Row row{};
        for (std::size_t i = 0; i < row.size(); ++i) {
          const auto v = (*arr)[i].value<double>();
          if (!v) {
            throw DomainError("config: corruptions." + k + " holds a non-numeric entry");
          }
          row[i] = *v;
        }
        cfg.severity.set(k, param.str(), row);
      }
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config " + path);
  }
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string canonical_json(const RunConfig& cfg) {
  using nlohmann::json;
  auto kinds = [](const std::vector<CorruptionKind>& ks) {
    json arr = json::array();
    for (CorruptionKind k : ks) {
      arr.push_back(to_string(k));
    }
    return arr;
  };
  json layers = json::array();
  for (const auto& l : cfg.layers) {
    layers.push_back({l.out_channels, l.kernel, l.relu});
  }
  const SeverityTable& s = cfg.severity;
  const json severity{
      {"gaussian_noise.sigma", s.gaussian_noise_sigma},
      {"shot_noise.photons", s.shot_noise_photons},
      {"speckle_noise.sigma", s.speckle_noise_sigma},
      {"gaussian_blur.sigma", s.gaussian_blur_sigma},
      {"defocus_blur.radius", s.defocus_blur_radius},
      {"motion_blur.length", s.motion_blur_length},
      {"zoom_blur.max_zoom", s.zoom_blur_max},
      {"zoom_blur.step", s.zoom_blur_step},
      {"glass_blur.sigma", s.glass_blur_sigma},
      {"glass_blur.max_delta", s.glass_blur_max_delta},
      {"glass_blur.iterations", s.glass_blur_iterations},
      {"brightness.offset", s.brightness_offset},
      {"contrast.factor", s.contrast_factor},
      {"jpeg.quality", s.jpeg_quality},
  };
  const json j{
      {"pipeline", to_string(cfg.pipeline)},
      {"seed", cfg.seed},
      {"dataset",
       {{"count", cfg.dataset.count},
        {"ambiguity_level", cfg.dataset.ambiguity_level},
        {"seed", cfg.dataset.seed},
        {"eval_count", cfg.dataset.eval_count},
        {"eval_seed", cfg.dataset.eval_seed}}},
      {"hd", {{"alpha", cfg.hd.alpha}, {"t_hd", cfg.hd.t_hd}, {"metric", to_string(cfg.hd.metric)}}},
      {"gaussian_sigma", cfg.gaussian_sigma},
      {"lambda_mst", cfg.lambda_mst},
      {"optimizer",
       {{"lr", cfg.optimizer.lr},
        {"momentum", cfg.optimizer.momentum},
        {"epochs", cfg.optimizer.epochs},
        {"batch_size", cfg.optimizer.batch_size}}},
      {"train_kinds", kinds(cfg.train_kinds)},
      {"eval_kinds", kinds(cfg.eval_kinds)},
      {"metrics",
       {{"p_max", cfg.metrics.p_max}, {"t_max", cfg.metrics.t_max}, {"d_n_n", cfg.metrics.d_n_n}}},
      {"model", {{"input_size", cfg.input_size}, {"layers", layers}}},
      {"severity", severity},
      {"reuse_perturbations", cfg.reuse_perturbations},
      {"supervise_perturbed", cfg.supervise_perturbed},
      {"rcc_full_gradient", cfg.rcc_full_gradient},
  };
  return j.dump();
}

std::string config_digest(const RunConfig& cfg) { return sha256_hex(canonical_json(cfg)); }

PerturbationSpec training_perturbation(const RunConfig& cfg, int epoch, std::size_t sample) {
  const std::uint64_t round = cfg.reuse_perturbations ? 0 : static_cast<std::uint64_t>(epoch);
  CounterRng rng = CounterRng(cfg.seed).fork({kTagPerturb, round, sample});
  PerturbationSpec spec;
  spec.kind = cfg.train_kinds[static_cast<std::size_t>(rng.below(cfg.train_kinds.size()))];
  spec.severity = 1 + static_cast<int>(rng.below(kSeverityLevels));
  spec.seed = rng.next_u64();
  return spec;
}

Heatmap output_heatmap(Pipeline pipeline, const ForwardCache& cache) {
  const PipelineToggles t = toggles(pipeline);
  if (t.hdhr && !t.rcc) {
    return softmax_heatmap(cache.logits);
  }
  return cache.output;
}

std::string_view output_heatmap_kind(Pipeline pipeline) {
  const PipelineToggles t = toggles(pipeline);
  if (t.rcc) {
    return "rcc_normalized";
  }
  return t.hdhr ? "softmax" : "raw";
}

TrainResult train_pipeline(const RunConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const PipelineToggles t = toggles(cfg.pipeline);
  const SampleSet data = synth_dataset(cfg.dataset.count, cfg.dataset.ambiguity_level,
                                       cfg.dataset.seed, cfg.input_size);
  TrainResult result{Parameters::glorot(cfg.model_config()), {}};
  Parameters& params = result.params;
  MomentumState momentum;

  const std::size_t n = data.samples.size();
  const auto batch = static_cast<std::size_t>(cfg.optimizer.batch_size);
  std::vector<std::size_t> order(n);
  std::size_t batch_index = 0;

  for (int epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng(cfg.seed).fork({kTagOrder, static_cast<std::uint64_t>(epoch)})
        .shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
      const std::size_t stop = std::min(n, start + batch);
      const int count = static_cast<int>(stop - start);
      std::vector<SampleStep> steps(static_cast<std::size_t>(count));
      std::vector<std::string> failures(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static) if (cfg.parallel_batch)
      for (int k = 0; k < count; ++k) {
        const std::size_t idx = order[start + static_cast<std::size_t>(k)];
        try {
          steps[static_cast<std::size_t>(k)] =
              sample_step(cfg, t, params, data.samples[idx], epoch, idx);
        } catch (const std::exception& e) {
          failures[static_cast<std::size_t>(k)] = e.what();
        }
      }
      for (const auto& f : failures) {
        if (!f.empty()) {
          throw TrainingError(f, batch_index);
        }
      }
      Gradients grads = std::move(steps[0].grads);
      double loss = steps[0].loss;
      for (std::size_t k = 1; k < steps.size(); ++k) {
        grads.add(steps[k].grads);
        loss += steps[k].loss;
      }
      loss /= count;
      grads.scale(1.0 / count);
      if (!std::isfinite(loss) || !grads.all_finite()) {
        throw TrainingError("non-finite loss or gradient",
                            batch_index);
      }
      sgd_step(params, grads, cfg.optimizer.lr, momentum, cfg.optimizer.momentum);
      result.log.batch_losses.push_back(loss);
      epoch_loss += loss * count;
    }
    epoch_loss /= static_cast<double>(n);
    result.log.epoch_losses.push_back(epoch_loss);
    if (on_epoch) {
      on_epoch(epoch, epoch_loss);
    }
  }
  return result;
}

MetricsReport evaluate_predictor(const Predictor& predict, const RunConfig& cfg,
                                 std::vector<PredictionRecord>* records_out) {
  cfg.validate();
  const SampleSet data = synth_dataset(cfg.dataset.eval_count, cfg.dataset.ambiguity_level,
                                       cfg.dataset.eval_seed, cfg.input_size);
  const std::vector<int> severities{1, 2, 3, 4, 5};
  const int n = static_cast<int>(data.samples.size());
  std::vector<PredictionRecord> records(data.samples.size());
  std::vector<Heatmap> clean(data.samples.size());
  std::vector<std::string> failures(data.samples.size());

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    try {
      const KeypointSample& sample = data.samples[s];
      PredictionRecord& rec = records[s];
      rec.sample_id = s;
      rec.gt = sample.keypoint;
      const Heatmap out = predict(sample.image, s);
      rec.clean_pred = argmax_pos(out);
      // Range-normalized so gaps are comparable across output scales.
      const auto [lo, hi] = std::minmax_element(out.values().begin(), out.values().end());
      Heatmap norm(out.height(), out.width());
      if (*hi > *lo) {
        for (std::size_t k = 0; k < norm.size(); ++k) {
          norm.values()[k] = (out.values()[k] - *lo) / (*hi - *lo);
        }
      }
      clean[s] = std::move(norm);

      const std::uint64_t sample_seed =
          CounterRng(cfg.dataset.eval_seed).fork({kTagEval, s}).next_u64();
      const auto perturbed =
          perturbation_set(sample.image, cfg.eval_kinds, severities, sample_seed, cfg.severity);
      std::size_t cell = 0;
      for (CorruptionKind kind : cfg.eval_kinds) {
        for (int sev : severities) {
          PerturbedPrediction pp;
          pp.spec = {kind, sev, perturbation_seed(sample_seed, kind, sev)};
          pp.pos = argmax_pos(predict(perturbed[cell++], s));
          rec.pert_preds.push_back(pp);
        }
      }
    } catch (const std::exception& e) {
      failures[s] = e.what();
    }
  }
  for (std::size_t s = 0; s < failures.size(); ++s) {
    if (!failures[s].empty()) {
      throw DomainError("evaluation failed on sample " + std::to_string(s) + ": " + failures[s]);
    }
  }

  MetricsReport rep = compute_metrics(records, clean, cfg.metrics);
  rep.pipeline = to_string(cfg.pipeline);
  rep.config_digest = config_digest(cfg);
  rep.seed = cfg.seed;
  if (records_out != nullptr) {
    *records_out = std::move(records);
  }
  return rep;
}

MetricsReport evaluate(const Parameters& params, const RunConfig& cfg,
                       std::vector<PredictionRecord>* records_out) {
  const ModelConfig expected = cfg.model_config();
  const ModelConfig& got = params.config();
  const bool same_layers = std::equal(
      expected.layers.begin(), expected.layers.end(), got.layers.begin(), got.layers.end(),
      [](const LayerSpec& a, const LayerSpec& b) {
        return a.out_channels == b.out_channels && a.kernel == b.kernel && a.relu == b.relu;
      });
  if (!same_layers || expected.input_size != got.input_size ||
      expected.rcc_head != got.rcc_head) {
    throw DomainError("evaluate: parameters do not match the pipeline '" +
                      to_string(cfg.pipeline) + "' in the config");
  }
  const Pipeline pipeline = cfg.pipeline;
  return evaluate_predictor(
      [&](const Image& img, std::size_t) { return output_heatmap(pipeline, forward(params, img)); },
      cfg, records_out);
}

Predictor oracle_predictor(const RunConfig& cfg) {
  const SampleSet data = synth_dataset(cfg.dataset.eval_count, cfg.dataset.ambiguity_level,
                                       cfg.dataset.eval_seed, cfg.input_size);
  std::vector<PixelPos> truth;
  for (const auto& s : data.samples) {
    truth.push_back(s.keypoint);
  }
  const double sigma = cfg.gaussian_sigma;
  const int size = cfg.input_size;
  return [truth = std::move(truth), sigma, size](const Image&, std::size_t index) {
    const PixelPos p = truth.at(index);
    return gaussian_heatmap({static_cast<double>(p.row), static_cast<double>(p.col), sigma},
                            size, size);
  };
}

}  // namespace shr
