// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "shr/harness.hpp"

namespace shr {
namespace {

RunConfig tiny_run(Pipeline pipeline) {
  RunConfig cfg;
  cfg.pipeline = pipeline;
  cfg.seed = 3;
  cfg.input_size = 40;
  cfg.layers = {{4, 3, true}, {1, 1, false}};
  cfg.dataset = {32, 2, 5, 16, 6};
  cfg.optimizer = {1e-3, 0.9, 2, 8};
  cfg.metrics.d_n_n = 16;
  cfg.hd.t_hd = 4;
  return cfg;
}

TEST(Pipelines, NamesAndToggles) {
  for (Pipeline p : {Pipeline::baseline_gaussian_l2, Pipeline::hdhr, Pipeline::hdhr_rcc,
                     Pipeline::hdhr_mst, Pipeline::hdhr_rcc_mst, Pipeline::baseline_st}) {
    EXPECT_EQ(parse_pipeline(to_string(p)), p);
  }
  EXPECT_EQ(parse_pipeline("hdhr+rcc+mst"), Pipeline::hdhr_rcc_mst);
  const auto t = toggles(Pipeline::hdhr_rcc_mst);
  EXPECT_TRUE(t.hdhr && t.rcc && t.mst && !t.st);
  const auto b = toggles(Pipeline::baseline_gaussian_l2);
  EXPECT_FALSE(b.hdhr || b.rcc || b.mst || b.st);
  EXPECT_THROW(parse_pipeline("rcc"), DomainError);
}

TEST(RunConfigParse, DefaultsAndOverrides) {
  const RunConfig cfg = parse_run_config(R"(
pipeline = "hdhr"
seed = 12
[optimizer]
lr = 0.01
[model]
hidden_channels = [4, 6]
kernel = 3
[corruptions.jpeg]
quality = [90, 80, 70, 60, 50]
)");
  EXPECT_EQ(cfg.pipeline, Pipeline::hdhr);
  EXPECT_EQ(cfg.seed, 12u);
  EXPECT_EQ(cfg.optimizer.lr, 0.01);
  EXPECT_EQ(cfg.optimizer.momentum, 0.9);
  EXPECT_EQ(cfg.dataset.count, 1024u);
  EXPECT_EQ(cfg.metrics.d_n_n, 64);
  EXPECT_EQ(cfg.lambda_mst, 1.0);
  ASSERT_EQ(cfg.layers.size(), 3u);
  EXPECT_EQ(cfg.layers[1].out_channels, 6);
  EXPECT_EQ(cfg.severity.jpeg_quality[0], 90.0);
  EXPECT_FALSE(cfg.parallel_batch);
}

TEST(RunConfigParse, Errors) {
  EXPECT_THROW(parse_run_config("colour = 3\n"), DomainError);
  EXPECT_THROW(parse_run_config("[optimizer]\nlearning_rate = 1\n"), DomainError);
  EXPECT_THROW(parse_run_config("pipeline = \"magic\"\n"), DomainError);
  EXPECT_THROW(parse_run_config("lambda_mst = -1.0\n"), DomainError);
  EXPECT_THROW(parse_run_config("[corruptions]\ntrain_kinds = [\"jpeg\"]\neval_kinds = [\"jpeg\"]\n"),
               DomainError);
  EXPECT_THROW(parse_run_config("[hd]\nalpha = 1.5\n"), DomainError);
  EXPECT_THROW(parse_run_config("seed = \"seven\"\n"), DomainError);
  EXPECT_THROW(parse_run_config("this is = = not toml"), DomainError);
  EXPECT_THROW(load_run_config("/nonexistent/config.toml"), IoError);
}

TEST(RunConfigParse, ShippedConfigsLoad) {
  for (const char* name : {"toy.toml", "smoke.toml", "acceptance/baseline.toml", "acceptance/hdhr.toml",
                           "acceptance/hdhr_rcc.toml", "acceptance/hdhr_rcc_mst.toml"}) {
    EXPECT_NO_THROW(load_run_config(std::string(SHR_CONFIG_DIR) + "/" + name)) << name;
  }
}

TEST(Digest, IgnoresOutputLocationAndThreading) {
  RunConfig a = tiny_run(Pipeline::hdhr);
  RunConfig b = a;
  b.output_dir = "elsewhere";
  b.parallel_batch = !a.parallel_batch;
  EXPECT_EQ(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 64u);
  b.seed += 1;
  EXPECT_NE(config_digest(a), config_digest(b));
  b = a;
  b.severity.jpeg_quality[2] = 51;
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Evaluate, OracleIsPerfect) {
  RunConfig cfg = tiny_run(Pipeline::baseline_gaussian_l2);
  const MetricsReport rep = evaluate_predictor(oracle_predictor(cfg), cfg);
  EXPECT_EQ(rep.ruc, 1.0);
  EXPECT_EQ(rep.pck_auc, 1.0);
  EXPECT_EQ(rep.r_mean, 0.0);
  for (const auto& [kind, r] : rep.r_per_kind) {
    EXPECT_EQ(r, 0.0) << kind;
  }
  EXPECT_EQ(rep.r_per_kind.size(), 3u);
  EXPECT_EQ(rep.samples, cfg.dataset.eval_count);
}

TEST(Evaluate, DeterministicAndChecksCompatibility) {
  RunConfig cfg = tiny_run(Pipeline::hdhr_rcc);
  const Parameters p = Parameters::glorot(cfg.model_config());
  EXPECT_EQ(to_json(evaluate(p, cfg)), to_json(evaluate(p, cfg)));

  RunConfig other = cfg;
  other.pipeline = Pipeline::hdhr;  // no RCC head
  EXPECT_THROW(evaluate(p, other), DomainError);
  other = cfg;
  other.input_size = 32;
  EXPECT_THROW(evaluate(p, other), DomainError);
}

TEST(Train, IdenticalRunsAreBitwiseEqual) {
  const RunConfig cfg = tiny_run(Pipeline::hdhr_rcc_mst);
  const TrainResult a = train_pipeline(cfg);
  const TrainResult b = train_pipeline(cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.log.batch_losses, b.log.batch_losses);
  EXPECT_EQ(a.log.epoch_losses.size(), 2u);
  EXPECT_EQ(a.log.batch_losses.size(), 8u);
}

TEST(Train, ParallelBatchMatchesSerial) {
  RunConfig cfg = tiny_run(Pipeline::hdhr_mst);
  cfg.parallel_batch = false;
  const TrainResult serial = train_pipeline(cfg);
  cfg.parallel_batch = true;
  const TrainResult parallel = train_pipeline(cfg);
  EXPECT_EQ(serial.params, parallel.params);
  EXPECT_EQ(serial.log.batch_losses, parallel.log.batch_losses);
}

TEST(Train, ZeroLambdaMatchesPipelineWithoutMst) {
  const std::pair<Pipeline, Pipeline> pairs[] = {{Pipeline::hdhr_mst, Pipeline::hdhr},
                                                 {Pipeline::hdhr_rcc_mst, Pipeline::hdhr_rcc},
                                                 {Pipeline::baseline_st, Pipeline::baseline_gaussian_l2}};
  for (const auto& [with, without] : pairs) {
    RunConfig a = tiny_run(with);
    a.lambda_mst = 0.0;
    const RunConfig b = tiny_run(without);
    EXPECT_EQ(train_pipeline(a).params, train_pipeline(b).params) << to_string(with);
  }
}

TEST(Train, PerturbationIndependentOfPipelineAndLambda) {
  RunConfig a = tiny_run(Pipeline::hdhr_mst);
  RunConfig b = tiny_run(Pipeline::baseline_st);
  b.lambda_mst = 0.25;
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (std::size_t s = 0; s < 5; ++s) {
      const auto pa = training_perturbation(a, epoch, s);
      const auto pb = training_perturbation(b, epoch, s);
      EXPECT_EQ(pa.kind, pb.kind);
      EXPECT_EQ(pa.severity, pb.severity);
      EXPECT_EQ(pa.seed, pb.seed);
      EXPECT_NE(std::find(a.train_kinds.begin(), a.train_kinds.end(), pa.kind), a.train_kinds.end());
    }
  }
  a.reuse_perturbations = true;
  EXPECT_EQ(training_perturbation(a, 0, 1).seed, training_perturbation(a, 4, 1).seed);
}

TEST(Train, BaselineLossHalvesWithinTwoHundredSteps) {
  RunConfig cfg;
  cfg.pipeline = Pipeline::baseline_gaussian_l2;
  cfg.seed = 1;
  cfg.dataset.count = 256;
  cfg.optimizer = {0.05, 0.9, 25, 32};  // 8 steps per epoch, 200 steps
  const TrainResult r = train_pipeline(cfg);
  ASSERT_EQ(r.log.batch_losses.size(), 200u);
  EXPECT_LT(r.log.batch_losses.back(), 0.5 * r.log.batch_losses.front());
}

TEST(Train, BaselineEpochLossDecreases) {
  RunConfig cfg;
  cfg.pipeline = Pipeline::baseline_gaussian_l2;
  cfg.seed = 1;
  cfg.dataset.count = 256;
  cfg.optimizer = {0.05, 0.9, 25, 32};
  const TrainResult r = train_pipeline(cfg);
  const auto& e = r.log.epoch_losses;
  for (std::size_t i = 5; i < e.size(); i += 5) {
    EXPECT_LT(e[i], e[i - 5]) << "epoch " << i;
  }
  EXPECT_LT(r.log.batch_losses.back(), 0.6 * r.log.batch_losses.front());
}

TEST(Train, DivergenceReportsBatch) {
  RunConfig cfg = tiny_run(Pipeline::baseline_gaussian_l2);
  cfg.optimizer.lr = 1e100;
  try {
    train_pipeline(cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_LT(e.batch_index(), 8u);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(OutputHeatmap, PerPipelineChoice) {
  RunConfig cfg = tiny_run(Pipeline::hdhr);
  const Parameters p = Parameters::glorot(cfg.model_config());
  const auto sample = synth_dataset(1, 1, 3, cfg.input_size).samples[0];
  const ForwardCache c = forward(p, sample.image);
  EXPECT_EQ(output_heatmap(Pipeline::baseline_gaussian_l2, c), c.output);
  EXPECT_EQ(output_heatmap(Pipeline::hdhr, c), softmax_heatmap(c.logits));

  cfg.pipeline = Pipeline::hdhr_rcc;
  const Parameters q = Parameters::glorot(cfg.model_config());
  const ForwardCache d = forward(q, sample.image);
  EXPECT_EQ(output_heatmap(Pipeline::hdhr_rcc, d), d.rcc->normalized);

  EXPECT_EQ(output_heatmap_kind(Pipeline::baseline_st), "raw");
  EXPECT_EQ(output_heatmap_kind(Pipeline::hdhr_mst), "softmax");
  EXPECT_EQ(output_heatmap_kind(Pipeline::hdhr_rcc_mst), "rcc_normalized");
}

}  // namespace
}  // namespace shr
