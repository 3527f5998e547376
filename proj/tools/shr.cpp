// SPDX-License-Identifier: Apache-2.0
//
// shr: command-line front end for data generation, corruption, training,
// evaluation, verification and reporting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "shr/corruptions.hpp"
#include "shr/error.hpp"
#include "shr/harness.hpp"
#include "shr/image_io.hpp"
#include "shr/kernels.hpp"
#include "shr/losses.hpp"
#include "shr/metrics.hpp"
#include "shr/toymodel.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Usage problems discovered after flag parsing (bad config values, etc.).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunOverrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> pipeline;
};

void add_run_flags(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("--config", o.config, "Run config (TOML)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the run seed");
  cmd->add_option("--out", o.out, "Override the output directory");
  cmd->add_option("--pipeline", o.pipeline, "Override the pipeline");
}

shr::RunConfig resolve_config(const RunOverrides& o) {
  try {
    shr::RunConfig cfg = shr::load_run_config(o.config);
    if (o.seed) {
      cfg.seed = *o.seed;
    }
    if (o.out) {
      cfg.output_dir = *o.out;
    }
    if (o.pipeline) {
      cfg.pipeline = shr::parse_pipeline(*o.pipeline);
    }
    cfg.validate();
    return cfg;
  } catch (const shr::DomainError& e) {
    throw UsageError(e.what());
  } catch (const shr::IoError& e) {
    throw UsageError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) {
    throw shr::IoError("cannot write " + path.string());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw shr::IoError("cannot read " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

shr::Image read_image(const fs::path& path) {
  const auto ext = path.extension().string();
  return ext == ".png" ? shr::read_png(path.string()) : shr::read_pgm(path.string());
}

// ---- subcommands ----------------------------------------------------------

struct GenDataArgs {
  std::optional<std::string> config;
  std::size_t count = 16;
  int ambiguity = 2;
  std::uint64_t seed = 1;
  std::string out = "data";
  bool png = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  std::size_t count = a.count;
  int ambiguity = a.ambiguity;
  std::uint64_t seed = a.seed;
  if (a.config) {
    const auto cfg = resolve_config({*a.config, {}, {}, {}});
    count = cfg.dataset.count;
    ambiguity = cfg.dataset.ambiguity_level;
    seed = cfg.dataset.seed;
  }
  const auto set = shr::synth_dataset(count, ambiguity, seed);
  fs::create_directories(a.out);
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.%s", i, a.png ? "png" : "pgm");
    const fs::path path = fs::path(a.out) / name;
    if (a.png) {
      shr::write_png16(path.string(), s.image);
    } else {
      shr::write_pgm(path.string(), s.image);
    }
    nlohmann::json distractors = nlohmann::json::array();
    for (const auto& d : s.distractors) {
      distractors.push_back({{"center", {d.peak.center_row, d.peak.center_col}},
                             {"sigma", d.peak.sigma},
                             {"amplitude", d.amplitude}});
    }
    samples.push_back(
        {{"file", name}, {"keypoint", {s.keypoint.row, s.keypoint.col}}, {"distractors", distractors}});
  }
  const nlohmann::json manifest{{"generator_seed", seed},
                                {"ambiguity_level", ambiguity},
                                {"count", count},
                                {"samples", samples}};
  write_text(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << count << " samples to " << a.out << "\n";
  return kExitOk;
}

struct CorruptArgs {
  std::vector<std::string> inputs;
  std::string kind;
  int severity = 3;
  std::uint64_t seed = 0;
  std::string out = "corrupted";
};

int cmd_corrupt(const CorruptArgs& a) {
  shr::PerturbationSpec spec;
  try {
    spec.kind = shr::parse_corruption_kind(a.kind);
    spec.severity = a.severity;
    spec.validate();
  } catch (const shr::DomainError& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(a.out);
  for (const auto& input : a.inputs) {
    const fs::path in(input);
    spec.seed = shr::perturbation_seed(a.seed, spec.kind, spec.severity);
    const auto img = shr::corrupt(read_image(in), spec);
    const fs::path dst = fs::path(a.out) / (in.stem().string() + "_" + a.kind + "_s" +
                                            std::to_string(a.severity) + in.extension().string());
    if (in.extension() == ".png") {
      shr::write_png16(dst.string(), img);
    } else {
      shr::write_pgm(dst.string(), img);
    }
    std::cout << dst.string() << "\n";
  }
  return kExitOk;
}

int cmd_train(const RunOverrides& o) {
  const auto cfg = resolve_config(o);
  fs::create_directories(cfg.output_dir);
  const std::string digest = shr::config_digest(cfg);
  std::cerr << "pipeline " << shr::to_string(cfg.pipeline) << ", digest " << digest.substr(0, 12)
            << "\n";
  const auto result = shr::train_pipeline(cfg, [](int epoch, double loss) {
    std::cerr << "epoch " << epoch + 1 << "  loss " << loss << "\n";
  });
  const fs::path dir(cfg.output_dir);
  shr::save_parameters((dir / "params.bin").string(), result.params);
  const nlohmann::json log{{"config_digest", digest},
                           {"pipeline", shr::to_string(cfg.pipeline)},
                           {"output_heatmap", shr::output_heatmap_kind(cfg.pipeline)},
                           {"epoch_losses", result.log.epoch_losses},
                           {"batch_losses", result.log.batch_losses}};
  write_text(dir / "train_log.json", log.dump(2) + "\n");
  write_text(dir / "config.json", shr::canonical_json(cfg) + "\n");
  std::cout << (dir / "params.bin").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunOverrides& o, const std::optional<std::string>& params_path) {
  const auto cfg = resolve_config(o);
  const fs::path dir(cfg.output_dir);
  const fs::path ppath = params_path ? fs::path(*params_path) : dir / "params.bin";
  shr::Parameters params = shr::load_parameters(ppath.string());
  std::vector<shr::PredictionRecord> records;
  shr::MetricsReport rep;
  try {
    rep = shr::evaluate(params, cfg, &records);
  } catch (const shr::DomainError& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(dir);
  write_text(dir / "metrics.json", shr::to_json(rep));
  write_text(dir / "records.json", shr::to_json(records));
  std::ofstream ruc_csv(dir / "ruc.csv");
  shr::write_curve_csv(ruc_csv, rep.ruc_curve, "P");
  std::ofstream pck_csv(dir / "pck.csv");
  shr::write_curve_csv(pck_csv, rep.pck_curve, "t");
  std::cout << shr::render_report(rep);
  return kExitOk;
}

int cmd_verify(const std::optional<std::string>& json_path) {
  std::vector<shr::VerificationCheck> checks;
  const bool ok = shr::run_verification_suite(std::cout, &checks);
  if (json_path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
      arr.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}, {"worst_error", c.worst_error}});
    }
    std::ofstream out(*json_path);
    if (!out) {
      throw shr::IoError("cannot write " + *json_path);
    }
    out << arr.dump(2) << '\n';
  }
  return ok ? kExitOk : kExitFailure;
}

struct SurfaceArgs {
  RunOverrides run;
  std::optional<std::string> params;
  std::size_t sample = 0;
  std::string kind = "gaussian_blur";
  int severity = 3;
  double radius = 0.5;
  int grid_half = 10;
  std::uint64_t direction_seed = 0;
  std::optional<std::string> csv;
};

int cmd_loss_surface(const SurfaceArgs& a) {
  const auto cfg = resolve_config(a.run);
  const fs::path dir(cfg.output_dir);
  const fs::path ppath = a.params ? fs::path(*a.params) : dir / "params.bin";
  const shr::Parameters params = shr::load_parameters(ppath.string());
  const auto data = shr::synth_dataset(cfg.dataset.eval_count, cfg.dataset.ambiguity_level,
                                       cfg.dataset.eval_seed, cfg.input_size);
  if (a.sample >= data.samples.size()) {
    throw UsageError("--sample must be below the eval count");
  }
  shr::PerturbationSpec spec;
  try {
    spec.kind = shr::parse_corruption_kind(a.kind);
    spec.severity = a.severity;
    spec.validate();
  } catch (const shr::DomainError& e) {
    throw UsageError(e.what());
  }
  const auto& sample = data.samples[a.sample];
  spec.seed = shr::perturbation_seed(cfg.seed, spec.kind, spec.severity);
  const shr::Image pert = shr::corrupt(sample.image, spec, cfg.severity);
  const auto t = shr::toggles(cfg.pipeline);
  const int n = cfg.input_size;
  const shr::Heatmap w = shr::hd_heatmap(sample.keypoint, cfg.hd, n, n);
  const shr::Heatmap y = shr::multilabel_map(sample.keypoint, cfg.hd, n, n);
  const shr::Heatmap g = shr::gaussian_heatmap(
      {static_cast<double>(sample.keypoint.row), static_cast<double>(sample.keypoint.col),
       cfg.gaussian_sigma},
      n, n);
  auto loss = [&](const shr::Image& img) {
    const auto cache = shr::forward(params, img);
    if (!t.hdhr) {
      return shr::l2_gaussian_loss(cache.output, g).value;
    }
    if (t.rcc) {
      return shr::wce_loss_scores(cache.output, w, y).value;
    }
    return shr::wce_loss(cache.logits, w, y).value;
  };
  const auto surface =
      shr::loss_surface(loss, sample.image, pert, a.radius, a.grid_half, a.direction_seed);
  const fs::path out = a.csv ? fs::path(*a.csv) : dir / "loss_surface.csv";
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  std::ofstream csv(out);
  shr::write_surface_csv(csv, surface, a.radius);
  std::cout << out.string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& metrics_path, const std::optional<std::string>& csv_dir) {
  shr::MetricsReport rep;
  try {
    rep = shr::metrics_from_json(read_text(metrics_path));
  } catch (const shr::DomainError& e) {
    throw UsageError(e.what());
  }
  std::cout << shr::render_report(rep);
  if (csv_dir) {
    fs::create_directories(*csv_dir);
    std::ofstream ruc_csv(fs::path(*csv_dir) / "ruc.csv");
    shr::write_curve_csv(ruc_csv, rep.ruc_curve, "P");
    std::ofstream pck_csv(fs::path(*csv_dir) / "pck.csv");
    shr::write_curve_csv(pck_csv, rep.pck_curve, "t");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  shr::kernels::configure_threads_from_env();

  CLI::App app{"Stable heatmap regression toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic keypoint images");
  gen_cmd->add_option("--config", gen.config, "Take dataset settings from a run config")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--count", gen.count, "Number of samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--ambiguity", gen.ambiguity, "Distractor blobs per image")
      ->check(CLI::Range(0, 3));
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Output directory");
  gen_cmd->add_flag("--png", gen.png, "Write 16-bit PNG instead of PGM");

  CorruptArgs cor;
  auto* cor_cmd = app.add_subcommand("corrupt", "Apply one corruption to image files");
  cor_cmd->add_option("inputs", cor.inputs, "PGM or PNG files")->required()->check(CLI::ExistingFile);
  cor_cmd->add_option("--kind", cor.kind, "Corruption kind")->required();
  cor_cmd->add_option("--severity", cor.severity, "Severity 1..5")->check(CLI::Range(1, 5));
  cor_cmd->add_option("--seed", cor.seed, "Perturbation seed");
  cor_cmd->add_option("--out", cor.out, "Output directory");

  RunOverrides train;
  auto* train_cmd = app.add_subcommand("train", "Train a pipeline");
  add_run_flags(train_cmd, train);

  RunOverrides eval;
  std::optional<std::string> eval_params;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate trained parameters");
  add_run_flags(eval_cmd, eval);
  eval_cmd->add_option("--params", eval_params, "Parameter file (default <out>/params.bin)");

  std::optional<std::string> verify_json;
  auto* verify_cmd = app.add_subcommand("verify", "Run the identity, certificate and gradient checks");
  verify_cmd->add_option("--json", verify_json, "Also write the check results as JSON");

  SurfaceArgs surf;
  auto* surf_cmd = app.add_subcommand("loss-surface", "Probe the loss around one eval sample");
  add_run_flags(surf_cmd, surf.run);
  surf_cmd->add_option("--params", surf.params, "Parameter file (default <out>/params.bin)");
  surf_cmd->add_option("--sample", surf.sample, "Eval sample index");
  surf_cmd->add_option("--kind", surf.kind, "Corruption kind for the perturbed image");
  surf_cmd->add_option("--severity", surf.severity, "Severity 1..5")->check(CLI::Range(1, 5));
  surf_cmd->add_option("--radius", surf.radius, "Probe radius")->check(CLI::PositiveNumber);
  surf_cmd->add_option("--grid-half", surf.grid_half, "Half grid size")->check(CLI::PositiveNumber);
  surf_cmd->add_option("--direction-seed", surf.direction_seed, "Rademacher direction seed");
  surf_cmd->add_option("--csv", surf.csv, "Output CSV (default <out>/loss_surface.csv)");

  std::string report_path;
  std::optional<std::string> report_csv;
  auto* report_cmd = app.add_subcommand("report", "Render a metrics JSON as text");
  report_cmd->add_option("metrics", report_path, "metrics.json")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--csv-dir", report_csv, "Also write curve CSVs here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) {
      return cmd_gen_data(gen);
    }
    if (*cor_cmd) {
      return cmd_corrupt(cor);
    }
    if (*train_cmd) {
      return cmd_train(train);
    }
    if (*eval_cmd) {
      return cmd_eval(eval, eval_params);
    }
    if (*verify_cmd) {
      return cmd_verify(verify_json);
    }
    if (*surf_cmd) {
      return cmd_loss_surface(surf);
    }
    if (*report_cmd) {
      return cmd_report(report_path, report_csv);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const shr::TrainingError& e) {
    std::cerr << "training failed at batch " << e.batch_index() << ": " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
