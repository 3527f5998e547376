// SPDX-License-Identifier: Apache-2.0
#include "shr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "shr/error.hpp"
#include "shr/heatmap.hpp"
#include "shr/rng.hpp"

namespace shr {

namespace {

using nlohmann::json;

std::size_t pair_count(std::span<const PredictionRecord> records) {
  std::size_t n = 0;
  for (const auto& rec : records) {
    n += rec.pert_preds.size();
  }
  return n;
}

void require_pairs(std::span<const PredictionRecord> records, const char* what) {
  if (pair_count(records) == 0) {
    throw DomainError(std::string(what) + ": no (sample, perturbation) pairs");
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json pos_json(PixelPos p) { return json::array({p.row, p.col}); }

PixelPos pos_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

json curve_json(const std::vector<CurvePoint>& curve) {
  json out = json::array();
  for (const auto& pt : curve) {
    out.push_back(json::array({pt.threshold, pt.proportion}));
  }
  return out;
}

std::vector<CurvePoint> curve_from(const json& j) {
  std::vector<CurvePoint> out;
  for (const auto& pt : j) {
    out.push_back({pt.at(0).get<int>(), pt.at(1).get<double>()});
  }
  return out;
}

}  // namespace

std::map<std::string, double> robustness_r(std::span<const PredictionRecord> records) {
  require_pairs(records, "robustness_r");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& rec : records) {
    for (const auto& pp : rec.pert_preds) {
      auto& slot = acc[to_string(pp.spec.kind)];
      slot.first += squared_distance(rec.clean_pred, pp.pos);
      ++slot.second;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [kind, sum_count] : acc) {
    out[kind] = sum_count.first / static_cast<double>(sum_count.second);
  }
  return out;
}

double robustness_r_mean(std::span<const PredictionRecord> records) {
  require_pairs(records, "robustness_r_mean");
  // Integer drifts: the sum is exact regardless of record order.
  std::int64_t sum = 0;
  for (const auto& rec : records) {
    for (const auto& pp : rec.pert_preds) {
      sum += squared_distance(rec.clean_pred, pp.pos);
    }
  }
  return static_cast<double>(sum) / static_cast<double>(pair_count(records));
}

double stable_proportion(std::span<const PredictionRecord> records, int p) {
  if (p < 0) {
    throw DomainError("stable_proportion: P must be non-negative");
  }
  require_pairs(records, "stable_proportion");
  const std::int64_t limit = static_cast<std::int64_t>(p) * p;
  std::size_t stable = 0;
  for (const auto& rec : records) {
    for (const auto& pp : rec.pert_preds) {
      stable += squared_distance(rec.clean_pred, pp.pos) <= limit ? 1 : 0;
    }
  }
  return static_cast<double>(stable) / static_cast<double>(pair_count(records));
}

CurveSummary ruc(std::span<const PredictionRecord> records, int p_max) {
  if (p_max < 1) {
    throw DomainError("ruc: P_max must be at least 1");
  }
  CurveSummary out;
  double total = 0.0;
  for (int p = 0; p <= p_max; ++p) {
    const double v = stable_proportion(records, p);
    out.curve.push_back({p, v});
    total += v;
  }
  out.area = total / (p_max + 1);
  return out;
}

CurveSummary pck(std::span<const PredictionRecord> records, int t_max) {
  if (t_max < 1) {
    throw DomainError("pck: t_max must be at least 1");
  }
  if (records.empty()) {
    throw DomainError("pck: no records");
  }
  CurveSummary out;
  double total = 0.0;
  for (int t = 0; t <= t_max; ++t) {
    std::size_t hit = 0;
    for (const auto& rec : records) {
      hit += squared_distance(rec.clean_pred, rec.gt) <= t * t ? 1 : 0;
    }
    const double v = static_cast<double>(hit) / static_cast<double>(records.size());
    out.curve.push_back({t, v});
    total += v;
  }
  out.area = total / (t_max + 1);
  return out;
}

double pck_auc(std::span<const PredictionRecord> records, int t_max) {
  return pck(records, t_max).area;
}

double d_n(std::span<const Heatmap> heatmaps, int n) {
  if (heatmaps.empty()) {
    throw DomainError("d_n: no heatmaps");
  }
  double total = 0.0;
  for (const auto& hm : heatmaps) {
    if (n < 2 || static_cast<std::size_t>(n) > hm.size()) {
      throw DomainError("d_n: n must lie in [2, pixel count], got " + std::to_string(n));
    }
    const auto top = topk_pos(hm, n);
    std::int64_t scatter = 0;
    for (std::size_t i = 1; i < top.size(); ++i) {
      scatter += squared_distance(top[i], top[0]);
    }
    total += static_cast<double>(scatter);
  }
  return total / static_cast<double>(heatmaps.size());
}

double d_12(std::span<const Heatmap> heatmaps) {
  if (heatmaps.empty()) {
    throw DomainError("d_12: no heatmaps");
  }
  double total = 0.0;
  for (const auto& hm : heatmaps) {
    const TopTwo t = top_two(hm);
    total += t.first - t.second;
  }
  return total / static_cast<double>(heatmaps.size());
}

LossSurface loss_surface(const std::function<double(const Image&)>& loss, const Image& x,
                         const Image& x_pert, double radius, int grid_half, std::uint64_t seed) {
  require_same_shape(x, x_pert, "loss_surface");
  if (grid_half < 1) {
    throw DomainError("loss_surface: grid_half must be at least 1");
  }
  if (!(radius > 0.0)) {
    throw DomainError("loss_surface: radius must be positive");
  }
  const std::size_t n = x.size();
  std::vector<double> dn(n);
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dn[i] = x_pert.values()[i] - x.values()[i];
    norm += dn[i] * dn[i];
  }
  if (norm == 0.0) {
    throw DegenerateInputError("loss_surface: perturbed image equals clean image");
  }
  norm = std::sqrt(norm);
  for (double& v : dn) {
    v /= norm;
  }
  CounterRng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> dr(n);
  for (double& v : dr) {
    v = (rng.next_u64() >> 63) != 0 ? scale : -scale;
  }

  const int side = 2 * grid_half + 1;
  LossSurface out(side, side);
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double a = static_cast<double>(i - grid_half) / grid_half * radius;
      const double b = static_cast<double>(j - grid_half) / grid_half * radius;
      Image probe = x;
      auto pv = probe.values();
      for (std::size_t k = 0; k < n; ++k) {
        pv[k] = std::clamp(pv[k] + a * dn[k] + b * dr[k], 0.0, 1.0);
      }
      out(i, j) = loss(probe);
    }
  }
  return out;
}

void write_surface_csv(std::ostream& out, const LossSurface& surface, double radius) {
  const int half = surface.height() / 2;
  out << "alpha,beta,loss\n";
  char buf[96];
  for (int i = 0; i < surface.height(); ++i) {
    for (int j = 0; j < surface.width(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.17g\n",
                    static_cast<double>(i - half) / half * radius,
                    static_cast<double>(j - half) / half * radius, surface(i, j));
      out << buf;
    }
  }
}

void MetricsReport::validate() const {
  if (schema_version != kMetricsSchemaVersion) {
    throw DomainError("metrics report: unsupported schema_version " +
                      std::to_string(schema_version));
  }
  for (std::size_t i = 1; i < ruc_curve.size(); ++i) {
    if (ruc_curve[i].proportion < ruc_curve[i - 1].proportion) {
      throw ContractViolation("metrics report: RUC curve decreases");
    }
  }
}

MetricsReport compute_metrics(std::span<const PredictionRecord> records,
                              std::span<const Heatmap> clean_heatmaps,
                              const MetricsOptions& opts) {
  MetricsReport rep;
  rep.samples = records.size();
  rep.r_per_kind = robustness_r(records);
  rep.r_mean = robustness_r_mean(records);
  const auto r = ruc(records, opts.p_max);
  rep.ruc = r.area;
  rep.ruc_curve = r.curve;
  const auto p = pck(records, opts.t_max);
  rep.pck_auc = p.area;
  rep.pck_curve = p.curve;
  rep.d_n_n = opts.d_n_n;
  rep.d_n = d_n(clean_heatmaps, opts.d_n_n);
  rep.d_12 = d_12(clean_heatmaps);
  return rep;
}

std::string to_json(const MetricsReport& report) {
  json j;
  j["schema_version"] = report.schema_version;
  j["pipeline"] = report.pipeline;
  j["config_digest"] = report.config_digest;
  j["seed"] = report.seed;
  j["samples"] = report.samples;
  j["r_per_kind"] = report.r_per_kind;
  j["r_mean"] = report.r_mean;
  j["ruc"] = report.ruc;
  j["ruc_curve"] = curve_json(report.ruc_curve);
  j["pck_auc"] = report.pck_auc;
  j["pck_curve"] = curve_json(report.pck_curve);
  j["d_n_n"] = report.d_n_n;
  j["d_n"] = report.d_n;
  j["d_12"] = report.d_12;
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport rep;
  try {
    const json j = json::parse(text);
    rep.schema_version = j.at("schema_version").get<int>();
    rep.pipeline = j.value("pipeline", "");
    rep.config_digest = j.value("config_digest", "");
    rep.seed = j.value("seed", std::uint64_t{0});
    rep.samples = j.value("samples", std::uint64_t{0});
    rep.r_per_kind = j.at("r_per_kind").get<std::map<std::string, double>>();
    rep.r_mean = j.at("r_mean").get<double>();
    rep.ruc = j.at("ruc").get<double>();
    rep.ruc_curve = curve_from(j.at("ruc_curve"));
    rep.pck_auc = j.at("pck_auc").get<double>();
    rep.pck_curve = curve_from(j.at("pck_curve"));
    rep.d_n_n = j.at("d_n_n").get<int>();
    rep.d_n = j.at("d_n").get<double>();
    rep.d_12 = j.at("d_12").get<double>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("metrics report JSON: ") + e.what());
  }
  rep.validate();
  return rep;
}

std::string to_json(std::span<const PredictionRecord> records) {
  json arr = json::array();
  for (const auto& rec : records) {
    json pert = json::array();
    for (const auto& pp : rec.pert_preds) {
      pert.push_back({{"kind", to_string(pp.spec.kind)},
                      {"severity", pp.spec.severity},
                      {"seed", pp.spec.seed},
                      {"pos", pos_json(pp.pos)}});
    }
    arr.push_back({{"sample_id", rec.sample_id},
                   {"clean_pred", pos_json(rec.clean_pred)},
                   {"gt", pos_json(rec.gt)},
                   {"pert_preds", pert}});
  }
  return json{{"records", arr}}.dump(2) + "\n";
}

std::vector<PredictionRecord> records_from_json(const std::string& text) {
  std::vector<PredictionRecord> out;
  try {
    const json j = json::parse(text);
    for (const auto& r : j.at("records")) {
      PredictionRecord rec;
      rec.sample_id = r.at("sample_id").get<std::uint64_t>();
      rec.clean_pred = pos_from(r.at("clean_pred"));
      rec.gt = pos_from(r.at("gt"));
      for (const auto& p : r.at("pert_preds")) {
        PerturbedPrediction pp;
        pp.spec.kind = parse_corruption_kind(p.at("kind").get<std::string>());
        pp.spec.severity = p.at("severity").get<int>();
        pp.spec.seed = p.value("seed", std::uint64_t{0});
        pp.pos = pos_from(p.at("pos"));
        rec.pert_preds.push_back(pp);
      }
      out.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("prediction records JSON: ") + e.what());
  }
  return out;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve,
                     const std::string& threshold_name) {
  out << threshold_name << ",proportion\n";
  for (const auto& pt : curve) {
    out << pt.threshold << ',' << fixed(pt.proportion, 6) << '\n';
  }
}

std::string render_report(const MetricsReport& report) {
  std::ostringstream out;
  out << "pipeline        " << (report.pipeline.empty() ? "-" : report.pipeline) << '\n';
  out << "config digest   " << (report.config_digest.empty() ? "-" : report.config_digest)
      << '\n';
  out << "seed            " << report.seed << '\n';
  out << "samples         " << report.samples << '\n';
  out << '\n';
  out << "RUC             " << fixed(report.ruc, 4) << "  (P = 0.."
      << (report.ruc_curve.empty() ? 0 : report.ruc_curve.back().threshold) << ")\n";
  out << "PCK-AUC         " << fixed(report.pck_auc, 4) << "  (t = 0.."
      << (report.pck_curve.empty() ? 0 : report.pck_curve.back().threshold) << ")\n";
  out << "D_" << report.d_n_n << std::string(report.d_n_n < 10 ? 13 : 12, ' ')
      << fixed(report.d_n, 2) << '\n';
  out << "D_(1)(2)        " << fixed(report.d_12, 4) << '\n';
  out << "R (mean)        " << fixed(report.r_mean, 4) << '\n';
  out << '\n';
  out << "kind            R\n";
  for (const auto& [kind, r] : report.r_per_kind) {
    std::string name = kind;
    name.resize(std::max<std::size_t>(name.size() + 1, 16), ' ');
    out << name << fixed(r, 4) << '\n';
  }
  out << '\n';
  out << "P    stable\n";
  for (const auto& pt : report.ruc_curve) {
    std::string p = std::to_string(pt.threshold);
    p.resize(5, ' ');
    out << p << fixed(pt.proportion, 4) << '\n';
  }
  return out.str();
}

}  // namespace shr
