// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "shr/metrics.hpp"

namespace shr {
namespace {

using nlohmann::json;

const std::string kFixtures = SHR_FIXTURE_DIR;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Fixture {
  json raw;
  std::vector<PredictionRecord> records;
  std::vector<Heatmap> heatmaps;
  MetricsOptions opts;
};

Fixture load_fixture() {
  Fixture f;
  const std::string text = slurp(kFixtures + "/metrics_fixture.json");
  f.raw = json::parse(text);
  f.records = records_from_json(text);
  for (const auto& rows : f.raw.at("heatmaps")) {
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows.at(0).size());
    Heatmap hm(h, w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        hm(r, c) = rows.at(r).at(c).get<double>();
      }
    }
    f.heatmaps.push_back(hm);
  }
  const auto& o = f.raw.at("options");
  f.opts = {o.at("p_max").get<int>(), o.at("t_max").get<int>(), o.at("d_n_n").get<int>()};
  return f;
}

PredictionRecord record_with_drift(PixelPos clean, std::vector<PixelPos> pert,
                                   CorruptionKind kind = CorruptionKind::jpeg) {
  PredictionRecord rec;
  rec.clean_pred = clean;
  rec.gt = clean;
  int sev = 1;
  for (PixelPos p : pert) {
    rec.pert_preds.push_back({{kind, sev++, 0}, p});
  }
  return rec;
}

TEST(MetricsFixture, EveryMetricMatchesExactly) {
  const Fixture f = load_fixture();
  const json& e = f.raw.at("expected");
  ASSERT_EQ(f.records.size(), 4u);

  const auto r = robustness_r(f.records);
  ASSERT_EQ(r.size(), e.at("r_per_kind").size());
  for (const auto& [kind, value] : e.at("r_per_kind").items()) {
    EXPECT_EQ(r.at(kind), value.get<double>()) << kind;
  }
  EXPECT_EQ(robustness_r_mean(f.records), e.at("r_mean").get<double>());

  for (const auto& [p, value] : e.at("stable_proportion").items()) {
    EXPECT_EQ(stable_proportion(f.records, std::stoi(p)), value.get<double>()) << "P=" << p;
  }
  EXPECT_EQ(ruc(f.records, f.opts.p_max).area,
            e.at("ruc_numerator").get<double>() / e.at("ruc_denominator").get<double>());
  EXPECT_EQ(pck_auc(f.records, f.opts.t_max),
            e.at("pck_numerator").get<double>() / e.at("pck_denominator").get<double>());
  EXPECT_EQ(d_n(f.heatmaps, f.opts.d_n_n), e.at("d_n").get<double>());
  EXPECT_EQ(d_12(f.heatmaps), e.at("d_12").get<double>());

  const MetricsReport rep = compute_metrics(f.records, f.heatmaps, f.opts);
  EXPECT_EQ(rep.r_per_kind, r);
  EXPECT_EQ(rep.ruc, ruc(f.records, f.opts.p_max).area);
  EXPECT_EQ(rep.d_n_n, 3);
  EXPECT_EQ(rep.samples, 4u);
}

TEST(RobustnessR, Examples) {
  const std::vector<PredictionRecord> still{record_with_drift({5, 5}, {{5, 5}, {5, 5}})};
  EXPECT_EQ(robustness_r(still).at("jpeg"), 0.0);
  const std::vector<PredictionRecord> one{record_with_drift({5, 5}, {{8, 9}})};
  EXPECT_EQ(robustness_r(one).at("jpeg"), 25.0);
  const std::vector<PredictionRecord> two{record_with_drift({5, 5}, {{8, 9}, {5, 5}})};
  EXPECT_EQ(robustness_r(two).at("jpeg"), 12.5);
  EXPECT_THROW(robustness_r(std::vector<PredictionRecord>{}), DomainError);
}

TEST(RobustnessR, PermutationInvariant) {
  Fixture f = load_fixture();
  const auto before = robustness_r(f.records);
  std::reverse(f.records.begin(), f.records.end());
  for (auto& rec : f.records) {
    rec.sample_id += 100;
  }
  EXPECT_EQ(robustness_r(f.records), before);
}

TEST(StableProportion, Examples) {
  const std::vector<PredictionRecord> five{record_with_drift({0, 0}, {{3, 4}, {4, 3}})};
  EXPECT_EQ(stable_proportion(five, 4), 0.0);
  EXPECT_EQ(stable_proportion(five, 5), 1.0);
  EXPECT_EQ(stable_proportion(five, 1000), 1.0);
  const std::vector<PredictionRecord> half{record_with_drift({0, 0}, {{0, 0}, {0, 9}})};
  EXPECT_EQ(stable_proportion(half, 3), 0.5);
  EXPECT_THROW(stable_proportion(std::vector<PredictionRecord>{}, 1), DomainError);
}

TEST(Ruc, Extremes) {
  const std::vector<PredictionRecord> still{record_with_drift({5, 5}, {{5, 5}})};
  EXPECT_EQ(ruc(still, 20).area, 1.0);
  const std::vector<PredictionRecord> far{record_with_drift({0, 0}, {{30, 30}})};
  EXPECT_EQ(ruc(far, 20).area, 0.0);
  EXPECT_EQ(ruc(far, 20).curve.size(), 21u);
  EXPECT_THROW(ruc(far, 0), DomainError);
}

TEST(Ruc, CurveMonotone) {
  const Fixture f = load_fixture();
  const auto c = ruc(f.records, 20).curve;
  for (std::size_t i = 1; i < c.size(); ++i) {
    EXPECT_GE(c[i].proportion, c[i - 1].proportion);
  }
  const auto p = pck(f.records, 10).curve;
  for (std::size_t i = 1; i < p.size(); ++i) {
    EXPECT_GE(p[i].proportion, p[i - 1].proportion);
  }
}

TEST(Pck, Extremes) {
  PredictionRecord exact;
  exact.gt = {4, 4};
  exact.clean_pred = {4, 4};
  EXPECT_EQ(pck_auc(std::vector<PredictionRecord>{exact}, 10), 1.0);
  PredictionRecord off = exact;
  off.clean_pred = {40, 4};
  EXPECT_EQ(pck_auc(std::vector<PredictionRecord>{off}, 10), 0.0);
  EXPECT_THROW(pck_auc(std::vector<PredictionRecord>{off}, 0), DomainError);
}

TEST(Dn, Examples) {
  Heatmap adj(4, 4, 0.0);
  adj(1, 1) = 1.0;
  adj(1, 2) = 0.9;
  EXPECT_EQ(d_n(std::vector<Heatmap>{adj}, 2), 1.0);

  // One compact blob against two distant equal peaks.
  Heatmap compact(32, 32, 0.0);
  Heatmap split(32, 32, 0.0);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      compact(10 + r, 10 + c) = 1.0 - 0.01 * (r + c);
      split(r, c) = 1.0 - 0.01 * (r + c);
      split(24 + r, 24 + c) = 1.0 - 0.01 * (r + c) - 0.005;
    }
  }
  EXPECT_LT(d_n(std::vector<Heatmap>{compact}, 64), d_n(std::vector<Heatmap>{split}, 64));
  EXPECT_THROW(d_n(std::vector<Heatmap>{adj}, 1), DomainError);
  EXPECT_THROW(d_n(std::vector<Heatmap>{adj}, 17), DomainError);
}

TEST(D12, Examples) {
  Heatmap one_hot(3, 3, 0.0);
  one_hot(2, 1) = 1.0;
  EXPECT_EQ(d_12(std::vector<Heatmap>{one_hot}), 1.0);
  EXPECT_EQ(d_12(std::vector<Heatmap>{Heatmap(3, 3, 1.0 / 9.0)}), 0.0);
}

TEST(LossSurface, ShapeCenterAndDeterminism) {
  Image x(4, 4, 0.5);
  Image xp = x;
  xp(1, 2) = 0.8;
  const auto loss = [](const Image& img) {
    double s = 0.0;
    for (double v : img.values()) {
      s += (v - 0.3) * (v - 0.3);
    }
    return s;
  };
  const LossSurface a = loss_surface(loss, x, xp, 0.5, 3, 17);
  EXPECT_EQ(a.height(), 7);
  EXPECT_EQ(a.width(), 7);
  EXPECT_EQ(a(3, 3), loss(x));
  EXPECT_EQ(loss_surface(loss, x, xp, 0.5, 3, 17), a);
  EXPECT_NE(loss_surface(loss, x, xp, 0.5, 3, 18), a);
  // Along the rows only the perturbation direction moves, and it touches one pixel.
  Image moved = x;
  moved(1, 2) = 0.5 + 0.5;
  EXPECT_NEAR(a(6, 3), loss(moved), 1e-12);
  EXPECT_THROW(loss_surface(loss, x, x, 0.5, 3, 1), DegenerateInputError);
}

TEST(MetricsJson, RoundTripIsExact) {
  const Fixture f = load_fixture();
  MetricsReport rep = compute_metrics(f.records, f.heatmaps, f.opts);
  rep.pipeline = "hdhr";
  rep.config_digest = "abc";
  rep.seed = 9;
  const std::string text = to_json(rep);
  const MetricsReport back = metrics_from_json(text);
  EXPECT_EQ(to_json(back), text);
  EXPECT_EQ(back.ruc, rep.ruc);
  EXPECT_EQ(json::parse(text).at("schema_version").get<int>(), kMetricsSchemaVersion);

  auto j = json::parse(text);
  j["schema_version"] = 99;
  EXPECT_THROW(metrics_from_json(j.dump()), DomainError);

  const auto recs = records_from_json(to_json(std::span<const PredictionRecord>(f.records)));
  ASSERT_EQ(recs.size(), f.records.size());
  EXPECT_EQ(recs[3].pert_preds[1].pos, f.records[3].pert_preds[1].pos);
}

TEST(Report, RenderIsStable) {
  const Fixture f = load_fixture();
  const MetricsReport rep = compute_metrics(f.records, f.heatmaps, f.opts);
  EXPECT_EQ(render_report(rep), render_report(metrics_from_json(to_json(rep))));
  std::ostringstream csv;
  write_curve_csv(csv, rep.ruc_curve, "p");
  EXPECT_EQ(csv.str().substr(0, 28), "p,proportion\n0,0.500000\n1,0.");
}

}  // namespace
}  // namespace shr
