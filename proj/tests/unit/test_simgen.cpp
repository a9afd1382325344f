#include <cmath>
#include <numeric>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "balance/error.hpp"
#include "balance/features.hpp"
#include "balance/preprocess.hpp"
#include "balance/simgen.hpp"
#include "fixtures.hpp"

using namespace balance;

namespace {

double sd(const std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

double mean_feature(const std::vector<Segment>& segs, std::size_t index) {
  double s = 0.0;
  for (const auto& seg : segs) s += compute_features(seg).values[index];
  return s / static_cast<double>(segs.size());
}

constexpr std::size_t kAvgSpeed = 9;

}  // namespace

TEST(OrnsteinUhlenbeck, StationarySpread) {
  for (double lambda : {0.5, 1.0, 3.0}) {
    SwayParams p;
    p.lambda = lambda;
    p.sigma = 4.0;
    p.duration = 2000.0;  // 100k frames
    p.seed = 42;
    const auto rec = generate_recording(p);
    std::vector<double> ml, ap;
    for (const auto& f : rec.frames) {
      ml.push_back(f.l_ml);
      ap.push_back(f.r_ap);
    }
    const double expected = p.sigma / std::sqrt(2.0 * lambda);
    EXPECT_NEAR(sd(ml), expected, 0.05 * expected) << lambda;
    EXPECT_NEAR(sd(ap), expected * p.anisotropy, 0.05 * expected * p.anisotropy) << lambda;
  }
}

TEST(OrnsteinUhlenbeck, SharedInnovationCorrelatesFeet) {
  SwayParams p;
  p.duration = 1000.0;
  p.shared = 0.8;
  const auto rec = generate_recording(p);
  double sxy = 0, sxx = 0, syy = 0;
  for (const auto& f : rec.frames) {
    sxy += f.l_ml * f.r_ml;
    sxx += f.l_ml * f.l_ml;
    syy += f.r_ml * f.r_ml;
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), 0.8, 0.05);
}

TEST(Simgen, ZeroNoiseGivesZeroSway) {
  SwayParams p;
  p.sigma = 0.0;
  p.force_noise = 0.0;
  p.seed = 3;
  auto rec = generate_recording(p);
  rec.subject = fixture::meta("S1");
  const auto segs = segment_series(preprocess_recording(rec), "S1");
  ASSERT_FALSE(segs.empty());
  for (const auto& seg : segs) {
    const auto row = compute_features(seg);
    for (std::size_t j : {0u, 1u, 3u, 4u}) EXPECT_NEAR(row.values[j], 0.0, 1e-6) << kCopFeatureNames[j];
    for (std::size_t j = kFirstVelocityFeature; j < kNumCopFeatures; ++j) EXPECT_NEAR(row.values[j], 0.0, 1e-6) << kCopFeatureNames[j];
  }
}

TEST(Simgen, SpeedScalesWithSigma) {
  double base = 0.0, doubled = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    base += mean_feature(fixture::sim_segments(seed, 5.0), kAvgSpeed);
    doubled += mean_feature(fixture::sim_segments(seed, 10.0), kAvgSpeed);
  }
  EXPECT_NEAR(doubled / base, 2.0, 0.1);
}

TEST(Simgen, SpeedIsLinearInSigma) {
  std::vector<double> x, y;
  for (double sigma = 2.0; sigma <= 14.0; sigma += 2.0) {
    double s = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) s += mean_feature(fixture::sim_segments(100 + seed, sigma), kAvgSpeed);
    x.push_back(sigma);
    y.push_back(s / 3.0);
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  EXPECT_GE(sxy * sxy / (sxx * syy), 0.98);
}

TEST(Simgen, Deterministic) {
  SwayParams p;
  p.seed = 77;
  const auto a = generate_recording(p), b = generate_recording(p);
  ASSERT_EQ(a.frames.size(), 1500u);
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    EXPECT_EQ(a.frames[t].l_ml, b.frames[t].l_ml);
    EXPECT_EQ(a.frames[t].r_force, b.frames[t].r_force);
  }
  p.seed = 78;
  EXPECT_NE(generate_recording(p).frames[10].l_ml, a.frames[10].l_ml);

  const auto spec = sway_preset("separable", 4, 9);
  const auto s1 = draw_subjects(spec), s2 = draw_subjects(spec);
  ASSERT_EQ(s1.size(), 8u);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    EXPECT_EQ(s1[i].meta.id, s2[i].meta.id);
    EXPECT_EQ(s1[i].sway.sigma, s2[i].sway.sigma);
    EXPECT_EQ(s1[i].meta.age, s2[i].meta.age);
  }
}

TEST(Simgen, Presets) {
  const auto sep = sway_preset("separable", 5, 1);
  ASSERT_EQ(sep.profiles.size(), 2u);
  EXPECT_DOUBLE_EQ(sep.profiles[1].sway.sigma / sep.profiles[0].sway.sigma, 1.5);
  EXPECT_DOUBLE_EQ(sep.profiles[1].sway.lambda / sep.profiles[0].sway.lambda, 2.25);
  EXPECT_EQ(sway_preset("null3", 5, 1).profiles.size(), 3u);
  EXPECT_THROW(sway_preset("nonsense", 5, 1), ParameterError);
}

TEST(Simgen, SpecJsonRoundTrip) {
  auto spec = sway_preset("null3", 7, 123);
  spec.profiles[1].sway.anisotropy = 1.7;
  spec.profiles[2].neuropsych.clear();
  const auto j = spec.to_json();
  const auto back = CohortSpec::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(back.profiles[1].sway.anisotropy, 1.7);
  EXPECT_THROW(CohortSpec::from_json(nlohmann::json::parse(R"({"profiles": 3})")), Error);
}

TEST(Simgen, ParameterValidation) {
  SwayParams p;
  p.lambda = 0.0;
  EXPECT_THROW(generate_recording(p), ParameterError);
  p = {};
  p.duration = 1.0;
  EXPECT_THROW(generate_recording(p), ParameterError);
}
