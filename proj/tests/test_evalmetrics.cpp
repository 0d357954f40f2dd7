#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "osse/metrics.hpp"
#include "osse/obs.hpp"
#include "osse/truth.hpp"
#include "test_util.hpp"

using namespace osse;
using osse::testing::small_grid;

TEST(RmseSuite, IdentityAndOffset) {
  const auto g = small_grid(5, 5, 4);
  std::mt19937_64 rng(1);
  const Field t = osse::testing::random_field(g, rng);
  const auto zero = rmse_suite(t, t);
  EXPECT_EQ(zero.mu, 0.0);
  EXPECT_EQ(zero.sigma_t, 0.0);
  Field off = t;
  for (auto& v : off.values) v += 0.02;
  const auto r = rmse_suite(t, off);
  EXPECT_NEAR(r.mu, 0.02, 1e-12);
  EXPECT_NEAR(r.sigma_t, 0.0, 1e-12);
}

TEST(RmseSuite, TwoDays) {
  const auto g = small_grid(2, 2, 2);
  Field t(g, Units::meters), e(g, Units::meters);
  for (auto& v : e.slice(0)) v = 0.01;
  for (auto& v : e.slice(1)) v = 0.03;
  const auto r = rmse_suite(t, e);
  EXPECT_NEAR(r.mu, std::sqrt((1e-4 + 9e-4) / 2.0), 1e-15);
  EXPECT_NEAR(r.sigma_t, 0.01, 1e-15);
  EXPECT_EQ(r.daily.size(), 2u);
}

TEST(RmseSuite, RegionAndMissingCells) {
  const auto g = small_grid(4, 4, 1);
  Field t(g, Units::meters), e(g, Units::meters, 0.1);
  e(0, 0, 0) = std::nan("");
  EXPECT_EQ(rmse_suite(t, e).daily_count[0], 15u);
  EXPECT_NEAR(rmse_suite(t, e, Region{g.lat(2), g.lat(0)}).mu, 0.1, 1e-15);
  EXPECT_THROW(rmse_suite(t, e, Region{80.0, 85.0}), Error);
}

TEST(Spectra, ErrorFreeEstimateHitsTheBound) {
  const auto g = small_grid(4, 64, 1);
  const Field t = oracle::power_law_field(g, 3.0, 1);
  const auto r = lambda_x(t, t);
  EXPECT_TRUE(r.at_bound);
  EXPECT_DOUBLE_EQ(r.lambda, 2.0 * g.dlon);
}

TEST(Spectra, WhiteNoiseCrossingMatchesBruteForce) {
  const auto g = small_grid(16, 128, 2);
  const Field t = oracle::power_law_field(g, 3.0, 2, 0.1);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  Field e = t;
  for (auto& v : e.values) v += noise(rng);
  const std::size_t m = oracle::brute_force_crossing_bin(t, e);
  ASSERT_GT(m, 1u);
  const double dk = 1.0 / (static_cast<double>(g.nlon) * g.dlon);
  const auto r = lambda_x(t, e);
  EXPECT_FALSE(r.at_bound);
  EXPECT_LE(std::abs(1.0 / r.lambda - static_cast<double>(m) * dk), dk);
}

TEST(Spectra, LowPassCutoffIsRecovered) {
  const auto g = small_grid(8, 128, 1);
  const std::size_t n = g.nlon, cutoff_m = 16;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ph(0.0, 6.283185307179586);
  Field t(g, Units::meters), e(g, Units::meters);
  for (std::size_t i = 0; i < g.nlat; ++i)
    for (std::size_t m = 1; m <= n / 2; ++m) {
      const double a = std::pow(static_cast<double>(m), -1.0), p = ph(rng);
      for (std::size_t j = 0; j < n; ++j) {
        const double v = a * std::sin(6.283185307179586 * static_cast<double>(m * j) / static_cast<double>(n) + p);
        t(0, i, j) += v;
        if (m <= cutoff_m) e(0, i, j) += v;
      }
    }
  const double L = static_cast<double>(n) * g.dlon / static_cast<double>(cutoff_m);
  EXPECT_NEAR(lambda_x(t, e).lambda, L, 0.25 * L);
}

TEST(Spectra, ThresholdConventions) {
  Spectrum s{{1.0, 2.0, 3.0}, {0.1, 0.4, 2.0}, {1.0, 1.0, 1.0}};
  const auto eq = crossing(s, 1.0, 0.1);
  EXPECT_NEAR(1.0 / eq.lambda, 2.0 + (1.0 - 0.4) / (2.0 - 0.4), 1e-12);
  const auto half = crossing(s, 0.5, 0.1);
  EXPECT_NEAR(1.0 / half.lambda, 2.0 + (0.5 - 0.4) / (2.0 - 0.4), 1e-12);
  EXPECT_THROW(spectra(Field(small_grid(2, 8, 1), Units::meters), Field(small_grid(2, 8, 1), Units::meters), SpectralAxis::lon), Error);
}

TEST(CurrentRmse, DerivedFromSsh) {
  TruthConfig c;
  c.spec = GridSpec::gulf_stream(2);
  c.n_eddies = 3;
  const Truth t = generate_truth(c);
  auto r = current_rmse(t.currents, t.ssh);
  EXPECT_LT(r.mu_u, 1e-10);
  EXPECT_LT(r.mu_v, 1e-10);
  Field shifted = t.ssh;
  for (auto& v : shifted.values) v += 0.5;
  r = current_rmse(t.currents, shifted);
  EXPECT_LT(r.mu_u, 1e-10);
  Field doubled = t.ssh;
  for (auto& v : doubled.values) v *= 2.0;
  r = current_rmse(t.currents, doubled);
  double rms = 0.0;
  for (double v : t.currents.u.values) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(t.currents.u.values.size()));
  EXPECT_NEAR(r.mu_u, rms, 1e-10);
}

TEST(AlongTrackRmse, ExactOffsetAndNoise) {
  const auto g = small_grid(8, 8, 3);
  std::mt19937_64 rng(5);
  const Field truth = osse::testing::random_field(g, rng, 0.1);
  const auto pts = osse::testing::random_points(g, 100000, rng);
  const auto exact = simulate_ssh_obs(truth, pts, {0.0, 1});
  EXPECT_EQ(along_track_rmse(exact, truth), 0.0);
  Field off = truth;
  for (auto& v : off.values) v -= 0.07;
  EXPECT_NEAR(along_track_rmse(exact, off), 0.07, 1e-12);
  const double r = along_track_rmse(simulate_ssh_obs(truth, pts, {0.019, 6}), truth);
  EXPECT_GE(r, 0.0186);
  EXPECT_LE(r, 0.0194);
}

TEST(WindowProfile, FlatAndSingleOffset) {
  const auto g = small_grid(3, 3, 5);
  const Field truth(g, Units::meters, 0.0);
  std::vector<OffsetFrame> frames;
  for (std::size_t o = 0; o < 5; ++o) frames.push_back({o, o, std::vector<double>(9, 0.2)});
  const auto p = window_profile(truth, frames, 5);
  EXPECT_TRUE(p.complete());
  for (const auto& v : p.rmse) EXPECT_NEAR(*v, 0.2, 1e-15);
  EXPECT_EQ(p.delay(0), 4u);
  const auto single = window_profile(truth, {{2, 1, std::vector<double>(9, 0.1)}}, 5);
  EXPECT_FALSE(single.complete());
  EXPECT_EQ(*single.argmin(), 2u);
  EXPECT_FALSE(single.rmse[0].has_value());
}
