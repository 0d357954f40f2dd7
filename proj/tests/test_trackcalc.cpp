#include <gtest/gtest.h>

#include "osse/along_track.hpp"

using namespace osse;

namespace {

// Meridional track: sample n at 1 s intervals, `step_m` apart, value h(s).
template <class Fn>
TrackSet meridional_track(std::size_t n, double step_m, Fn&& h, int sat = 1, double t = 3.25) {
  std::vector<PointSample> s;
  for (std::size_t k = 0; k < n; ++k) {
    PointSample p;
    p.sat_id = sat;
    p.t = t;
    p.seconds_of_day = 1000.0 + static_cast<double>(k);
    p.lat = 36.0 + static_cast<double>(k) * step_m / geo::meters_per_degree;
    p.lon = -62.0;
    p.value = h(static_cast<double>(k) * step_m);
    s.push_back(p);
  }
  return TrackSet(std::move(s));
}

}  // namespace

TEST(AlongTrackDerivative, ConstantSshHasZeroSlope) {
  const auto d = along_track_derivative(meridional_track(10, 7e3, [](double) { return 0.3; }));
  EXPECT_EQ(d.size(), 9u);
  for (const auto& s : d.samples) EXPECT_EQ(s.value, 0.0);
}

TEST(AlongTrackDerivative, UniformSlope) {
  const auto d = along_track_derivative(meridional_track(6, 7e3, [](double s) { return 0.01 * s / 7e3; }));
  ASSERT_EQ(d.size(), 5u);
  for (const auto& s : d.samples) EXPECT_NEAR(s.value, 1.4286e-6, 1e-10);
}

TEST(AlongTrackDerivative, TwoSecondRule) {
  std::vector<PointSample> s(2);
  s[0].lat = 36.0;
  s[1].lat = 36.05;
  s[0].seconds_of_day = 10.0;
  s[1].seconds_of_day = 15.0;
  EXPECT_EQ(along_track_derivative(TrackSet(s)).size(), 0u);
  s[1].seconds_of_day = 12.0;  // exactly two seconds is not "less than two"
  EXPECT_EQ(along_track_derivative(TrackSet(s)).size(), 0u);
  s[1].seconds_of_day = 11.0;
  EXPECT_EQ(along_track_derivative(TrackSet(s)).size(), 1u);
}

TEST(AlongTrackDerivative, PairsNeverCrossSatellitesOrDays) {
  std::vector<PointSample> s(2);
  s[0].lat = 36.0;
  s[1].lat = 36.05;
  s[1].seconds_of_day = 1.0;
  s[1].sat_id = 2;
  EXPECT_EQ(along_track_derivative(TrackSet(s)).size(), 0u);
  // Same second of day but different UTC days.
  s[1].sat_id = 0;
  s[1].t = 1.0;
  EXPECT_EQ(along_track_derivative(TrackSet(s)).size(), 0u);
}

TEST(AlongTrackDerivative, InvariantToOtherSatellites) {
  const auto a = meridional_track(8, 7e3, [](double s) { return 1e-9 * s * s; }, 1);
  const auto b = meridional_track(8, 5e3, [](double s) { return std::sin(s); }, 2);
  std::vector<PointSample> merged(a.begin(), a.end());
  merged.insert(merged.end(), b.begin(), b.end());
  const auto d_all = along_track_derivative(TrackSet(merged));
  const auto d_a = along_track_derivative(a);
  const auto only_a = d_all.samples.filter([](const PointSample& p) { return p.sat_id == 1; });
  EXPECT_TRUE(only_a == d_a.samples);
}

TEST(SecondDerivative, LinearSshHasZeroCurvature) {
  const auto d2 = second_derivative(along_track_derivative(meridional_track(10, 7e3, [](double s) { return 2e-6 * s; })));
  EXPECT_EQ(d2.size(), 8u);
  for (const auto& s : d2.samples) EXPECT_NEAR(s.value, 0.0, 1e-20);
}

TEST(SecondDerivative, QuadraticSshHasConstantCurvature) {
  const double b = 3e-10;
  const auto d2 = second_derivative(along_track_derivative(meridional_track(20, 7e3, [&](double s) { return b * s * s; })));
  ASSERT_EQ(d2.size(), 18u);
  for (const auto& s : d2.samples) EXPECT_NEAR(s.value, 2.0 * b, 1e-10 * 2.0 * b);
}

TEST(SecondDerivative, NeedsThreeConsecutiveSamples) {
  EXPECT_EQ(second_derivative(along_track_derivative(meridional_track(2, 7e3, [](double s) { return s; }))).size(), 0u);
  // Three samples with a broken middle gap: two first differences that do not chain.
  auto tr = meridional_track(4, 7e3, [](double s) { return s * s; });
  std::vector<PointSample> s(tr.begin(), tr.end());
  s[2].seconds_of_day += 10.0;
  s[3].seconds_of_day += 10.0;
  const auto d1 = along_track_derivative(TrackSet(s));
  EXPECT_EQ(d1.size(), 2u);
  EXPECT_EQ(second_derivative(d1).size(), 0u);
}

TEST(AlongTrackDerivative, AdjointMatchesApply) {
  const auto tr = meridional_track(12, 6e3, [](double s) { return std::cos(s / 3e4); });
  const auto d = along_track_derivative(tr);
  std::vector<double> x(tr.size()), r(d.size()), back(tr.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(1.0 + static_cast<double>(n));
  for (std::size_t n = 0; n < r.size(); ++n) r[n] = std::cos(2.0 * static_cast<double>(n));
  const auto dx = d.apply(x);
  d.adjoint_add(r, back);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t n = 0; n < r.size(); ++n) lhs += dx[n] * r[n];
  for (std::size_t n = 0; n < x.size(); ++n) rhs += x[n] * back[n];
  EXPECT_NEAR(lhs, rhs, 1e-15 * std::max(1.0, std::abs(lhs)));
}
