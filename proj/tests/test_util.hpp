#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "osse/grid.hpp"

namespace osse::testing {

/// Small mid-latitude grid with 0.1 degree pixels.
inline GridSpec small_grid(std::size_t nlat, std::size_t nlon, std::size_t nt, double dlat = 0.1, double dlon = 0.1) {
  GridSpec g;
  g.lat0 = 35.0;
  g.lon0 = -60.0;
  g.dlat = dlat;
  g.dlon = dlon;
  g.nlat = nlat;
  g.nlon = nlon;
  g.t0 = 0.0;
  g.dt = 1.0;
  g.nt = nt;
  return g;
}

inline Field random_field(const GridSpec& g, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Field f(g, Units::meters);
  for (auto& v : f.values) v = n(rng);
  return f;
}

/// Random points strictly inside the grid's space-time box.
inline TrackSet random_points(const GridSpec& g, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PointSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    PointSample p;
    p.t = g.t0 + u(rng) * (g.t_max() - g.t0);
    p.lat = g.lat_min() + u(rng) * (g.lat_max() - g.lat_min());
    p.lon = g.lon_min() + u(rng) * (g.lon_max() - g.lon_min());
    p.seconds_of_day = static_cast<double>(i);
    s.push_back(p);
  }
  return TrackSet(std::move(s));
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("osse_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace osse::testing
