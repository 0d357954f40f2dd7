#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace osse::geo {

inline constexpr double earth_radius_m = 6371.0e3;
inline constexpr double seconds_per_day = 86400.0;
inline constexpr double deg2rad = std::numbers::pi / 180.0;

/// Meters spanned by one degree of latitude (and of longitude at the equator).
inline constexpr double meters_per_degree = earth_radius_m * deg2rad;

inline double meters_per_degree_lon(double lat_deg) {
  return meters_per_degree * std::cos(lat_deg * deg2rad);
}

/// Great-circle distance in meters (haversine).
inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = lat1 * deg2rad;
  const double p2 = lat2 * deg2rad;
  const double dp = p2 - p1;
  const double dl = (lon2 - lon1) * deg2rad;
  const double s1 = std::sin(dp / 2.0);
  const double s2 = std::sin(dl / 2.0);
  const double a = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  return 2.0 * earth_radius_m * std::asin(std::sqrt(std::min(1.0, a)));
}

}  // namespace osse::geo
