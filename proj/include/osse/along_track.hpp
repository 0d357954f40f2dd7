#pragma once

// Along-track first and second SSH derivatives approximated by rates of
// change between consecutive samples of the same satellite.

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "osse/error.hpp"
#include "osse/field_io.hpp"
#include "osse/geo.hpp"
#include "osse/grid.hpp"

namespace osse {

/// Derivative samples re-centered on the midpoints of their parent pairs.
/// lo/hi index the parent samples, ds is the ground distance between them.
struct DerivedTrackSet {
  TrackSet samples;
  int order = 1;
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
  std::vector<double> ds;

  std::size_t size() const { return lo.size(); }

  /// (x[hi] - x[lo]) / ds for every pair.
  std::vector<double> apply(std::span<const double> parent) const {
    std::vector<double> out(lo.size());
    for (std::size_t n = 0; n < lo.size(); ++n) out[n] = (parent[hi[n]] - parent[lo[n]]) / ds[n];
    return out;
  }

  /// Accumulates the transpose of apply() into parent_out.
  void adjoint_add(std::span<const double> r, std::span<double> parent_out) const {
    for (std::size_t n = 0; n < lo.size(); ++n) {
      const double q = r[n] / ds[n];
      parent_out[hi[n]] += q;
      parent_out[lo[n]] -= q;
    }
  }
};

namespace detail {

/// Pairs must come from one satellite, on one UTC day, less than max_gap_s apart.
inline bool pairable(const PointSample& a, const PointSample& b, double max_gap_s) {
  return a.sat_id == b.sat_id && std::floor(a.t) == std::floor(b.t) &&
         std::abs(b.seconds_of_day - a.seconds_of_day) < max_gap_s;
}

inline PointSample midpoint(const PointSample& a, const PointSample& b) {
  PointSample m;
  m.sat_id = a.sat_id;
  m.t = 0.5 * (a.t + b.t);
  m.seconds_of_day = 0.5 * (a.seconds_of_day + b.seconds_of_day);
  m.lat = 0.5 * (a.lat + b.lat);
  m.lon = 0.5 * (a.lon + b.lon);
  return m;
}

inline DerivedTrackSet difference_pairs(const TrackSet& parent, int order, double max_gap_s, Diagnostics* diag,
                                        const std::vector<std::size_t>* parent_hi,
                                        const std::vector<std::size_t>* parent_lo) {
  DerivedTrackSet d;
  d.order = order;
  std::vector<PointSample> mids;
  for (std::size_t i = 0; i + 1 < parent.size(); ++i) {
    const auto& a = parent[i];
    const auto& b = parent[i + 1];
    if (!pairable(a, b, max_gap_s)) continue;
    // Second differences only chain first differences that share a sample.
    if (parent_hi && (*parent_hi)[i] != (*parent_lo)[i + 1]) continue;
    const double ds = geo::haversine_m(a.lat, a.lon, b.lat, b.lon);
    if (ds == 0.0) {
      if (diag) diag->count("duplicate_position");
      continue;
    }
    mids.push_back(midpoint(a, b));
    d.lo.push_back(i);
    d.hi.push_back(i + 1);
    d.ds.push_back(ds);
  }
  const auto vals = parent.values();
  const auto deriv = d.apply(vals);
  for (std::size_t n = 0; n < mids.size(); ++n) mids[n].value = deriv[n];
  // Midpoints of time-ordered pairs are already in track order.
  d.samples = TrackSet(std::move(mids));
  return d;
}

}  // namespace detail

inline DerivedTrackSet along_track_derivative(const TrackSet& obs, double max_gap_s = 2.0,
                                              Diagnostics* diag = nullptr) {
  return detail::difference_pairs(obs, 1, max_gap_s, diag, nullptr, nullptr);
}

inline DerivedTrackSet second_derivative(const DerivedTrackSet& d1, double max_gap_s = 2.0,
                                         Diagnostics* diag = nullptr) {
  require(d1.order == 1, "second_derivative expects first-order derivative samples");
  return detail::difference_pairs(d1.samples, 2, max_gap_s, diag, &d1.hi, &d1.lo);
}

inline void write_derived_csv(const std::filesystem::path& path, const DerivedTrackSet& d) {
  std::string out = "sat_id,t_days,seconds_of_day,lat,lon,value,order\n";
  for (const auto& s : d.samples) {
    out += std::to_string(s.sat_id) + ',' + io::format_double(s.t) + ',' + io::format_double(s.seconds_of_day) +
           ',' + io::format_double(s.lat) + ',' + io::format_double(s.lon) + ',' + io::format_double(s.value) + ',' +
           std::to_string(d.order) + '\n';
  }
  io::write_bytes(path, out);
}

}  // namespace osse
