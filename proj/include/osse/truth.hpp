#pragma once

// Synthetic ocean truth: drifting Gaussian SSH eddies over a meridional
// slope, their geostrophic currents, and an SST tracer advected by those
// currents with a semi-Lagrangian scheme.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "osse/dynamics.hpp"
#include "osse/error.hpp"
#include "osse/field_io.hpp"
#include "osse/geo.hpp"
#include "osse/grid.hpp"

namespace osse {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(std::mt19937_64& rng) const {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  }
};

struct TruthConfig {
  GridSpec spec = GridSpec::gulf_stream(21);
  std::size_t n_eddies = 6;
  Range radius_km{40.0, 70.0};
  Range amplitude_m{0.10, 0.30};
  Range drift_km_per_day{0.0, 3.0};
  double background_gradient = 0.0;  // m per degree of latitude, positive northward
  double sst_contrast = 6.0;         // degC
  std::uint64_t seed = 1;
  /// Minimum center spacing in units of the larger of the two radii.
  double min_separation_radii = 3.5;
  double sst_mean = 20.0;  // degC

  void validate() const {
    spec.validate();
    auto ordered = [](const Range& r) { return r.lo >= 0.0 && r.hi >= r.lo; };
    require(ordered(radius_km) && radius_km.lo > 0.0, "radius range must be positive and ordered");
    require(ordered(amplitude_m) && amplitude_m.lo > 0.0, "amplitude range must be positive and ordered");
    require(ordered(drift_km_per_day), "drift speed range must be non-negative and ordered");
    require(min_separation_radii >= 0.0, "minimum separation must be non-negative");
  }
};

/// One synthetic eddy: Gaussian SSH anomaly A exp(-r^2 / 2R^2) drifting at a
/// constant velocity. A > 0 is an anticyclone in the northern hemisphere.
struct SyntheticEddy {
  double lat = 0.0;  // center at t = spec.t0
  double lon = 0.0;
  double radius_m = 0.0;
  double amplitude_m = 0.0;
  double drift_u = 0.0;  // m/s
  double drift_v = 0.0;

  std::pair<double, double> center_at(double days_since_start) const {
    const double s = days_since_start * geo::seconds_per_day;
    const double clat = lat + drift_v * s / geo::meters_per_degree;
    const double clon = lon + drift_u * s / geo::meters_per_degree_lon(lat);
    return {clat, clon};
  }

  double ssh(double days_since_start, double plat, double plon) const {
    const auto [clat, clon] = center_at(days_since_start);
    const double dx = (plon - clon) * geo::meters_per_degree_lon(plat);
    const double dy = (plat - clat) * geo::meters_per_degree;
    return amplitude_m * std::exp(-(dx * dx + dy * dy) / (2.0 * radius_m * radius_m));
  }
};

struct Truth {
  Field ssh;
  Field sst;
  VelocityField currents;
  std::vector<SyntheticEddy> eddies;
};

/// Semi-Lagrangian step of dT/dt + w.grad T = 0 over dt_days on one slice:
/// midpoint backtrace followed by bilinear sampling, substepped so no
/// substep moves more than one pixel.
inline Field advect_tracer(const Field& tracer, const VelocityField& vel, double dt_days) {
  if (!(dt_days > 0.0)) fail("advect_tracer requires dt > 0");
  const auto& g = tracer.spec;
  require(g.nt == 1, "advect_tracer operates on a single slice");
  require(vel.u.spec.same_space(g) && vel.v.spec.same_space(g), "tracer and velocity grids differ");
  require(vel.u.spec.nt == 1 && vel.v.spec.nt == 1, "velocity must be a single slice");

  const std::size_t ni = g.nlat, nj = g.nlon, nn = g.slice_size();
  // Velocity in pixels per second; rows grow southward.
  std::vector<double> pc(nn), pr(nn);
  double max_px = 0.0;
  const double dt_s = dt_days * geo::seconds_per_day;
  for (std::size_t i = 0; i < ni; ++i) {
    const double dx = g.dx_m(i);
    for (std::size_t j = 0; j < nj; ++j) {
      const std::size_t n = i * nj + j;
      pc[n] = vel.u.values[n] / dx;
      pr[n] = -vel.v.values[n] / g.dy_m();
      max_px = std::max({max_px, std::abs(pc[n]) * dt_s, std::abs(pr[n]) * dt_s});
    }
  }
  if (!std::isfinite(max_px)) fail_numerical("non-finite velocity in advect_tracer");
  const auto substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(max_px)));
  const double h = dt_s / static_cast<double>(substeps);

  std::vector<double> cur(tracer.values), next(nn);
  for (std::size_t s = 0; s < substeps; ++s) {
    for (std::size_t i = 0; i < ni; ++i) {
      for (std::size_t j = 0; j < nj; ++j) {
        const std::size_t n = i * nj + j;
        const double fi = static_cast<double>(i), fj = static_cast<double>(j);
        const double mi = fi - 0.5 * h * pr[n];
        const double mj = fj - 0.5 * h * pc[n];
        const double vr = bilinear_at(pr, ni, nj, mi, mj);
        const double vc = bilinear_at(pc, ni, nj, mi, mj);
        next[n] = bilinear_at(cur, ni, nj, fi - h * vr, fj - h * vc);
      }
    }
    std::swap(cur, next);
  }
  return Field(g, tracer.units, std::move(cur));
}

inline std::vector<SyntheticEddy> draw_eddies(const TruthConfig& cfg, std::mt19937_64& rng) {
  const auto& g = cfg.spec;
  std::vector<SyntheticEddy> eddies;
  eddies.reserve(cfg.n_eddies);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int max_attempts = 2000;
  constexpr int max_restarts = 50;  // sequential placement can jam; start over
  int restarts = 0;
  for (std::size_t e = 0; e < cfg.n_eddies; ++e) {
    SyntheticEddy ed;
    ed.radius_m = cfg.radius_km.draw(rng) * 1000.0;
    ed.amplitude_m = cfg.amplitude_m.draw(rng) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    const double speed = cfg.drift_km_per_day.draw(rng) * 1000.0 / geo::seconds_per_day;
    const double heading = 2.0 * std::numbers::pi * unit(rng);
    ed.drift_u = speed * std::cos(heading);
    ed.drift_v = speed * std::sin(heading);
    const double margin_lat = 1.5 * ed.radius_m / geo::meters_per_degree;
    const double margin_lon = 1.5 * ed.radius_m / geo::meters_per_degree_lon(g.center_lat());
    const double lat_lo = g.lat_min() + margin_lat, lat_hi = g.lat_max() - margin_lat;
    const double lon_lo = g.lon_min() + margin_lon, lon_hi = g.lon_max() - margin_lon;
    if (lat_hi <= lat_lo || lon_hi <= lon_lo) fail("domain too small to host an eddy of radius " + std::to_string(ed.radius_m / 1000.0) + " km");
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      ed.lat = lat_lo + (lat_hi - lat_lo) * unit(rng);
      ed.lon = lon_lo + (lon_hi - lon_lo) * unit(rng);
      placed = true;
      for (const auto& o : eddies) {
        const double d = geo::haversine_m(ed.lat, ed.lon, o.lat, o.lon);
        if (d < cfg.min_separation_radii * std::max(ed.radius_m, o.radius_m)) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      if (++restarts > max_restarts)
        fail("could not place " + std::to_string(cfg.n_eddies) + " eddies with the requested separation");
      eddies.clear();
      e = static_cast<std::size_t>(-1);
      continue;
    }
    eddies.push_back(ed);
  }
  return eddies;
}

inline Truth generate_truth(const TruthConfig& cfg, const PhysConsts& consts = {}) {
  cfg.validate();
  const auto& g = cfg.spec;
  if (cfg.n_eddies > 0) {
    const double px_km = std::max(g.pixel_km_zonal(), g.pixel_km_meridional());
    if (2.0 * cfg.radius_km.lo / px_km < 4.0)
      fail("grid too coarse: smallest eddy spans fewer than 4 pixels across");
  }
  std::mt19937_64 rng(cfg.seed);
  Truth truth;
  truth.eddies = draw_eddies(cfg, rng);

  truth.ssh = Field(g, Units::meters);
  const double lat_c = g.center_lat();
  for (std::size_t k = 0; k < g.nt; ++k) {
    const double days = g.time(k) - g.t0;
    for (std::size_t i = 0; i < g.nlat; ++i) {
      const double lat = g.lat(i);
      for (std::size_t j = 0; j < g.nlon; ++j) {
        double h = cfg.background_gradient * (lat - lat_c);
        for (const auto& e : truth.eddies) h += e.ssh(days, lat, g.lon(j));
        truth.ssh(k, i, j) = h;
      }
    }
  }
  truth.currents = geostrophic_currents(truth.ssh, consts);

  // Initial SST: cold-north front plus warm/cold cores matching eddy polarity.
  truth.sst = Field(g, Units::celsius);
  const double span = std::max(g.lat_max() - g.lat_min(), g.dlat);
  Field t0slice(g.with_time(g.t0, 1), Units::celsius);
  for (std::size_t i = 0; i < g.nlat; ++i) {
    const double lat = g.lat(i);
    const double front = cfg.sst_mean - 0.5 * cfg.sst_contrast * std::tanh((lat - lat_c) / (0.2 * span));
    for (std::size_t j = 0; j < g.nlon; ++j) {
      double t = front;
      for (const auto& e : truth.eddies) {
        const double shape = e.ssh(0.0, lat, g.lon(j)) / std::abs(e.amplitude_m);
        t += 0.15 * cfg.sst_contrast * shape;
      }
      t0slice(0, i, j) = t;
    }
  }
  truth.sst.set_slice(0, t0slice.values);
  for (std::size_t k = 1; k < g.nt; ++k) {
    VelocityField mid{Field(g.with_time(g.time(k - 1), 1), Units::meters_per_second),
                      Field(g.with_time(g.time(k - 1), 1), Units::meters_per_second)};
    const auto u0 = truth.currents.u.slice(k - 1), u1 = truth.currents.u.slice(k);
    const auto v0 = truth.currents.v.slice(k - 1), v1 = truth.currents.v.slice(k);
    for (std::size_t n = 0; n < g.slice_size(); ++n) {
      mid.u.values[n] = 0.5 * (u0[n] + u1[n]);
      mid.v.values[n] = 0.5 * (v0[n] + v1[n]);
    }
    t0slice = advect_tracer(t0slice, mid, g.dt);
    truth.sst.set_slice(k, t0slice.values);
  }
  return truth;
}

inline void write_truth(const std::filesystem::path& dir, const Truth& t) {
  std::filesystem::create_directories(dir);
  io::write_field(dir / "ssh", t.ssh);
  io::write_field(dir / "sst", t.sst);
  io::write_field(dir / "u", t.currents.u);
  io::write_field(dir / "v", t.currents.v);
}

/// Reads ssh/sst/u/v containers from a directory and checks they align.
inline Truth read_truth(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail_data("truth directory not found: " + dir.string());
  Truth t;
  t.ssh = io::read_field(dir / "ssh");
  t.sst = io::read_field(dir / "sst");
  t.currents.u = io::read_field(dir / "u");
  t.currents.v = io::read_field(dir / "v");
  if (t.ssh.units != Units::meters) fail_data("ssh container must be in meters");
  if (t.sst.units != Units::celsius) fail_data("sst container must be in degC");
  if (t.currents.u.units != Units::meters_per_second || t.currents.v.units != Units::meters_per_second)
    fail_data("current containers must be in m/s");
  const auto& g = t.ssh.spec;
  if (!(t.sst.spec == g) || !(t.currents.u.spec == g) || !(t.currents.v.spec == g))
    fail_data("grid spec mismatch across truth variables");
  return t;
}

}  // namespace osse
