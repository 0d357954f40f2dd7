#pragma once

// Geostrophic diagnostics on equirectangular grids: Coriolis factor, surface
// currents from SSH and relative vorticity.

#include <cmath>
#include <span>
#include <vector>

#include "osse/error.hpp"
#include "osse/geo.hpp"
#include "osse/grid.hpp"

namespace osse {

struct PhysConsts {
  double g = 9.81;               // m/s^2
  double omega_r = 7.2921159e-5;  // rad/s
};

/// Eastward (u) and northward (v) current components on a shared grid.
struct VelocityField {
  Field u;
  Field v;

  const GridSpec& spec() const { return u.spec; }
  VelocityField slice_field(std::size_t k) const { return {u.slice_field(k), v.slice_field(k)}; }
};

inline double coriolis(double lat_deg, const PhysConsts& c = {}) {
  require(std::abs(lat_deg) <= 90.0, "latitude outside [-90, 90]");
  return 2.0 * c.omega_r * std::sin(lat_deg * geo::deg2rad);
}

/// Geostrophy is unreliable close to the equator.
inline bool geostrophy_unreliable(double lat_deg) { return std::abs(lat_deg) < 5.0; }

namespace detail {

/// Second-order derivative of samples spaced by h: centered inside,
/// one-sided three-point at both ends.
inline double diff_at(std::size_t n, std::size_t idx, double h, auto&& at) {
  if (n == 1) return 0.0;
  if (n == 2) return (at(1) - at(0)) / h;
  // Differences first so constants give exactly zero.
  if (idx == 0) return (4.0 * (at(1) - at(0)) - (at(2) - at(0))) / (2.0 * h);
  if (idx == n - 1) return (4.0 * (at(n - 1) - at(n - 2)) - (at(n - 1) - at(n - 3))) / (2.0 * h);
  return (at(idx + 1) - at(idx - 1)) / (2.0 * h);
}

}  // namespace detail

/// Eastward derivative of a north-up slice, in units per meter.
inline std::vector<double> ddx(std::span<const double> slice, const GridSpec& g) {
  std::vector<double> out(g.slice_size());
  for (std::size_t i = 0; i < g.nlat; ++i) {
    const double h = g.dx_m(i);
    const double* row = slice.data() + i * g.nlon;
    for (std::size_t j = 0; j < g.nlon; ++j)
      out[i * g.nlon + j] = detail::diff_at(g.nlon, j, h, [row](std::size_t m) { return row[m]; });
  }
  return out;
}

/// Northward derivative of a north-up slice, in units per meter.
inline std::vector<double> ddy(std::span<const double> slice, const GridSpec& g) {
  std::vector<double> out(g.slice_size());
  // Row index grows southward, hence the negative spacing.
  const double h = -g.dy_m();
  for (std::size_t j = 0; j < g.nlon; ++j) {
    for (std::size_t i = 0; i < g.nlat; ++i)
      out[i * g.nlon + j] =
          detail::diff_at(g.nlat, i, h, [&](std::size_t m) { return slice[m * g.nlon + j]; });
  }
  return out;
}

inline VelocityField geostrophic_currents(const Field& ssh, const PhysConsts& c = {},
                                          Diagnostics* diag = nullptr) {
  require(ssh.units == Units::meters, "geostrophic_currents expects SSH in meters");
  const auto& g = ssh.spec;
  std::vector<double> g_over_f(g.nlat);
  for (std::size_t i = 0; i < g.nlat; ++i) {
    const double f = coriolis(g.lat(i), c);
    if (f == 0.0) fail_numerical("Coriolis factor vanishes inside the domain");
    if (diag && geostrophy_unreliable(g.lat(i))) diag->count("rows_near_equator");
    g_over_f[i] = c.g / f;
  }
  if (diag && diag->counter("rows_near_equator") > 0) diag->warn("geostrophy unreliable within 5 degrees of the equator");

  VelocityField vel{Field(g, Units::meters_per_second), Field(g, Units::meters_per_second)};
  for (std::size_t k = 0; k < g.nt; ++k) {
    const auto hx = ddx(ssh.slice(k), g);
    const auto hy = ddy(ssh.slice(k), g);
    auto u = vel.u.slice(k);
    auto v = vel.v.slice(k);
    for (std::size_t i = 0; i < g.nlat; ++i) {
      for (std::size_t j = 0; j < g.nlon; ++j) {
        const std::size_t n = i * g.nlon + j;
        u[n] = -g_over_f[i] * hy[n];
        v[n] = g_over_f[i] * hx[n];
      }
    }
  }
  return vel;
}

/// xi = dv/dx - du/dy, optionally divided by the local Coriolis factor.
inline Field relative_vorticity(const VelocityField& vel, bool normalize_by_f, const PhysConsts& c = {}) {
  const auto& g = vel.spec();
  require(vel.v.spec == g, "u and v must share one grid");
  // Unnormalized vorticity is in 1/s; the units tag has no separate entry for it.
  Field xi(g, Units::dimensionless);
  for (std::size_t k = 0; k < g.nt; ++k) {
    const auto vx = ddx(vel.v.slice(k), g);
    const auto uy = ddy(vel.u.slice(k), g);
    auto out = xi.slice(k);
    for (std::size_t i = 0; i < g.nlat; ++i) {
      const double scale = normalize_by_f ? 1.0 / coriolis(g.lat(i), c) : 1.0;
      for (std::size_t j = 0; j < g.nlon; ++j) {
        const std::size_t n = i * g.nlon + j;
        out[n] = (vx[n] - uy[n]) * scale;
      }
    }
  }
  return xi;
}

/// Geostrophic speed |w| per cell.
inline Field speed(const VelocityField& vel) {
  Field s(vel.spec(), Units::meters_per_second);
  for (std::size_t n = 0; n < s.values.size(); ++n) s.values[n] = std::hypot(vel.u.values[n], vel.v.values[n]);
  return s;
}

}  // namespace osse
