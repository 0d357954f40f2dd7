#pragma once

// Observation operators: along-track SSH sampling with instrumental noise,
// cloud-dependent SST degradation, track rasterization, support
// desynchronization and SST deseasonalization. Also a simple generator of
// inclined nadir ground tracks for desk-scale experiments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "osse/error.hpp"
#include "osse/geo.hpp"
#include "osse/grid.hpp"

namespace osse {

struct SshObsParams {
  double sigma_noise = 0.019;  // m
  std::uint64_t seed = 11;
};

struct SstObsParams {
  double sigma_t = 1.23;          // days
  double sigma_x = 16.0;          // km
  std::size_t noise_coarse_n = 32;
  double noise_sigma = 0.35;      // degC, tunable
  double cloud_smooth_km = 43.0;
  std::uint64_t seed = 13;
};

/// Y = H(X, support) + eps with eps ~ N(0, sigma).
inline TrackSet simulate_ssh_obs(const Field& truth_ssh, const TrackSet& support, const SshObsParams& p) {
  require(p.sigma_noise >= 0.0, "sigma_noise must be non-negative");
  if (support.empty()) return {};
  auto values = sample_trilinear(truth_ssh, support);
  if (p.sigma_noise > 0.0) {
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> noise(0.0, p.sigma_noise);
    for (auto& v : values) v += noise(rng);
  }
  return support.with_values(values);
}

/// Shifts every sample time by delay and wraps it into [t0, t0 + range_len).
inline TrackSet shift_support(const TrackSet& support, double delay, double t0, double range_len) {
  require(range_len > 0.0, "time range length must be positive");
  const double shift = std::fmod(delay, range_len);
  std::vector<PointSample> out(support.begin(), support.end());
  for (auto& s : out) {
    double x = (s.t - t0) + shift;
    if (x < 0.0 || x >= range_len) {
      x = std::fmod(x, range_len);
      if (x < 0.0) x += range_len;
    }
    s.t = t0 + x;
  }
  return TrackSet(std::move(out));
}

struct Raster {
  Field mean;   // zero where nothing was observed
  Field count;  // samples per cell
};

/// Daily per-pixel averages of the samples; samples are binned to the
/// nearest grid node in time and space and dropped outside the grid.
inline Raster rasterize_tracks(const TrackSet& obs, const GridSpec& spec) {
  spec.validate();
  require(spec.dt == 1.0, "rasterize_tracks expects a daily grid (dt = 1)");
  Raster r{Field(spec, Units::meters, 0.0), Field(spec, Units::dimensionless, 0.0)};
  for (const auto& s : obs) {
    const double k = std::round(spec.time_coord(s.t));
    const double i = std::round(spec.row_coord(s.lat));
    const double j = std::round(spec.col_coord(s.lon));
    if (k < 0 || i < 0 || j < 0 || k >= static_cast<double>(spec.nt) || i >= static_cast<double>(spec.nlat) ||
        j >= static_cast<double>(spec.nlon))
      continue;
    const auto n = spec.index(static_cast<std::size_t>(k), static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    r.mean.values[n] += s.value;
    r.count.values[n] += 1.0;
  }
  for (std::size_t n = 0; n < spec.size(); ++n)
    if (r.count.values[n] > 0.0) r.mean.values[n] /= r.count.values[n];
  return r;
}

namespace detail {

inline std::size_t mirror_index(std::ptrdiff_t idx, std::size_t n) {
  if (n == 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(n - 1);
  while (idx < 0 || idx > last) {
    if (idx < 0) idx = -idx;
    if (idx > last) idx = 2 * last - idx;
  }
  return static_cast<std::size_t>(idx);
}

inline std::vector<double> gaussian_kernel(double sigma_px) {
  if (!(sigma_px > 1e-9)) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_px));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t m = -radius; m <= radius; ++m) {
    const double w = std::exp(-0.5 * static_cast<double>(m * m) / (sigma_px * sigma_px));
    k[static_cast<std::size_t>(m + radius)] = w;
    sum += w;
  }
  for (auto& w : k) w /= sum;
  return k;
}

/// Convolves `values` along one axis described by (count, stride, outer
/// loops); boundary either mirrored or clamped.
inline void convolve_axis(std::vector<double>& values, const std::vector<double>& kernel, std::size_t n,
                          std::size_t stride, std::size_t outer, std::size_t outer_stride, std::size_t inner,
                          bool mirror) {
  if (kernel.size() == 1) return;
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  std::vector<double> line(n), out(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * outer_stride + in;
      for (std::size_t m = 0; m < n; ++m) line[m] = values[base + m * stride];
      for (std::size_t m = 0; m < n; ++m) {
        double acc = 0.0;
        for (std::ptrdiff_t q = -radius; q <= radius; ++q) {
          const auto idx = static_cast<std::ptrdiff_t>(m) + q;
          std::size_t src;
          if (mirror) {
            src = mirror_index(idx, n);
          } else {
            src = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(n) - 1));
          }
          acc += kernel[static_cast<std::size_t>(q + radius)] * line[src];
        }
        out[m] = acc;
      }
      for (std::size_t m = 0; m < n; ++m) values[base + m * stride] = out[m];
    }
  }
}

}  // namespace detail

/// Separable space-time Gaussian blur truncated at 4 sigma; mirrored in
/// space, clamped in time. Sigmas are given in pixels/steps.
inline Field gaussian_blur(const Field& f, double sigma_t_steps, double sigma_lat_px, double sigma_lon_px) {
  const auto& g = f.spec;
  Field out = f;
  // Time pass first, one sequential sweep per pixel column.
  detail::convolve_axis(out.values, detail::gaussian_kernel(sigma_t_steps), g.nt, g.slice_size(), 1, 0,
                        g.slice_size(), false);
  for (std::size_t k = 0; k < g.nt; ++k) {
    const std::size_t off = k * g.slice_size();
    std::vector<double> slice(out.values.begin() + static_cast<std::ptrdiff_t>(off),
                              out.values.begin() + static_cast<std::ptrdiff_t>(off + g.slice_size()));
    detail::convolve_axis(slice, detail::gaussian_kernel(sigma_lat_px), g.nlat, g.nlon, 1, 0, g.nlon, true);
    detail::convolve_axis(slice, detail::gaussian_kernel(sigma_lon_px), g.nlon, 1, g.nlat, g.nlon, 1, true);
    std::copy(slice.begin(), slice.end(), out.values.begin() + static_cast<std::ptrdiff_t>(off));
  }
  return out;
}

/// Width in pixels of a box filter spanning `km`, rounded and forced odd.
inline std::size_t box_width_px(double km, double pixel_km) {
  auto w = static_cast<std::size_t>(std::max(1.0, std::round(km / pixel_km)));
  if (w % 2 == 0) ++w;
  return w;
}

/// Spatial box mean over the cells of a (w x w) window that fall inside the grid.
inline std::vector<double> box_mean(std::span<const double> slice, std::size_t nlat, std::size_t nlon, std::size_t w) {
  const auto h = static_cast<std::ptrdiff_t>(w / 2);
  std::vector<double> out(slice.size());
  for (std::size_t i = 0; i < nlat; ++i) {
    for (std::size_t j = 0; j < nlon; ++j) {
      double acc = 0.0;
      int cnt = 0;
      for (std::ptrdiff_t di = -h; di <= h; ++di) {
        const auto ii = static_cast<std::ptrdiff_t>(i) + di;
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(nlat)) continue;
        for (std::ptrdiff_t dj = -h; dj <= h; ++dj) {
          const auto jj = static_cast<std::ptrdiff_t>(j) + dj;
          if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(nlon)) continue;
          acc += slice[static_cast<std::size_t>(ii) * nlon + static_cast<std::size_t>(jj)];
          ++cnt;
        }
      }
      out[i * nlon + j] = std::clamp(acc / cnt, 0.0, 1.0);
    }
  }
  return out;
}

/// Brings raw cloud fractions onto `spec`: spatial bilinear regrid, periodic
/// temporal tiling, then a box mean about smooth_km wide.
inline Field prepare_cloud_cover(const Field& raw, const GridSpec& spec, double smooth_km) {
  spec.validate();
  for (double c : raw.values)
    if (!(c >= 0.0 && c <= 1.0)) fail_data("raw cloud cover outside [0, 1]");
  const std::size_t w = box_width_px(smooth_km, spec.pixel_km_zonal());
  Field out(spec, Units::dimensionless, 0.0);
  for (std::size_t k = 0; k < spec.nt; ++k) {
    const auto src = raw.slice(k % raw.spec.nt);
    const auto regridded = raw.spec.same_space(spec) ? std::vector<double>(src.begin(), src.end())
                                                    : resample_slice(src, raw.spec, spec);
    out.set_slice(k, box_mean(regridded, spec.nlat, spec.nlon, w));
  }
  return out;
}

/// Correlated noise: per time step, white Gaussian on an n x n grid spanning
/// the domain, bilinearly upsampled.
inline Field coarse_noise(const GridSpec& spec, std::size_t n, double sigma, std::uint64_t seed, Units units) {
  require(n >= 2, "coarse noise grid needs at least 2 nodes per side");
  Field out(spec, units, 0.0);
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<double> coarse(n * n);
  const double si = spec.nlat > 1 ? static_cast<double>(n - 1) / static_cast<double>(spec.nlat - 1) : 0.0;
  const double sj = spec.nlon > 1 ? static_cast<double>(n - 1) / static_cast<double>(spec.nlon - 1) : 0.0;
  for (std::size_t k = 0; k < spec.nt; ++k) {
    for (auto& c : coarse) c = normal(rng);
    auto slice = out.slice(k);
    for (std::size_t i = 0; i < spec.nlat; ++i)
      for (std::size_t j = 0; j < spec.nlon; ++j)
        slice[i * spec.nlon + j] =
            bilinear_at(coarse, n, n, static_cast<double>(i) * si, static_cast<double>(j) * sj);
  }
  return out;
}

/// Y = (1 - C)(X + eps) + C * G(X + eps), with the same noise realization in
/// both branches.
inline Field simulate_sst_obs(const Field& truth_sst, const Field& cloud, const SstObsParams& p) {
  require(p.sigma_t > 0.0 && p.sigma_x > 0.0 && p.noise_coarse_n > 0 && p.noise_sigma >= 0.0,
          "SST operator parameters must be positive");
  const auto& g = truth_sst.spec;
  require(cloud.spec.same_space(g) && cloud.spec.nt == g.nt, "cloud cover and SST grids are not aligned");
  for (double c : cloud.values)
    if (!(c >= 0.0 && c <= 1.0)) fail_data("cloud cover outside [0, 1]");

  Field noisy = truth_sst;
  const Field eps = coarse_noise(g, std::max<std::size_t>(2, p.noise_coarse_n), p.noise_sigma, p.seed, truth_sst.units);
  for (std::size_t n = 0; n < noisy.values.size(); ++n) noisy.values[n] += eps.values[n];

  const Field blurred = gaussian_blur(noisy, p.sigma_t / g.dt, p.sigma_x / g.pixel_km_meridional(),
                                      p.sigma_x / g.pixel_km_zonal());
  Field out(g, truth_sst.units, 0.0);
  for (std::size_t n = 0; n < out.values.size(); ++n) {
    const double c = cloud.values[n];
    out.values[n] = (1.0 - c) * noisy.values[n] + c * blurred.values[n];
  }
  return out;
}

inline std::size_t period_steps(const GridSpec& g, double period_days) {
  require(period_days > 0.0, "period must be positive");
  const double steps = period_days / g.dt;
  const double r = std::round(steps);
  require(r >= 1.0 && std::abs(steps - r) < 1e-9, "period must be a whole number of time steps");
  return static_cast<std::size_t>(r);
}

/// Mean image per day of the period: clim[d] = mean of slices k with k mod P = d.
inline Field build_climatology(const Field& sst, double period_days) {
  const auto& g = sst.spec;
  const std::size_t P = period_steps(g, period_days);
  if (g.nt < P) fail("record shorter than one climatological period");
  Field clim(g.with_time(g.t0, P), sst.units, 0.0);
  std::vector<double> counts(P, 0.0);
  for (std::size_t k = 0; k < g.nt; ++k) {
    auto dst = clim.slice(k % P);
    const auto src = sst.slice(k);
    for (std::size_t n = 0; n < dst.size(); ++n) dst[n] += src[n];
    counts[k % P] += 1.0;
  }
  for (std::size_t d = 0; d < P; ++d)
    for (auto& v : clim.slice(d)) v /= counts[d];
  return clim;
}

inline Field deseasonalize(const Field& sst, const Field& clim) {
  require(clim.spec.same_space(sst.spec) && clim.spec.dt == sst.spec.dt, "climatology grid does not match");
  const std::size_t P = clim.spec.nt;
  Field out = sst;
  for (std::size_t k = 0; k < sst.spec.nt; ++k) {
    auto dst = out.slice(k);
    const auto c = clim.slice(k % P);
    for (std::size_t n = 0; n < dst.size(); ++n) dst[n] -= c[n];
  }
  return out;
}

struct TrackGenParams {
  int n_satellites = 3;
  int passes_per_day = 2;
  double ground_speed_km_s = 6.5;
  double sample_interval_s = 1.0;
  double track_angle_deg = 20.0;  // from north
  std::uint64_t seed = 7;
};

/// Straight inclined ground tracks crossing the domain, alternating
/// ascending and descending passes, with crossing offsets that sweep the
/// domain from day to day.
inline TrackSet synthesize_tracks(const GridSpec& spec, const TrackGenParams& p) {
  spec.validate();
  require(p.n_satellites >= 1 && p.passes_per_day >= 1, "need at least one satellite and one pass per day");
  require(p.ground_speed_km_s > 0.0 && p.sample_interval_s > 0.0, "track speed and sampling must be positive");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> sat_phase(static_cast<std::size_t>(p.n_satellites));
  for (auto& ph : sat_phase) ph = unit(rng);

  const double lat_c = spec.center_lat(), lon_c = spec.center_lon();
  const double mlat = geo::meters_per_degree, mlon = geo::meters_per_degree_lon(lat_c);
  const double half_w = 0.5 * (spec.lon_max() - spec.lon_min()) * mlon;
  const double half_h = 0.5 * (spec.lat_max() - spec.lat_min()) * mlat;
  const double reach = std::hypot(half_w, half_h) + half_w;
  const double step_m = p.ground_speed_km_s * 1000.0 * p.sample_interval_s;
  const double a = p.track_angle_deg * geo::deg2rad;
  const double golden = 0.6180339887498949;

  std::vector<PointSample> out;
  for (int s = 0; s < p.n_satellites; ++s) {
    for (std::size_t day = 0; day < spec.nt; ++day) {
      for (int pass = 0; pass < p.passes_per_day; ++pass) {
        const double phase = std::fmod(sat_phase[static_cast<std::size_t>(s)] + golden * static_cast<double>(day) +
                                           static_cast<double>(pass) / p.passes_per_day,
                                       1.0);
        const double x_cross = (phase - 0.5) * 2.4 * half_w;
        const bool ascending = pass % 2 == 0;
        const double dirx = std::sin(a), diry = ascending ? std::cos(a) : -std::cos(a);
        const double sod0 =
            std::fmod(3600.0 * (1.0 + 5.0 * s + 11.0 * pass) + 1800.0 * unit(rng), 80000.0);
        const auto n_steps = static_cast<long>(2.0 * reach / step_m);
        long m_in = 0;
        for (long m = 0; m <= n_steps; ++m) {
          const double along = -reach + static_cast<double>(m) * step_m;
          const double x = x_cross + along * dirx, y = along * diry;
          const double lat = lat_c + y / mlat, lon = lon_c + x / mlon;
          if (lat < spec.lat_min() || lat > spec.lat_max() || lon < spec.lon_min() || lon > spec.lon_max()) continue;
          PointSample ps;
          ps.sat_id = s;
          ps.seconds_of_day = sod0 + static_cast<double>(m_in) * p.sample_interval_s;
          ps.t = spec.time(day) + ps.seconds_of_day / geo::seconds_per_day;
          ps.lat = lat;
          ps.lon = lon;
          out.push_back(ps);
          ++m_in;
        }
      }
    }
  }
  return TrackSet(std::move(out));
}

/// Binary cloud masks from thresholded smooth random fields, for runs with
/// no cloud product at hand.
inline Field synthesize_cloud_cover(const GridSpec& spec, double cloud_fraction, std::uint64_t seed) {
  require(cloud_fraction >= 0.0 && cloud_fraction <= 1.0, "cloud fraction must lie in [0, 1]");
  Field noise = coarse_noise(spec, 8, 1.0, seed, Units::dimensionless);
  Field out(spec, Units::dimensionless, 0.0);
  for (std::size_t k = 0; k < spec.nt; ++k) {
    auto src = noise.slice(k);
    std::vector<double> sorted(src.begin(), src.end());
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<std::size_t>(std::clamp((1.0 - cloud_fraction) * static_cast<double>(sorted.size()), 0.0,
                                                         static_cast<double>(sorted.size() - 1)));
    const double thr = cloud_fraction >= 1.0 ? -INFINITY : (cloud_fraction <= 0.0 ? INFINITY : sorted[idx]);
    auto dst = out.slice(k);
    for (std::size_t n = 0; n < dst.size(); ++n) dst[n] = src[n] >= thr ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace osse
