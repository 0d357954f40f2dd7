#pragma once

// Local optimal interpolation with a separable Gaussian space-time
// covariance and zero prior mean, plus a nearest-observation baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "osse/error.hpp"
#include "osse/geo.hpp"
#include "osse/grid.hpp"
#include "osse/obs.hpp"
#include "osse/parallel.hpp"

namespace osse {

struct OiParams {
  double length_scale_km = 60.0;
  double time_scale_days = 10.0;
  double signal_var = 1.0;
  double obs_noise_var = 0.0;
  std::size_t max_neighbors = 30;
  double cutoff = 6.0;  // normalized distance beyond which covariance is ignored
  std::size_t workers = 1;

  void validate() const {
    require(length_scale_km > 0.0 && time_scale_days > 0.0 && signal_var > 0.0, "OI scales must be positive");
    require(obs_noise_var >= 0.0, "OI observation noise variance must be non-negative");
    require(max_neighbors >= 1, "OI needs at least one neighbor");
    require(cutoff > 0.0, "OI cutoff must be positive");
  }
};

namespace detail {

/// Observations bucketed on a lattice of normalized coordinates
/// (x / L, y / L, t / tau), with the zonal scale taken at the highest
/// latitude so bucket distances never exceed covariance distances.
class ObsIndex {
 public:
  ObsIndex(std::vector<double> x, std::vector<double> y, std::vector<double> t) {
    const std::size_t m = x.size();
    auto lo = [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); };
    auto hi = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    lo_ = {lo(t), lo(y), lo(x)};
    for (int a = 0; a < 3; ++a) {
      const double span = (a == 0 ? hi(t) : a == 1 ? hi(y) : hi(x)) - lo_[a];
      n_[a] = static_cast<std::size_t>(std::floor(span)) + 1;
    }
    buckets_.resize(n_[0] * n_[1] * n_[2]);
    for (std::size_t k = 0; k < m; ++k) buckets_[flat(cell(0, t[k]), cell(1, y[k]), cell(2, x[k]))].push_back(k);
  }

  /// Shell radius beyond which no bucket exists for this query point.
  long last_shell(double t, double y, double x) const {
    const double q[3] = {t, y, x};
    long r = 0;
    for (int a = 0; a < 3; ++a) {
      const long c = static_cast<long>(std::floor(q[a] - lo_[a]));
      r = std::max({r, std::abs(c), std::abs(c - static_cast<long>(n_[a]) + 1)});
    }
    return r;
  }

  /// Calls fn(n) for all observations in the Chebyshev shell of radius r
  /// (in buckets) around the query point.
  template <class Fn>
  void visit_shell(double t, double y, double x, long r, Fn&& fn) const {
    const long c[3] = {static_cast<long>(std::floor(t - lo_[0])), static_cast<long>(std::floor(y - lo_[1])),
                       static_cast<long>(std::floor(x - lo_[2]))};
    for (long a = c[0] - r; a <= c[0] + r; ++a) {
      if (a < 0 || a >= static_cast<long>(n_[0])) continue;
      for (long b = c[1] - r; b <= c[1] + r; ++b) {
        if (b < 0 || b >= static_cast<long>(n_[1])) continue;
        const bool edge_ab = std::abs(a - c[0]) == r || std::abs(b - c[1]) == r;
        for (long d = c[2] - r; d <= c[2] + r; ++d) {
          if (d < 0 || d >= static_cast<long>(n_[2])) continue;
          if (!edge_ab && std::abs(d - c[2]) != r) {
            d = c[2] + r - 1;  // skip the interior of the shell
            continue;
          }
          for (std::size_t n : buckets_[flat(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                             static_cast<std::size_t>(d))])
            fn(n);
        }
      }
    }
  }

 private:
  std::size_t cell(int axis, double v) const {
    const double f = std::floor(v - lo_[axis]);
    return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n_[axis] - 1)));
  }
  std::size_t flat(std::size_t a, std::size_t b, std::size_t d) const { return (a * n_[1] + b) * n_[2] + d; }

  std::array<double, 3> lo_{};
  std::array<std::size_t, 3> n_{};
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace detail

/// Per grid cell, solves (K + noise I) w = k over the nearest observations
/// (in covariance distance) and returns w . y. Observations further than
/// `cutoff` normalized units are ignored; a cell with none keeps the prior 0.
inline Field oi_reconstruct(const TrackSet& obs, const GridSpec& spec, const OiParams& p) {
  spec.validate();
  p.validate();
  if (obs.empty()) fail("oi_reconstruct needs at least one observation");

  const double L = p.length_scale_km * 1000.0;
  const double tau = p.time_scale_days;
  const std::size_t m = obs.size();
  double max_abs_lat = std::max(std::abs(spec.lat_min()), std::abs(spec.lat_max()));
  std::vector<double> ox(m), oy(m), ot(m), ocos(m), val(m), bx(m), by(m), bt(m);
  for (std::size_t n = 0; n < m; ++n) max_abs_lat = std::max(max_abs_lat, std::abs(obs[n].lat));
  const double cos_min = std::cos(std::min(max_abs_lat, 89.0) * geo::deg2rad);
  for (std::size_t n = 0; n < m; ++n) {
    const auto& s = obs[n];
    ox[n] = s.lon * geo::meters_per_degree;
    oy[n] = s.lat * geo::meters_per_degree;
    ot[n] = s.t;
    ocos[n] = std::cos(s.lat * geo::deg2rad);
    val[n] = s.value;
    bx[n] = ox[n] * cos_min / L;
    by[n] = oy[n] / L;
    bt[n] = ot[n] / tau;
  }
  // Squared covariance distance; zonal scale taken at the mean latitude.
  auto dist2 = [&](double x1, double y1, double c1, double t1, double x2, double y2, double c2, double t2) {
    const double dx = (x2 - x1) * 0.5 * (c1 + c2) / L;
    const double dy = (y2 - y1) / L;
    const double dtn = (t2 - t1) / tau;
    return dx * dx + dy * dy + dtn * dtn;
  };
  const double cutoff = p.cutoff;
  const detail::ObsIndex index(bx, by, bt);

  Field out(spec, Units::meters, 0.0);
  const std::size_t rows = spec.nt * spec.nlat;
  parallel_for(rows, p.workers, [&](std::size_t row) {
    const std::size_t k = row / spec.nlat, i = row % spec.nlat;
    const double lat = spec.lat(i);
    const double cy = lat * geo::meters_per_degree, cc = std::cos(lat * geo::deg2rad), ct = spec.time(k);
    std::vector<std::pair<double, std::size_t>> cand;
    Eigen::MatrixXd A;
    Eigen::VectorXd b, yv;
    for (std::size_t j = 0; j < spec.nlon; ++j) {
      const double cx = spec.lon(j) * geo::meters_per_degree;
      cand.clear();
      // Grow shells until the q-th best candidate is closer than anything
      // the next shell could hold.
      const double qt = ct / tau, qy = cy / L, qx = cx * cos_min / L;
      const long last = index.last_shell(qt, qy, qx);
      for (long r = 0; r <= last; ++r) {
        index.visit_shell(qt, qy, qx, r, [&](std::size_t n) {
          const double d2 = dist2(cx, cy, cc, ct, ox[n], oy[n], ocos[n], ot[n]);
          if (d2 < cutoff * cutoff) cand.emplace_back(d2, n);
        });
        const double reach = static_cast<double>(r);
        if (reach >= cutoff) break;
        if (cand.size() >= p.max_neighbors) {
          std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(p.max_neighbors - 1), cand.end());
          if (cand[p.max_neighbors - 1].first <= reach * reach) break;
        }
      }
      if (cand.empty()) continue;
      const std::size_t q = std::min(cand.size(), p.max_neighbors);
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(q), cand.end());
      A.resize(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
      b.resize(static_cast<Eigen::Index>(q));
      yv.resize(static_cast<Eigen::Index>(q));
      for (std::size_t a = 0; a < q; ++a) {
        const auto na = cand[a].second;
        b(static_cast<Eigen::Index>(a)) = p.signal_var * std::exp(-0.5 * cand[a].first);
        yv(static_cast<Eigen::Index>(a)) = val[na];
        A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = p.signal_var + p.obs_noise_var;
        for (std::size_t c = 0; c < a; ++c) {
          const auto nc = cand[c].second;
          const double cov =
              p.signal_var * std::exp(-0.5 * dist2(ox[na], oy[na], ocos[na], ot[na], ox[nc], oy[nc], ocos[nc], ot[nc]));
          A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) = cov;
          A(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(a)) = cov;
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success) {
        A.diagonal().array() += 1e-10;
        llt.compute(A);
        if (llt.info() != Eigen::Success) fail_numerical("singular local OI system");
      }
      const Eigen::VectorXd w = llt.solve(b);
      out(k, i, j) = w.dot(yv);
    }
  });
  return out;
}

/// Baseline: every cell takes the value of the closest observed raster
/// pixel, with one day counted as `days_to_px` pixels.
inline Field nearest_fill(const Raster& raster, double days_to_px = 1.0) {
  const auto& g = raster.mean.spec;
  struct Obs {
    double k, i, j, v;
  };
  std::vector<Obs> observed;
  for (std::size_t k = 0; k < g.nt; ++k)
    for (std::size_t i = 0; i < g.nlat; ++i)
      for (std::size_t j = 0; j < g.nlon; ++j)
        if (raster.count(k, i, j) > 0.0)
          observed.push_back({static_cast<double>(k) * days_to_px, static_cast<double>(i), static_cast<double>(j),
                              raster.mean(k, i, j)});
  if (observed.empty()) fail("nearest_fill needs at least one observed pixel");
  Field out(g, raster.mean.units, 0.0);
  for (std::size_t k = 0; k < g.nt; ++k) {
    const double fk = static_cast<double>(k) * days_to_px;
    for (std::size_t i = 0; i < g.nlat; ++i) {
      for (std::size_t j = 0; j < g.nlon; ++j) {
        double best = INFINITY, v = 0.0;
        for (const auto& o : observed) {
          const double d = (o.k - fk) * (o.k - fk) + (o.i - static_cast<double>(i)) * (o.i - static_cast<double>(i)) +
                           (o.j - static_cast<double>(j)) * (o.j - static_cast<double>(j));
          if (d < best) {
            best = d;
            v = o.v;
          }
        }
        out(k, i, j) = v;
      }
    }
  }
  return out;
}

}  // namespace osse
