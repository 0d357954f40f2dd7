#pragma once

// Grid geometry, gridded fields, along-track samples and the trilinear
// sampling operator with its adjoint.
//
// Layout convention: values are stored time-major, then latitude rows
// ordered north to south (north-up), then longitude columns west to east.
// lat0/lon0 are the centers of the southernmost row and westernmost column,
// so row i sits at latitude lat0 + (nlat - 1 - i) * dlat.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "osse/error.hpp"
#include "osse/geo.hpp"

namespace osse {

enum class Units { meters, celsius, dimensionless, meters_per_second };

inline std::string_view to_string(Units u) {
  switch (u) {
    case Units::meters: return "m";
    case Units::celsius: return "degC";
    case Units::dimensionless: return "1";
    case Units::meters_per_second: return "m/s";
  }
  return "?";
}

inline Units units_from_string(std::string_view s) {
  if (s == "m") return Units::meters;
  if (s == "degC") return Units::celsius;
  if (s == "1") return Units::dimensionless;
  if (s == "m/s") return Units::meters_per_second;
  fail_data("unknown units tag '" + std::string(s) + "'");
}

struct GridSpec {
  double lat0 = 0.0;  // degrees, southernmost row center
  double lon0 = 0.0;  // degrees, westernmost column center
  double dlat = 1.0;  // degrees per pixel
  double dlon = 1.0;
  std::size_t nlat = 1;
  std::size_t nlon = 1;
  double t0 = 0.0;  // days
  double dt = 1.0;  // days per step
  std::size_t nt = 1;

  /// The 33-43N, 65-55W box at 128x128 and 0.078 degree pixels.
  static GridSpec gulf_stream(std::size_t nt = 21) {
    GridSpec g;
    g.dlat = g.dlon = 10.0 / 128.0;
    g.lat0 = 33.0 + g.dlat / 2.0;
    g.lon0 = -65.0 + g.dlon / 2.0;
    g.nlat = g.nlon = 128;
    g.t0 = 0.0;
    g.dt = 1.0;
    g.nt = nt;
    return g;
  }

  void validate() const {
    require(dlat > 0.0 && dlon > 0.0 && dt > 0.0, "grid spacings must be positive");
    require(nlat >= 1 && nlon >= 1 && nt >= 1, "grid dimensions must be at least 1");
    require(lat_min() > -90.0 && lat_max() < 90.0, "grid latitude range must stay within (-90, 90)");
    require(std::isfinite(lat0) && std::isfinite(lon0) && std::isfinite(t0), "grid origin must be finite");
  }

  std::size_t slice_size() const { return nlat * nlon; }
  std::size_t size() const { return nt * nlat * nlon; }

  double lat(std::size_t row) const { return lat0 + static_cast<double>(nlat - 1 - row) * dlat; }
  double lon(std::size_t col) const { return lon0 + static_cast<double>(col) * dlon; }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

  double lat_min() const { return lat0; }
  double lat_max() const { return lat0 + static_cast<double>(nlat - 1) * dlat; }
  double lon_min() const { return lon0; }
  double lon_max() const { return lon0 + static_cast<double>(nlon - 1) * dlon; }
  double t_max() const { return time(nt - 1); }
  double center_lat() const { return 0.5 * (lat_min() + lat_max()); }
  double center_lon() const { return 0.5 * (lon_min() + lon_max()); }

  /// Fractional row/column/time-step coordinates of a position.
  double row_coord(double lat_deg) const { return (lat_max() - lat_deg) / dlat; }
  double col_coord(double lon_deg) const { return (lon_deg - lon0) / dlon; }
  double time_coord(double t) const { return (t - t0) / dt; }

  /// Zonal and meridional pixel sizes in meters at a given row.
  double dx_m(std::size_t row) const { return dlon * geo::meters_per_degree_lon(lat(row)); }
  double dy_m() const { return dlat * geo::meters_per_degree; }
  /// Characteristic pixel size in km, zonal scale taken at the domain center.
  double pixel_km_zonal() const { return dlon * geo::meters_per_degree_lon(center_lat()) / 1000.0; }
  double pixel_km_meridional() const { return dlat * geo::meters_per_degree / 1000.0; }

  std::size_t index(std::size_t k, std::size_t i, std::size_t j) const { return (k * nlat + i) * nlon + j; }

  bool same_space(const GridSpec& o) const {
    return lat0 == o.lat0 && lon0 == o.lon0 && dlat == o.dlat && dlon == o.dlon && nlat == o.nlat &&
           nlon == o.nlon;
  }
  bool same_time(const GridSpec& o) const { return t0 == o.t0 && dt == o.dt && nt == o.nt; }
  bool operator==(const GridSpec&) const = default;

  GridSpec with_time(double new_t0, std::size_t new_nt) const {
    GridSpec g = *this;
    g.t0 = new_t0;
    g.nt = new_nt;
    return g;
  }
};

/// A time x lat x lon gridded scalar. NaN marks a missing cell.
struct Field {
  GridSpec spec;
  Units units = Units::meters;
  std::vector<double> values;

  Field() = default;
  Field(const GridSpec& s, Units u, double fill = 0.0) : spec(s), units(u), values(s.size(), fill) {
    spec.validate();
  }
  Field(const GridSpec& s, Units u, std::vector<double> v) : spec(s), units(u), values(std::move(v)) {
    spec.validate();
    require(values.size() == spec.size(), "field value count does not match its grid");
  }

  double& operator()(std::size_t k, std::size_t i, std::size_t j) { return values[spec.index(k, i, j)]; }
  double operator()(std::size_t k, std::size_t i, std::size_t j) const { return values[spec.index(k, i, j)]; }

  std::span<double> slice(std::size_t k) {
    return std::span<double>(values).subspan(k * spec.slice_size(), spec.slice_size());
  }
  std::span<const double> slice(std::size_t k) const {
    return std::span<const double>(values).subspan(k * spec.slice_size(), spec.slice_size());
  }

  /// Single time step k as a one-step field.
  Field slice_field(std::size_t k) const {
    auto s = slice(k);
    return Field(spec.with_time(spec.time(k), 1), units, std::vector<double>(s.begin(), s.end()));
  }

  /// Consecutive steps [k0, k0 + n) as a field.
  Field frames(std::size_t k0, std::size_t n) const {
    require(k0 + n <= spec.nt, "frame range exceeds field length");
    const auto ss = spec.slice_size();
    return Field(spec.with_time(spec.time(k0), n), units,
                 std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(k0 * ss),
                                     values.begin() + static_cast<std::ptrdiff_t>((k0 + n) * ss)));
  }

  void set_slice(std::size_t k, std::span<const double> src) {
    require(src.size() == spec.slice_size(), "slice size mismatch");
    std::copy(src.begin(), src.end(), slice(k).begin());
  }
};

struct PointSample {
  double t = 0.0;  // days
  double lat = 0.0;
  double lon = 0.0;
  double value = 0.0;
  int sat_id = 0;
  double seconds_of_day = 0.0;
};

inline bool track_order(const PointSample& a, const PointSample& b) {
  if (a.sat_id != b.sat_id) return a.sat_id < b.sat_id;
  if (a.t != b.t) return a.t < b.t;
  return a.seconds_of_day < b.seconds_of_day;
}

/// Along-track samples kept sorted by (sat_id, t, seconds_of_day).
class TrackSet {
 public:
  TrackSet() = default;
  explicit TrackSet(std::vector<PointSample> samples) : samples_(std::move(samples)) {
    std::stable_sort(samples_.begin(), samples_.end(), track_order);
  }

  std::span<const PointSample> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const PointSample& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(samples_.size());
    for (const auto& s : samples_) v.push_back(s.value);
    return v;
  }

  /// Same support with replaced values.
  TrackSet with_values(std::span<const double> v) const {
    require(v.size() == samples_.size(), "value count does not match track size");
    TrackSet out = *this;
    for (std::size_t i = 0; i < v.size(); ++i) out.samples_[i].value = v[i];
    return out;
  }

  std::vector<int> satellites() const {
    std::vector<int> ids;
    for (const auto& s : samples_)
      if (ids.empty() || ids.back() != s.sat_id) ids.push_back(s.sat_id);
    return ids;
  }

  template <class Pred>
  TrackSet filter(Pred&& keep) const {
    std::vector<PointSample> out;
    for (const auto& s : samples_)
      if (keep(s)) out.push_back(s);
    TrackSet ts;
    ts.samples_ = std::move(out);  // order is inherited
    return ts;
  }

  bool operator==(const TrackSet& o) const {
    return std::equal(samples_.begin(), samples_.end(), o.samples_.begin(), o.samples_.end(),
                      [](const PointSample& a, const PointSample& b) {
                        return a.t == b.t && a.lat == b.lat && a.lon == b.lon && a.value == b.value &&
                               a.sat_id == b.sat_id && a.seconds_of_day == b.seconds_of_day;
                      });
  }

 private:
  std::vector<PointSample> samples_;
};

namespace detail {

struct AxisWeights {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double w = 0.0;  // weight of hi
};

inline AxisWeights axis_weights(double f, std::size_t n) {
  if (n == 1) return {0, 0, 0.0};
  f = std::clamp(f, 0.0, static_cast<double>(n - 1));
  const auto lo = std::min(static_cast<std::size_t>(std::floor(f)), n - 2);
  return {lo, lo + 1, f - static_cast<double>(lo)};
}

}  // namespace detail

/// The eight grid cells and weights that trilinearly blend into one sample.
struct Stencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
};

inline Stencil trilinear_stencil(const GridSpec& g, double t, double lat, double lon) {
  const double ft = g.time_coord(t);
  if (!(ft >= -1.0 && ft <= static_cast<double>(g.nt))) {
    fail_data("sample time " + std::to_string(t) + " lies more than one step outside the grid time range");
  }
  const auto at = detail::axis_weights(ft, g.nt);
  const auto ai = detail::axis_weights(g.row_coord(lat), g.nlat);
  const auto aj = detail::axis_weights(g.col_coord(lon), g.nlon);
  Stencil s;
  int n = 0;
  for (int a = 0; a < 2; ++a) {
    const std::size_t k = a ? at.hi : at.lo;
    const double wk = a ? at.w : 1.0 - at.w;
    for (int b = 0; b < 2; ++b) {
      const std::size_t i = b ? ai.hi : ai.lo;
      const double wi = b ? ai.w : 1.0 - ai.w;
      for (int c = 0; c < 2; ++c) {
        const std::size_t j = c ? aj.hi : aj.lo;
        const double wj = c ? aj.w : 1.0 - aj.w;
        s.index[n] = g.index(k, i, j);
        s.weight[n] = wk * wi * wj;
        ++n;
      }
    }
  }
  return s;
}

/// Trilinear sampling of a grid at a fixed support, stored as stencils so the
/// forward and adjoint actions share exactly the same weights.
class TrilinearOperator {
 public:
  TrilinearOperator() = default;
  TrilinearOperator(const GridSpec& g, const TrackSet& points) : spec_(g) {
    g.validate();
    stencils_.reserve(points.size());
    for (const auto& p : points) stencils_.push_back(trilinear_stencil(g, p.t, p.lat, p.lon));
  }

  const GridSpec& spec() const { return spec_; }
  std::size_t rows() const { return stencils_.size(); }

  std::vector<double> forward(std::span<const double> field) const {
    require(field.size() == spec_.size(), "field size does not match sampling grid");
    std::vector<double> out(stencils_.size());
    for (std::size_t p = 0; p < stencils_.size(); ++p) {
      const auto& s = stencils_[p];
      double acc = 0.0;
      for (int n = 0; n < 8; ++n) {
        if (s.weight[n] == 0.0) continue;
        const double v = field[s.index[n]];
        if (std::isnan(v)) fail_data("masked cell under support");
        acc += s.weight[n] * v;
      }
      out[p] = acc;
    }
    return out;
  }

  /// Accumulates H^T r into out.
  void adjoint_add(std::span<const double> residuals, std::span<double> out) const {
    require(residuals.size() == stencils_.size(), "residual count does not match point count");
    require(out.size() == spec_.size(), "output size does not match sampling grid");
    for (std::size_t p = 0; p < stencils_.size(); ++p) {
      const auto& s = stencils_[p];
      for (int n = 0; n < 8; ++n) out[s.index[n]] += s.weight[n] * residuals[p];
    }
  }

 private:
  GridSpec spec_;
  std::vector<Stencil> stencils_;
};

inline std::vector<double> sample_trilinear(const Field& field, const TrackSet& points) {
  if (points.empty()) return {};
  return TrilinearOperator(field.spec, points).forward(field.values);
}

inline Field scatter_adjoint(const TrackSet& points, std::span<const double> residuals, const GridSpec& spec,
                             Units units = Units::meters) {
  require(residuals.size() == points.size(), "residual count does not match point count");
  Field out(spec, units, 0.0);
  if (points.empty()) return out;
  TrilinearOperator(spec, points).adjoint_add(residuals, out.values);
  return out;
}

/// Bilinear value of a north-up 2-D slice at fractional (row, col), clamped to the slice.
inline double bilinear_at(std::span<const double> slice, std::size_t nlat, std::size_t nlon, double row,
                          double col) {
  const auto ai = detail::axis_weights(row, nlat);
  const auto aj = detail::axis_weights(col, nlon);
  const double v00 = slice[ai.lo * nlon + aj.lo];
  const double v01 = slice[ai.lo * nlon + aj.hi];
  const double v10 = slice[ai.hi * nlon + aj.lo];
  const double v11 = slice[ai.hi * nlon + aj.hi];
  // std::lerp keeps constants exact and stays within the endpoint range.
  return std::lerp(std::lerp(v00, v01, aj.w), std::lerp(v10, v11, aj.w), ai.w);
}

/// Spatial bilinear resampling of one slice onto another grid's (lat, lon) nodes.
inline std::vector<double> resample_slice(std::span<const double> src, const GridSpec& from, const GridSpec& to) {
  std::vector<double> out(to.slice_size());
  for (std::size_t i = 0; i < to.nlat; ++i) {
    const double row = from.row_coord(to.lat(i));
    for (std::size_t j = 0; j < to.nlon; ++j) {
      out[i * to.nlon + j] = bilinear_at(src, from.nlat, from.nlon, row, from.col_coord(to.lon(j)));
    }
  }
  return out;
}

inline Field regrid_bilinear(const Field& field, const GridSpec& target) {
  target.validate();
  require(field.spec.same_time(target), "regrid_bilinear resamples space only; time axes must match");
  const auto& s = field.spec;
  const double eps_lat = 1e-9 * std::max(1.0, s.lat_max() - s.lat_min());
  const double eps_lon = 1e-9 * std::max(1.0, s.lon_max() - s.lon_min());
  if (target.lat_min() < s.lat_min() - eps_lat || target.lat_max() > s.lat_max() + eps_lat ||
      target.lon_min() < s.lon_min() - eps_lon || target.lon_max() > s.lon_max() + eps_lon) {
    fail("extrapolation not supported");
  }
  if (s.same_space(target)) return field;
  Field out(target, field.units, 0.0);
  for (std::size_t k = 0; k < s.nt; ++k) out.set_slice(k, resample_slice(field.slice(k), s, target));
  return out;
}

}  // namespace osse
