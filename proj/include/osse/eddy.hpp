#pragma once

// Eddy detection from gridded SSH and currents: local normalized angular
// momentum (LNAM), centers at its extrema, characteristic contours taken
// from SSH level sets, truth/estimate matching, scores and tracking.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "osse/contour.hpp"
#include "osse/dynamics.hpp"
#include "osse/error.hpp"
#include "osse/field_io.hpp"
#include "osse/geo.hpp"
#include "osse/grid.hpp"
#include "osse/parallel.hpp"

namespace osse {

struct LnamParams {
  std::size_t neighborhood_half_width = 1;  // pixels; 1 gives a 3x3 square
  double center_threshold = 0.7;
  std::size_t n_levels = 30;
  double search_radius_km = 150.0;  // half size of the contour search box

  void validate() const {
    require(neighborhood_half_width >= 1, "neighborhood half width must be at least 1");
    require(center_threshold > 0.0 && center_threshold <= 1.0, "center threshold must lie in (0, 1]");
    require(n_levels >= 1, "need at least one contour level");
    require(search_radius_km > 0.0, "search radius must be positive");
  }
};

enum class Polarity { cyclone, anticyclone };

inline std::string_view to_string(Polarity p) { return p == Polarity::cyclone ? "cyclone" : "anticyclone"; }

inline Polarity polarity_from_string(std::string_view s) {
  if (s == "cyclone") return Polarity::cyclone;
  if (s == "anticyclone") return Polarity::anticyclone;
  fail_data("unknown polarity '" + std::string(s) + "'");
}

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

struct Eddy {
  Polarity polarity = Polarity::cyclone;
  LatLon center;
  LatLon barycenter;
  std::vector<LatLon> contour;
  double mean_radius_km = 0.0;  // radius of the disc with the contour's area
  double max_radius_km = 0.0;   // largest center-to-contour distance
  double max_velocity = 0.0;    // m/s, largest speed on the contour
  double lnam = 0.0;
  double t = 0.0;
  long track_id = -1;
  double lifetime = 1.0;  // days
};

/// LNAM = L / (|S| + BL) over the square neighborhood of each interior
/// point, with L = sum cross(P, V), S = sum dot(P, V), BL = sum |P||V|.
/// Positions are in meters using the zonal scale of the center row.
/// Points closer than the half width to the boundary and neighborhoods
/// without motion are 0.
inline Field lnam(const VelocityField& vel, const LnamParams& p) {
  p.validate();
  const auto& g = vel.u.spec;
  require(vel.v.spec == g, "u and v grids differ");
  const std::size_t hw = p.neighborhood_half_width;
  if (g.nlat < 2 * hw + 1 || g.nlon < 2 * hw + 1) fail("grid smaller than the LNAM neighborhood");
  Field out(g, Units::dimensionless, 0.0);
  const auto w = static_cast<long>(hw);
  for (std::size_t k = 0; k < g.nt; ++k) {
    const auto u = vel.u.slice(k), v = vel.v.slice(k);
    for (std::size_t i = hw; i + hw < g.nlat; ++i) {
      const double dx = g.dx_m(i), dy = g.dy_m();
      for (std::size_t j = hw; j + hw < g.nlon; ++j) {
        double L = 0.0, S = 0.0, BL = 0.0;
        for (long di = -w; di <= w; ++di) {
          for (long dj = -w; dj <= w; ++dj) {
            if (di == 0 && dj == 0) continue;
            const std::size_t n = (i + static_cast<std::size_t>(di)) * g.nlon + j + static_cast<std::size_t>(dj);
            const double px = static_cast<double>(dj) * dx;
            const double py = -static_cast<double>(di) * dy;
            L += px * v[n] - py * u[n];
            S += px * u[n] + py * v[n];
            BL += std::hypot(px, py) * std::hypot(u[n], v[n]);
          }
        }
        const double den = std::abs(S) + BL;
        out(k, i, j) = den > 0.0 ? L / den : 0.0;
      }
    }
  }
  return out;
}

/// Pixels with |LNAM| above the threshold that dominate their 8 neighbors;
/// on a plateau the lexicographically first pixel wins.
inline std::vector<std::pair<std::size_t, std::size_t>> lnam_centers(std::span<const double> slice,
                                                                     std::size_t nlat, std::size_t nlon,
                                                                     double threshold) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < nlat; ++i) {
    for (std::size_t j = 0; j < nlon; ++j) {
      const double c = slice[i * nlon + j];
      if (!(std::abs(c) > threshold)) continue;
      const double s = c > 0.0 ? 1.0 : -1.0;
      bool ok = true;
      for (int di = -1; di <= 1 && ok; ++di) {
        for (int dj = -1; dj <= 1 && ok; ++dj) {
          if (di == 0 && dj == 0) continue;
          const long ni = static_cast<long>(i) + di, nj = static_cast<long>(j) + dj;
          if (ni < 0 || nj < 0 || ni >= static_cast<long>(nlat) || nj >= static_cast<long>(nlon)) continue;
          const double q = s * slice[static_cast<std::size_t>(ni) * nlon + static_cast<std::size_t>(nj)];
          const bool earlier = di < 0 || (di == 0 && dj < 0);
          if (q > s * c || (q == s * c && earlier)) ok = false;
        }
      }
      if (ok) out.emplace_back(i, j);
    }
  }
  return out;
}

namespace detail {

inline LatLon to_latlon(const GridSpec& g, double row, double col) {
  return {g.lat0 + (static_cast<double>(g.nlat) - 1.0 - row) * g.dlat, g.lon0 + col * g.dlon};
}

}  // namespace detail

/// Detects eddies on one time slice of SSH and its currents. Each LNAM
/// center keeps the closed SSH contour of highest mean speed that encloses
/// it and no other center; centers without one are dropped and counted.
inline std::vector<Eddy> detect(const Field& ssh, const VelocityField& vel, const LnamParams& p,
                                const PhysConsts& consts = {}, Diagnostics* diag = nullptr) {
  p.validate();
  const auto& g = ssh.spec;
  require(g.nt == 1, "detect operates on a single time slice");
  require(vel.u.spec == g && vel.v.spec == g, "SSH and velocity grids differ");
  const Field ln = lnam(vel, p);
  const auto centers = lnam_centers(ln.values, g.nlat, g.nlon, p.center_threshold);
  const auto h = ssh.slice(0);
  std::vector<double> spd(g.slice_size());
  for (std::size_t n = 0; n < spd.size(); ++n) spd[n] = std::hypot(vel.u.values[n], vel.v.values[n]);
  auto speed_at = [&](double row, double col) { return bilinear_at(spd, g.nlat, g.nlon, row, col); };

  const auto half_i = static_cast<std::size_t>(std::ceil(p.search_radius_km / g.pixel_km_meridional()));
  const auto half_j = static_cast<std::size_t>(std::ceil(p.search_radius_km / g.pixel_km_zonal()));

  std::vector<Eddy> out;
  for (const auto& [ci, cj] : centers) {
    const Box box{ci > half_i ? ci - half_i : 0, cj > half_j ? cj - half_j : 0, std::min(g.nlat - 1, ci + half_i),
                  std::min(g.nlon - 1, cj + half_j)};
    const double h0 = h[ci * g.nlon + cj];
    // Outward limit: the box-boundary extreme on the far side from h0.
    double bmin = INFINITY, bmax = -INFINITY, bsum = 0.0;
    std::size_t bn = 0;
    for (std::size_t i = box.i0; i <= box.i1; ++i)
      for (std::size_t j = box.j0; j <= box.j1; ++j)
        if (i == box.i0 || i == box.i1 || j == box.j0 || j == box.j1) {
          const double v = h[i * g.nlon + j];
          if (std::isnan(v)) continue;
          bmin = std::min(bmin, v);
          bmax = std::max(bmax, v);
          bsum += v;
          ++bn;
        }
    if (bn == 0 || std::isnan(h0)) {
      if (diag) diag->count("center_without_contour");
      continue;
    }
    const double limit = h0 > bsum / static_cast<double>(bn) ? bmin : bmax;

    std::optional<Polygon> best;
    double best_speed = -1.0;
    for (std::size_t m = 1; m <= p.n_levels; ++m) {
      const double level = h0 + (limit - h0) * static_cast<double>(m) / static_cast<double>(p.n_levels + 1);
      for (auto& loop : closed_contours(h, g.nlat, g.nlon, level, box)) {
        if (!contains(loop, static_cast<double>(ci), static_cast<double>(cj))) continue;
        bool other = false;
        for (const auto& [oi, oj] : centers)
          if ((oi != ci || oj != cj) && contains(loop, static_cast<double>(oi), static_cast<double>(oj))) {
            other = true;
            break;
          }
        if (other) continue;
        double len = 0.0, acc = 0.0;
        for (std::size_t a = 0, b = loop.size() - 1; a < loop.size(); b = a++) {
          const double dr = (loop[a].row - loop[b].row) * g.dy_m();
          const double mid_row = 0.5 * (loop[a].row + loop[b].row);
          const double dc = (loop[a].col - loop[b].col) * g.dx_m(static_cast<std::size_t>(std::lround(mid_row)));
          const double seg = std::hypot(dr, dc);
          len += seg;
          acc += seg * speed_at(mid_row, 0.5 * (loop[a].col + loop[b].col));
        }
        const double mean_speed = len > 0.0 ? acc / len : 0.0;
        if (mean_speed > best_speed) {
          best_speed = mean_speed;
          best = std::move(loop);
        }
        break;
      }
    }
    if (!best) {
      if (diag) diag->count("center_without_contour");
      continue;
    }

    Eddy e;
    e.t = g.t0;
    e.lnam = ln.values[ci * g.nlon + cj];
    const double f = coriolis(g.lat(ci), consts);
    e.polarity = (e.lnam > 0.0) == (f >= 0.0) ? Polarity::cyclone : Polarity::anticyclone;
    e.center = {g.lat(ci), g.lon(cj)};
    const Vertex c = centroid(*best);
    e.barycenter = detail::to_latlon(g, c.row, c.col);
    const double area_m2 = std::abs(signed_area(*best)) * g.dx_m(static_cast<std::size_t>(std::lround(c.row))) * g.dy_m();
    e.mean_radius_km = std::sqrt(area_m2 / std::numbers::pi) / 1000.0;
    for (const auto& vtx : *best) {
      const LatLon ll = detail::to_latlon(g, vtx.row, vtx.col);
      e.contour.push_back(ll);
      e.max_radius_km =
          std::max(e.max_radius_km, geo::haversine_m(e.center.lat, e.center.lon, ll.lat, ll.lon) / 1000.0);
      e.max_velocity = std::max(e.max_velocity, speed_at(vtx.row, vtx.col));
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Runs detect on every time slice.
inline std::vector<std::vector<Eddy>> detect_all(const Field& ssh, const VelocityField& vel, const LnamParams& p,
                                                 const PhysConsts& consts = {}, std::size_t workers = 1,
                                                 Diagnostics* diag = nullptr) {
  const auto& g = ssh.spec;
  std::vector<std::vector<Eddy>> out(g.nt);
  std::vector<Diagnostics> d(g.nt);
  parallel_for(g.nt, workers, [&](std::size_t k) {
    const VelocityField vk{vel.u.slice_field(k), vel.v.slice_field(k)};
    out[k] = detect(ssh.slice_field(k), vk, p, consts, &d[k]);
  });
  if (diag)
    for (const auto& dk : d)
      for (const auto& [key, v] : dk.counters) diag->count(key, v);
  return out;
}

struct TrackParams {
  double max_jump_km = 30.0;
  double max_gap_days = 1.0;
};

/// Greedy association by nearest barycenter: an eddy extends a track of the
/// same polarity last seen at most max_gap_days + 1 days earlier and within
/// max_jump_km. Assigns track_id and lifetime (last day - first day + 1).
inline std::vector<std::vector<Eddy>> track(std::vector<std::vector<Eddy>> days, const TrackParams& p) {
  struct Track {
    LatLon pos;
    double last_t;
    Polarity pol;
    double first_t;
  };
  std::vector<Track> tracks;
  double prev_t = -INFINITY;
  for (auto& day : days) {
    if (day.empty()) continue;
    const double t = day.front().t;
    for (const auto& e : day) require(e.t == t, "eddies of one day must share a time stamp");
    require(t > prev_t, "days must be in increasing time order");
    prev_t = t;
    struct Cand {
      double d;
      std::size_t tr, ed;
    };
    std::vector<Cand> cands;
    for (std::size_t a = 0; a < tracks.size(); ++a) {
      const auto& tr = tracks[a];
      if (t - tr.last_t > p.max_gap_days + 1.0) continue;
      for (std::size_t b = 0; b < day.size(); ++b) {
        if (day[b].polarity != tr.pol) continue;
        const double d =
            geo::haversine_m(tr.pos.lat, tr.pos.lon, day[b].barycenter.lat, day[b].barycenter.lon) / 1000.0;
        if (d <= p.max_jump_km) cands.push_back({d, a, b});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
      return std::tie(x.d, x.tr, x.ed) < std::tie(y.d, y.tr, y.ed);
    });
    std::vector<bool> tr_used(tracks.size(), false), ed_used(day.size(), false);
    for (const auto& c : cands) {
      if (tr_used[c.tr] || ed_used[c.ed]) continue;
      tr_used[c.tr] = ed_used[c.ed] = true;
      day[c.ed].track_id = static_cast<long>(c.tr);
      tracks[c.tr].pos = day[c.ed].barycenter;
      tracks[c.tr].last_t = t;
    }
    for (std::size_t b = 0; b < day.size(); ++b) {
      if (ed_used[b]) continue;
      day[b].track_id = static_cast<long>(tracks.size());
      tracks.push_back({day[b].barycenter, t, day[b].polarity, t});
    }
  }
  for (auto& day : days)
    for (auto& e : day) {
      const auto& tr = tracks[static_cast<std::size_t>(e.track_id)];
      e.lifetime = tr.last_t - tr.first_t + 1.0;
    }
  return days;
}

struct MatchReport {
  std::vector<std::pair<Eddy, Eddy>> pairs;  // (truth, estimate)
  std::vector<Eddy> unmatched_truth;
  std::vector<Eddy> unmatched_est;
  std::size_t excluded_multi = 0;
  std::size_t truth_total = 0;
  std::size_t est_total = 0;

  void append(const MatchReport& o) {
    pairs.insert(pairs.end(), o.pairs.begin(), o.pairs.end());
    unmatched_truth.insert(unmatched_truth.end(), o.unmatched_truth.begin(), o.unmatched_truth.end());
    unmatched_est.insert(unmatched_est.end(), o.unmatched_est.begin(), o.unmatched_est.end());
    excluded_multi += o.excluded_multi;
    truth_total += o.truth_total;
    est_total += o.est_total;
  }
};

/// Pairs truth T with estimate E when their barycenters are closer than the
/// mean of their mean radii. A truth eddy with several candidates is
/// excluded; each estimate joins at most one pair (closest truth first).
inline MatchReport match(const std::vector<Eddy>& truth, const std::vector<Eddy>& est) {
  MatchReport r;
  r.truth_total = truth.size();
  r.est_total = est.size();
  struct Cand {
    double d;
    std::size_t t, e;
  };
  std::vector<Cand> single;
  std::vector<bool> truth_done(truth.size(), false);
  for (std::size_t a = 0; a < truth.size(); ++a) {
    std::vector<Cand> c;
    for (std::size_t b = 0; b < est.size(); ++b) {
      const double d = geo::haversine_m(truth[a].barycenter.lat, truth[a].barycenter.lon, est[b].barycenter.lat,
                                        est[b].barycenter.lon) /
                       1000.0;
      if (d < 0.5 * (truth[a].mean_radius_km + est[b].mean_radius_km)) c.push_back({d, a, b});
    }
    if (c.size() > 1) {
      ++r.excluded_multi;
      truth_done[a] = true;
    } else if (c.size() == 1) {
      single.push_back(c.front());
    }
  }
  std::sort(single.begin(), single.end(),
            [](const Cand& x, const Cand& y) { return std::tie(x.d, x.t, x.e) < std::tie(y.d, y.t, y.e); });
  std::vector<bool> est_used(est.size(), false);
  for (const auto& c : single) {
    if (est_used[c.e]) continue;
    est_used[c.e] = true;
    truth_done[c.t] = true;
    r.pairs.emplace_back(truth[c.t], est[c.e]);
  }
  for (std::size_t a = 0; a < truth.size(); ++a)
    if (!truth_done[a]) r.unmatched_truth.push_back(truth[a]);
  for (std::size_t b = 0; b < est.size(); ++b)
    if (!est_used[b]) r.unmatched_est.push_back(est[b]);
  return r;
}

/// Undefined ratios (zero denominators) are empty.
struct Scores {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

inline Scores scores(const MatchReport& r) {
  Scores s;
  const double m = static_cast<double>(r.pairs.size());
  if (r.est_total > 0) s.precision = m / static_cast<double>(r.est_total);
  if (r.truth_total > r.excluded_multi) s.recall = m / static_cast<double>(r.truth_total - r.excluded_multi);
  if (s.precision && s.recall && *s.precision + *s.recall > 0.0)
    s.f1 = 2.0 * *s.precision * *s.recall / (*s.precision + *s.recall);
  return s;
}

struct ErrorStats {
  std::size_t n = 0;
  std::optional<double> rmse;
  std::optional<double> bias;  // estimate minus truth
};

enum class EddyProperty { mean_radius, max_radius, max_velocity, lifetime };

inline double property_of(const Eddy& e, EddyProperty p) {
  switch (p) {
    case EddyProperty::mean_radius: return e.mean_radius_km;
    case EddyProperty::max_radius: return e.max_radius_km;
    case EddyProperty::max_velocity: return e.max_velocity;
    case EddyProperty::lifetime: return e.lifetime;
  }
  return 0.0;
}

inline std::string_view to_string(EddyProperty p) {
  switch (p) {
    case EddyProperty::mean_radius: return "mean_radius_km";
    case EddyProperty::max_radius: return "max_radius_km";
    case EddyProperty::max_velocity: return "max_velocity";
    case EddyProperty::lifetime: return "lifetime";
  }
  return "?";
}

inline ErrorStats error_stats(const std::vector<std::pair<Eddy, Eddy>>& pairs, EddyProperty what) {
  ErrorStats s;
  double se = 0.0, sb = 0.0;
  for (const auto& [t, e] : pairs) {
    const double d = property_of(e, what) - property_of(t, what);
    se += d * d;
    sb += d;
    ++s.n;
  }
  if (s.n > 0) {
    s.rmse = std::sqrt(se / static_cast<double>(s.n));
    s.bias = sb / static_cast<double>(s.n);
  }
  return s;
}

struct BinnedErrors {
  EddyProperty error_of;
  EddyProperty binned_by;
  std::vector<double> edges;      // bin b covers [edges[b], edges[b + 1])
  std::vector<ErrorStats> bins;
};

/// Error of one property over matched pairs, grouped by a truth property.
inline BinnedErrors property_errors(const MatchReport& r, EddyProperty error_of, EddyProperty binned_by,
                                    const std::vector<double>& edges) {
  require(edges.size() >= 2 && std::is_sorted(edges.begin(), edges.end()), "bin edges must be sorted, at least 2");
  BinnedErrors out{error_of, binned_by, edges, {}};
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    std::vector<std::pair<Eddy, Eddy>> in;
    for (const auto& pr : r.pairs) {
      const double v = property_of(pr.first, binned_by);
      if (v >= edges[b] && v < edges[b + 1]) in.push_back(pr);
    }
    out.bins.push_back(error_stats(in, error_of));
  }
  return out;
}

// ---- serialization ----

inline nlohmann::json to_json(const Eddy& e) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& v : e.contour) c.push_back({v.lat, v.lon});
  return {{"t", e.t},
          {"polarity", to_string(e.polarity)},
          {"center", {e.center.lat, e.center.lon}},
          {"barycenter", {e.barycenter.lat, e.barycenter.lon}},
          {"mean_radius_km", e.mean_radius_km},
          {"max_radius_km", e.max_radius_km},
          {"max_velocity", e.max_velocity},
          {"lnam", e.lnam},
          {"track_id", e.track_id},
          {"lifetime", e.lifetime},
          {"contour", c}};
}

inline Eddy eddy_from_json(const nlohmann::json& j) {
  try {
    Eddy e;
    e.t = j.at("t").get<double>();
    e.polarity = polarity_from_string(j.at("polarity").get<std::string>());
    e.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
    e.barycenter = {j.at("barycenter").at(0).get<double>(), j.at("barycenter").at(1).get<double>()};
    e.mean_radius_km = j.at("mean_radius_km").get<double>();
    e.max_radius_km = j.at("max_radius_km").get<double>();
    e.max_velocity = j.at("max_velocity").get<double>();
    e.lnam = j.value("lnam", 0.0);
    e.track_id = j.value("track_id", -1L);
    e.lifetime = j.value("lifetime", 1.0);
    for (const auto& v : j.at("contour")) e.contour.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail_data(std::string("malformed eddy record: ") + ex.what());
  }
}

inline void write_eddies_jsonl(const std::filesystem::path& path, const std::vector<std::vector<Eddy>>& days) {
  std::string out;
  for (const auto& day : days)
    for (const auto& e : day) out += to_json(e).dump() + '\n';
  io::write_bytes(path, out);
}

/// Groups records by time stamp, in order of appearance.
inline std::vector<std::vector<Eddy>> read_eddies_jsonl(const std::filesystem::path& path) {
  const std::string text = io::read_bytes(path);
  std::vector<std::vector<Eddy>> days;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      fail_data(path.string() + ": " + ex.what());
    }
    Eddy e = eddy_from_json(j);
    if (days.empty() || days.back().front().t != e.t) days.emplace_back();
    days.back().push_back(std::move(e));
  }
  return days;
}

}  // namespace osse
