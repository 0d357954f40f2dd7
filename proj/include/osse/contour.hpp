#pragma once

// Closed iso-lines of a gridded slice by marching squares with linear
// edge interpolation, plus small polygon helpers. Coordinates are
// fractional (row, col) pixel positions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace osse {

struct Vertex {
  double row = 0.0;
  double col = 0.0;
};

using Polygon = std::vector<Vertex>;  // closed; last vertex not repeated

struct Box {
  std::size_t i0, j0, i1, j1;  // inclusive node bounds
};

namespace detail {

// Horizontal edge (i,j)-(i,j+1) -> 2*(i*nj+j); vertical edge (i,j)-(i+1,j) -> 2*(i*nj+j)+1.
inline std::uint64_t hedge(std::size_t i, std::size_t j, std::size_t nj) { return 2 * (i * nj + j); }
inline std::uint64_t vedge(std::size_t i, std::size_t j, std::size_t nj) { return 2 * (i * nj + j) + 1; }

}  // namespace detail

/// Closed loops of slice == level inside the node box. Loops touching the
/// box boundary or a NaN cell stay open and are dropped.
inline std::vector<Polygon> closed_contours(std::span<const double> slice, std::size_t nlat, std::size_t nlon,
                                            double level, const Box& box) {
  const std::size_t nj = nlon;
  auto at = [&](std::size_t i, std::size_t j) { return slice[i * nj + j]; };
  auto above = [&](double v) { return v >= level; };
  auto cross = [&](std::size_t ia, std::size_t ja, std::size_t ib, std::size_t jb) {
    const double va = at(ia, ja), vb = at(ib, jb);
    const double t = (level - va) / (vb - va);
    return Vertex{static_cast<double>(ia) + t * (static_cast<double>(ib) - static_cast<double>(ia)),
                  static_cast<double>(ja) + t * (static_cast<double>(jb) - static_cast<double>(ja))};
  };

  std::unordered_map<std::uint64_t, Vertex> points;
  std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> links;
  auto add_segment = [&](std::uint64_t a, std::uint64_t b) {
    links[a].push_back(b);
    links[b].push_back(a);
  };

  for (std::size_t i = box.i0; i < box.i1 && i + 1 < nlat; ++i) {
    for (std::size_t j = box.j0; j < box.j1 && j + 1 < nlon; ++j) {
      const double v00 = at(i, j), v01 = at(i, j + 1), v11 = at(i + 1, j + 1), v10 = at(i + 1, j);
      if (std::isnan(v00) || std::isnan(v01) || std::isnan(v11) || std::isnan(v10)) continue;
      const int code = (above(v00) ? 1 : 0) | (above(v01) ? 2 : 0) | (above(v11) ? 4 : 0) | (above(v10) ? 8 : 0);
      if (code == 0 || code == 15) continue;
      const auto top = detail::hedge(i, j, nj), bottom = detail::hedge(i + 1, j, nj);
      const auto left = detail::vedge(i, j, nj), right = detail::vedge(i, j + 1, nj);
      auto ensure = [&](std::uint64_t e) {
        if (points.count(e)) return;
        if (e == top) points[e] = cross(i, j, i, j + 1);
        else if (e == bottom) points[e] = cross(i + 1, j, i + 1, j + 1);
        else if (e == left) points[e] = cross(i, j, i + 1, j);
        else points[e] = cross(i, j + 1, i + 1, j + 1);
      };
      auto seg = [&](std::uint64_t a, std::uint64_t b) {
        ensure(a);
        ensure(b);
        add_segment(a, b);
      };
      const bool center_above = above(0.25 * (v00 + v01 + v11 + v10));
      switch (code) {
        case 1: case 14: seg(top, left); break;
        case 2: case 13: seg(top, right); break;
        case 3: case 12: seg(left, right); break;
        case 4: case 11: seg(right, bottom); break;
        case 6: case 9: seg(top, bottom); break;
        case 7: case 8: seg(left, bottom); break;
        case 5:  // v00 and v11 above
          if (center_above) { seg(top, right); seg(left, bottom); }
          else { seg(top, left); seg(right, bottom); }
          break;
        case 10:  // v01 and v10 above
          if (center_above) { seg(top, left); seg(right, bottom); }
          else { seg(top, right); seg(left, bottom); }
          break;
        default: break;
      }
    }
  }

  // Every node of a closed loop has exactly two links; walk each such cycle once.
  std::vector<Polygon> loops;
  std::unordered_map<std::uint64_t, bool> seen;
  std::vector<std::uint64_t> keys;
  keys.reserve(links.size());
  for (const auto& [k, v] : links) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (auto start : keys) {
    if (seen[start]) continue;
    Polygon poly;
    bool closed = true;
    std::uint64_t prev = start, cur = start;
    std::uint64_t next = 0;
    while (true) {
      seen[cur] = true;
      const auto& nb = links[cur];
      if (nb.size() != 2) {
        closed = false;
        break;
      }
      poly.push_back(points[cur]);
      next = (cur == start && poly.size() == 1) ? nb[0] : (nb[0] == prev ? nb[1] : nb[0]);
      prev = cur;
      cur = next;
      if (cur == start) break;
      if (seen[cur]) {
        closed = false;
        break;
      }
    }
    if (!closed) {
      // Mark the rest of this open chain so it is not revisited.
      std::vector<std::uint64_t> stack{start};
      while (!stack.empty()) {
        auto e = stack.back();
        stack.pop_back();
        seen[e] = true;
        for (auto n : links[e])
          if (!seen[n]) stack.push_back(n);
      }
      continue;
    }
    if (poly.size() >= 3) loops.push_back(std::move(poly));
  }
  return loops;
}

/// Even-odd ray casting.
inline bool contains(const Polygon& poly, double row, double col) {
  bool in = false;
  for (std::size_t a = 0, b = poly.size() - 1; a < poly.size(); b = a++) {
    const auto& p = poly[a];
    const auto& q = poly[b];
    if ((p.row > row) != (q.row > row)) {
      const double c = p.col + (row - p.row) * (q.col - p.col) / (q.row - p.row);
      if (col < c) in = !in;
    }
  }
  return in;
}

/// Signed shoelace area in pixel units.
inline double signed_area(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t n = 0, m = poly.size() - 1; n < poly.size(); m = n++)
    a += poly[m].col * poly[n].row - poly[n].col * poly[m].row;
  return 0.5 * a;
}

inline Vertex centroid(const Polygon& poly) {
  double cx = 0.0, cy = 0.0, a = 0.0;
  for (std::size_t n = 0, m = poly.size() - 1; n < poly.size(); m = n++) {
    const double c = poly[m].col * poly[n].row - poly[n].col * poly[m].row;
    a += c;
    cx += (poly[m].col + poly[n].col) * c;
    cy += (poly[m].row + poly[n].row) * c;
  }
  if (a == 0.0) return poly.front();
  return {cy / (3.0 * a), cx / (3.0 * a)};
}

}  // namespace osse
