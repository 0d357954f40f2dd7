#pragma once

// On-disk formats.
//
// Field container: <stem>.bin holds little-endian float64 values in the
// in-memory layout (time, lat north-up, lon); <stem>.json is a sidecar with
// the grid, the units tag and an optional missing-value sentinel.
//
// TrackSet CSV: header `sat_id,t_days,seconds_of_day,lat,lon,value`, with an
// extra trailing `order` column for along-track derivative samples.

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "osse/error.hpp"
#include "osse/grid.hpp"

namespace osse::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline json to_json(const GridSpec& g) {
  return json{{"lat0", g.lat0}, {"lon0", g.lon0}, {"dlat", g.dlat}, {"dlon", g.dlon}, {"nlat", g.nlat},
              {"nlon", g.nlon}, {"t0", g.t0},     {"dt", g.dt},     {"nt", g.nt}};
}

inline GridSpec grid_from_json(const json& j) {
  GridSpec g;
  try {
    g.lat0 = j.at("lat0").get<double>();
    g.lon0 = j.at("lon0").get<double>();
    g.dlat = j.at("dlat").get<double>();
    g.dlon = j.at("dlon").get<double>();
    g.nlat = j.at("nlat").get<std::size_t>();
    g.nlon = j.at("nlon").get<std::size_t>();
    g.t0 = j.value("t0", 0.0);
    g.dt = j.value("dt", 1.0);
    g.nt = j.value("nt", std::size_t{1});
  } catch (const json::exception& e) {
    fail_data(std::string("invalid grid description: ") + e.what());
  }
  g.validate();
  return g;
}

inline fs::path sidecar_path(const fs::path& bin) {
  fs::path p = bin;
  p.replace_extension(".json");
  return p;
}

inline fs::path data_path(const fs::path& stem_or_bin) {
  fs::path p = stem_or_bin;
  p.replace_extension(".bin");
  return p;
}

inline void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail_data("write failed for " + path.string());
}

inline std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
  return r;
}

/// Writes <path>.bin and <path>.json. NaN cells are written as the sentinel
/// when one is given.
inline void write_field(const fs::path& path, const Field& f, std::optional<double> missing = std::nullopt) {
  std::string bytes(f.values.size() * 8, '\0');
  for (std::size_t n = 0; n < f.values.size(); ++n) {
    double v = f.values[n];
    if (missing && std::isnan(v)) v = *missing;
    std::uint64_t u = 0;
    std::memcpy(&u, &v, 8);
    u = to_little(u);
    std::memcpy(bytes.data() + 8 * n, &u, 8);
  }
  write_bytes(data_path(path), bytes);
  json side{{"format", "osse-field-v1"},
            {"dtype", "float64-le"},
            {"layout", "time,lat(north-up),lon"},
            {"grid", to_json(f.spec)},
            {"units", std::string(to_string(f.units))},
            {"missing_value", missing ? json(*missing) : json(nullptr)}};
  write_bytes(sidecar_path(path), side.dump(2) + "\n");
}

struct Sidecar {
  GridSpec grid;
  Units units = Units::meters;
  std::optional<double> missing;
};

inline Sidecar read_sidecar(const fs::path& path) {
  const auto side_path = sidecar_path(path);
  if (!fs::exists(side_path)) fail_data("missing sidecar " + side_path.string());
  json side;
  try {
    side = json::parse(read_bytes(side_path));
  } catch (const json::exception& e) {
    fail_data("malformed sidecar " + side_path.string() + ": " + e.what());
  }
  if (!side.contains("grid") || !side.contains("units")) fail_data("sidecar lacks grid or units: " + side_path.string());
  Sidecar s;
  s.grid = grid_from_json(side["grid"]);
  s.units = units_from_string(side["units"].get<std::string>());
  if (side.contains("missing_value") && !side["missing_value"].is_null())
    s.missing = side["missing_value"].get<double>();
  return s;
}

inline Field read_field(const fs::path& path) {
  const Sidecar side = read_sidecar(path);
  const std::string bytes = read_bytes(data_path(path));
  if (bytes.size() != side.grid.size() * 8)
    fail_data("container " + data_path(path).string() + " has " + std::to_string(bytes.size()) +
              " bytes, sidecar grid implies " + std::to_string(side.grid.size() * 8));
  std::vector<double> values(side.grid.size());
  for (std::size_t n = 0; n < values.size(); ++n) {
    std::uint64_t u = 0;
    std::memcpy(&u, bytes.data() + 8 * n, 8);
    u = to_little(u);
    std::memcpy(&values[n], &u, 8);
    if (side.missing && values[n] == *side.missing) values[n] = std::nan("");
  }
  return Field(side.grid, side.units, std::move(values));
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_tracks_csv(const fs::path& path, const TrackSet& tracks) {
  std::string out = "sat_id,t_days,seconds_of_day,lat,lon,value\n";
  for (const auto& s : tracks) {
    out += std::to_string(s.sat_id) + ',' + format_double(s.t) + ',' + format_double(s.seconds_of_day) + ',' +
           format_double(s.lat) + ',' + format_double(s.lon) + ',' + format_double(s.value) + '\n';
  }
  write_bytes(path, out);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s, const fs::path& path, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail_data(path.string() + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

}  // namespace detail

/// Reads a TrackSet CSV. Extra trailing columns (such as `order`) are ignored.
inline TrackSet read_tracks_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail_data("empty track file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("sat_id,t_days,seconds_of_day,lat,lon,value", 0) != 0)
    fail_data("unexpected track header in " + path.string());
  std::vector<PointSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() < 6) fail_data(path.string() + ":" + std::to_string(line_no) + ": expected 6 columns");
    PointSample s;
    s.sat_id = static_cast<int>(detail::parse_double(cells[0], path, line_no));
    s.t = detail::parse_double(cells[1], path, line_no);
    s.seconds_of_day = detail::parse_double(cells[2], path, line_no);
    s.lat = detail::parse_double(cells[3], path, line_no);
    s.lon = detail::parse_double(cells[4], path, line_no);
    s.value = detail::parse_double(cells[5], path, line_no);
    if (!(s.lat > -90.0 && s.lat < 90.0)) fail_data(path.string() + ":" + std::to_string(line_no) + ": latitude out of range");
    samples.push_back(s);
  }
  return TrackSet(std::move(samples));
}

}  // namespace osse::io
