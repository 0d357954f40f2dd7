#pragma once

// Config-driven commands chaining truth generation, observation
// simulation, reconstruction, evaluation and eddy detection. Every output
// directory receives one manifest.json.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "osse/eddy.hpp"
#include "osse/error.hpp"
#include "osse/field_io.hpp"
#include "osse/metrics.hpp"
#include "osse/obs.hpp"
#include "osse/objective.hpp"
#include "osse/truth.hpp"
#include "osse/windows.hpp"

#ifndef OSSE_VERSION
#define OSSE_VERSION "0.0.0"
#endif

namespace osse::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Parsed configuration file. Sections: truth, obs, reconstruct, evaluate,
/// eddies, profile. Missing keys take library defaults.
struct Config {
  json root = json::object();

  static Config parse(const std::string& text) {
    Config c;
    try {
      c.root = json::parse(text);
    } catch (const json::exception& e) {
      fail(std::string("malformed config: ") + e.what());
    }
    if (!c.root.is_object()) fail("malformed config: top level must be an object");
    return c;
  }
  static Config load(const fs::path& path) {
    if (!fs::exists(path)) fail("config file not found: " + path.string());
    return parse(io::read_bytes(path));
  }
  json section(const std::string& name) const {
    if (!root.contains(name)) return json::object();
    const auto& s = root.at(name);
    if (!s.is_object()) fail("config section '" + name + "' must be an object");
    return s;
  }
  std::string hash() const { return fnv1a_hex(root.dump()); }
};

namespace detail {

template <class T>
T get(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail("config key '" + key + "': " + e.what());
  }
}

inline Range get_range(const json& j, const std::string& key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = get<std::vector<double>>(j, key, {});
  if (v.size() != 2) fail("config key '" + key + "' must be a [lo, hi] pair");
  return {v[0], v[1]};
}

}  // namespace detail

/// Grid from a "grid" object: either {"preset": "gulf_stream" | "desk", "nt": n}
/// or explicit lat0/lon0/dlat/dlon/nlat/nlon/t0/dt/nt.
inline GridSpec parse_grid(const json& j) {
  using detail::get;
  const std::string preset = get<std::string>(j, "preset", j.contains("lat0") ? "" : "gulf_stream");
  GridSpec g;
  if (preset == "gulf_stream") {
    g = GridSpec::gulf_stream(get<std::size_t>(j, "nt", 21));
  } else if (preset == "desk") {
    g = GridSpec::gulf_stream(get<std::size_t>(j, "nt", 63));
    g.nlat = g.nlon = 64;
  } else if (preset.empty()) {
    g.lat0 = get<double>(j, "lat0", 0.0);
    g.lon0 = get<double>(j, "lon0", 0.0);
    g.dlat = get<double>(j, "dlat", 0.0);
    g.dlon = get<double>(j, "dlon", 0.0);
    g.nlat = get<std::size_t>(j, "nlat", 0);
    g.nlon = get<std::size_t>(j, "nlon", 0);
    g.t0 = get<double>(j, "t0", 0.0);
    g.dt = get<double>(j, "dt", 1.0);
    g.nt = get<std::size_t>(j, "nt", 0);
  } else {
    fail("unknown grid preset '" + preset + "'");
  }
  g.validate();
  return g;
}

inline TruthConfig parse_truth(const Config& c) {
  using detail::get;
  const json s = c.section("truth");
  TruthConfig t;
  const json grid = s.contains("grid") ? s.at("grid") : json::object();
  t.spec = parse_grid(grid);
  if (get<std::string>(grid, "preset", "") == "desk") {
    // A quarter of the area: fewer, smaller eddies so placement never jams.
    t.n_eddies = 5;
    t.radius_km = {40.0, 60.0};
    t.min_separation_radii = 3.0;
  }
  t.n_eddies = get<std::size_t>(s, "n_eddies", t.n_eddies);
  t.radius_km = detail::get_range(s, "radius_km", t.radius_km);
  t.amplitude_m = detail::get_range(s, "amplitude_m", t.amplitude_m);
  t.drift_km_per_day = detail::get_range(s, "drift_km_per_day", t.drift_km_per_day);
  t.background_gradient = get<double>(s, "background_gradient", t.background_gradient);
  t.sst_contrast = get<double>(s, "sst_contrast", t.sst_contrast);
  t.sst_mean = get<double>(s, "sst_mean", t.sst_mean);
  t.min_separation_radii = get<double>(s, "min_separation_radii", t.min_separation_radii);
  t.seed = get<std::uint64_t>(s, "seed", t.seed);
  t.validate();
  return t;
}

struct ObsConfig {
  TrackGenParams tracks;
  SshObsParams ssh;
  SstObsParams sst;
  double cloud_fraction = 0.5;
  std::uint64_t cloud_seed = 17;
  std::optional<double> deseasonalize_period_days;
};

inline ObsConfig parse_obs(const Config& c) {
  using detail::get;
  const json s = c.section("obs");
  ObsConfig o;
  const json t = s.value("tracks", json::object());
  o.tracks.n_satellites = get<int>(t, "n_satellites", o.tracks.n_satellites);
  o.tracks.passes_per_day = get<int>(t, "passes_per_day", o.tracks.passes_per_day);
  o.tracks.ground_speed_km_s = get<double>(t, "ground_speed_km_s", o.tracks.ground_speed_km_s);
  o.tracks.sample_interval_s = get<double>(t, "sample_interval_s", o.tracks.sample_interval_s);
  o.tracks.track_angle_deg = get<double>(t, "track_angle_deg", o.tracks.track_angle_deg);
  o.tracks.seed = get<std::uint64_t>(t, "seed", o.tracks.seed);
  const json h = s.value("ssh", json::object());
  o.ssh.sigma_noise = get<double>(h, "sigma_noise", o.ssh.sigma_noise);
  o.ssh.seed = get<std::uint64_t>(h, "seed", o.ssh.seed);
  require(o.ssh.sigma_noise >= 0.0, "sigma_noise must be non-negative");
  const json q = s.value("sst", json::object());
  o.sst.sigma_t = get<double>(q, "sigma_t_days", o.sst.sigma_t);
  o.sst.sigma_x = get<double>(q, "sigma_x_km", o.sst.sigma_x);
  o.sst.noise_coarse_n = get<std::size_t>(q, "noise_coarse_n", o.sst.noise_coarse_n);
  o.sst.noise_sigma = get<double>(q, "noise_sigma", o.sst.noise_sigma);
  o.sst.cloud_smooth_km = get<double>(q, "cloud_smooth_km", o.sst.cloud_smooth_km);
  o.sst.seed = get<std::uint64_t>(q, "seed", o.sst.seed);
  o.cloud_fraction = get<double>(q, "cloud_fraction", o.cloud_fraction);
  o.cloud_seed = get<std::uint64_t>(q, "cloud_seed", o.cloud_seed);
  if (q.contains("deseasonalize_period_days")) o.deseasonalize_period_days = get<double>(q, "deseasonalize_period_days", 365.0);
  return o;
}

struct ReconConfig {
  EngineConfig engine;
  WindowPlan plan;
  std::size_t n_ensemble = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<double> smooth_weight_grid;  // non-empty selects smooth_weight on a validation split
  std::optional<int> validation_sat;
};

inline ReconConfig parse_reconstruct(const Config& c) {
  using detail::get;
  const json s = c.section("reconstruct");
  ReconConfig r;
  r.engine.engine = engine_from_string(get<std::string>(s, "engine", "oi"));
  const json w = s.value("window", json::object());
  r.plan.window_len = get<std::size_t>(w, "length", r.plan.window_len);
  r.plan.stride = get<std::size_t>(w, "stride", r.plan.stride);
  r.plan.center_index = get<std::size_t>(w, "center_index", r.plan.window_len / 2);
  r.plan.validate();
  r.n_ensemble = get<std::size_t>(s, "n_ensemble", 1);
  require(r.n_ensemble >= 1, "n_ensemble must be at least 1");
  r.seeds = get<std::vector<std::uint64_t>>(s, "seeds", {});
  const json oi = s.value("oi", json::object());
  auto& o = r.engine.oi;
  o.length_scale_km = get<double>(oi, "length_scale_km", o.length_scale_km);
  o.time_scale_days = get<double>(oi, "time_scale_days", o.time_scale_days);
  o.obs_noise_var = get<double>(oi, "obs_noise_var", 0.019 * 0.019);
  o.max_neighbors = get<std::size_t>(oi, "max_neighbors", o.max_neighbors);
  o.cutoff = get<double>(oi, "cutoff", o.cutoff);
  o.validate();
  const json vj = s.value("var", json::object());
  auto& v = r.engine.var;
  v.loss_kind = loss_kind_from_string(get<std::string>(vj, "loss", std::string(to_string(v.loss_kind))));
  v.lambda1 = get<double>(vj, "lambda1", v.lambda1);
  v.lambda2 = get<double>(vj, "lambda2", v.lambda2);
  if (vj.contains("smooth_weight") && vj.at("smooth_weight").is_array())
    r.smooth_weight_grid = get<std::vector<double>>(vj, "smooth_weight", {});
  else
    v.smooth_weight = get<double>(vj, "smooth_weight", v.smooth_weight);
  v.time_smooth_ratio = get<double>(vj, "time_smooth_ratio", v.time_smooth_ratio);
  v.max_iters = get<std::size_t>(vj, "max_iters", v.max_iters);
  v.step_init = get<double>(vj, "step_init", v.step_init);
  v.step_decay = get<double>(vj, "step_decay", v.step_decay);
  v.tol_rel = get<double>(vj, "tol_rel", v.tol_rel);
  v.init_jitter = get<double>(vj, "init_jitter", v.init_jitter);
  v.seed = get<std::uint64_t>(vj, "seed", v.seed);
  if (s.contains("validation_sat")) r.validation_sat = get<int>(s, "validation_sat", 0);
  if (r.engine.engine == Engine::var) v.validate();
  return r;
}

struct EvalConfig {
  std::optional<Region> region;
  double lambda_threshold = 1.0;
  LnamParams lnam;
  TrackParams tracking;
  std::vector<double> radius_bins{0, 25, 50, 75, 100, 1000};
  std::vector<double> velocity_bins{0, 0.1, 0.2, 0.4, 0.8, 10};
  std::vector<double> lifetime_bins{0, 5, 10, 20, 1000};
  std::size_t eddy_day_stride = 1;
};

inline LnamParams parse_lnam(const json& s) {
  using detail::get;
  LnamParams p;
  p.neighborhood_half_width = get<std::size_t>(s, "neighborhood_half_width", p.neighborhood_half_width);
  p.center_threshold = get<double>(s, "center_threshold", p.center_threshold);
  p.n_levels = get<std::size_t>(s, "n_levels", p.n_levels);
  p.search_radius_km = get<double>(s, "search_radius_km", p.search_radius_km);
  p.validate();
  return p;
}

inline TrackParams parse_tracking(const json& s) {
  using detail::get;
  TrackParams t;
  t.max_jump_km = get<double>(s, "max_jump_km", t.max_jump_km);
  t.max_gap_days = get<double>(s, "max_gap_days", t.max_gap_days);
  return t;
}

inline EvalConfig parse_evaluate(const Config& c) {
  using detail::get;
  const json s = c.section("evaluate");
  EvalConfig e;
  if (s.contains("region")) {
    const auto& r = s.at("region");
    e.region = Region{get<double>(r, "lat_min", -90.0), get<double>(r, "lat_max", 90.0)};
  }
  e.lambda_threshold = get<double>(s, "lambda_threshold", e.lambda_threshold);
  const json ed = c.section("eddies");
  e.lnam = parse_lnam(ed);
  e.tracking = parse_tracking(ed);
  e.radius_bins = get<std::vector<double>>(s, "radius_bins_km", e.radius_bins);
  e.velocity_bins = get<std::vector<double>>(s, "velocity_bins", e.velocity_bins);
  e.lifetime_bins = get<std::vector<double>>(s, "lifetime_bins", e.lifetime_bins);
  e.eddy_day_stride = get<std::size_t>(s, "eddy_day_stride", e.eddy_day_stride);
  require(e.eddy_day_stride >= 1, "eddy_day_stride must be at least 1");
  return e;
}

/// Records what produced an output directory. Timing is informational and
/// the only field expected to change between identical runs.
struct Manifest {
  std::string command;
  std::string config_hash;
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::array();
  json effective = json::object();
  double seconds = 0.0;

  void write(const fs::path& dir) const {
    json j{{"command", command},        {"version", OSSE_VERSION}, {"config_hash", config_hash},
           {"seeds", seeds},            {"inputs", inputs},         {"outputs", outputs},
           {"effective", effective},    {"timing", {{"seconds", seconds}}}};
    io::write_bytes(dir / "manifest.json", j.dump(2) + "\n");
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Default data root: $OSSE_DATA_ROOT or ./osse_data.
inline fs::path data_root() {
  if (const char* env = std::getenv("OSSE_DATA_ROOT"); env && *env) return env;
  return "osse_data";
}

inline void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) fail(what + " directory not found: " + p.string());
}

// ---- generate-truth ----

inline void generate_truth_cmd(const Config& c, const fs::path& out) {
  Stopwatch sw;
  const TruthConfig tc = parse_truth(c);
  const Truth truth = generate_truth(tc);
  fs::create_directories(out);
  write_truth(out, truth);
  json eddies = json::array();
  for (const auto& e : truth.eddies)
    eddies.push_back({{"lat", e.lat},
                      {"lon", e.lon},
                      {"radius_m", e.radius_m},
                      {"amplitude_m", e.amplitude_m},
                      {"drift_u", e.drift_u},
                      {"drift_v", e.drift_v}});
  io::write_bytes(out / "eddy_params.json", eddies.dump(2) + "\n");
  Manifest m{"generate-truth", c.hash()};
  m.seeds = {{"truth", tc.seed}};
  m.outputs = {"ssh.bin", "sst.bin", "u.bin", "v.bin", "eddy_params.json"};
  m.effective = {{"grid", io::to_json(tc.spec)}, {"n_eddies", tc.n_eddies}};
  m.seconds = sw.seconds();
  m.write(out);
}

// ---- simulate-obs ----

inline void simulate_obs_cmd(const Config& c, const fs::path& truth_dir, const fs::path& out,
                             std::optional<int> hold_out_sat) {
  Stopwatch sw;
  require_dir(truth_dir, "truth");
  const ObsConfig oc = parse_obs(c);
  const Truth truth = read_truth(truth_dir);
  const GridSpec& g = truth.ssh.spec;
  const TrackSet support = synthesize_tracks(g, oc.tracks);
  const TrackSet obs = simulate_ssh_obs(truth.ssh, support, oc.ssh);
  fs::create_directories(out);
  io::write_tracks_csv(out / "tracks.csv", obs);
  io::write_bytes(out / "grid.json", io::to_json(g).dump(2) + "\n");
  json outputs = {"tracks.csv", "grid.json", "cloud.bin", "sst_obs.bin"};

  const Field raw_cloud = synthesize_cloud_cover(g, oc.cloud_fraction, oc.cloud_seed);
  const Field cloud = prepare_cloud_cover(raw_cloud, g, oc.sst.cloud_smooth_km);
  io::write_field(out / "cloud", cloud);
  Field sst_obs = simulate_sst_obs(truth.sst, cloud, oc.sst);
  io::write_field(out / "sst_obs", sst_obs);
  if (oc.deseasonalize_period_days) {
    const Field clim = build_climatology(sst_obs, *oc.deseasonalize_period_days);
    io::write_field(out / "sst_obs_deseasonalized", deseasonalize(sst_obs, clim));
    outputs.push_back("sst_obs_deseasonalized.bin");
  }
  if (hold_out_sat) {
    const auto split = leave_one_satellite(obs, *hold_out_sat);
    io::write_tracks_csv(out / "tracks_input.csv", split.input);
    io::write_tracks_csv(out / "tracks_held_out.csv", split.held_out);
    outputs.push_back("tracks_input.csv");
    outputs.push_back("tracks_held_out.csv");
  }
  Manifest m{"simulate-obs", c.hash()};
  m.seeds = {{"tracks", oc.tracks.seed}, {"ssh_noise", oc.ssh.seed}, {"sst", oc.sst.seed}, {"cloud", oc.cloud_seed}};
  m.inputs = {{"truth", truth_dir.string()}};
  m.outputs = outputs;
  m.effective = {{"sigma_noise", oc.ssh.sigma_noise},
                 {"n_satellites", oc.tracks.n_satellites},
                 {"n_obs", obs.size()},
                 {"hold_out_sat", hold_out_sat ? json(*hold_out_sat) : json(nullptr)}};
  m.seconds = sw.seconds();
  m.write(out);
}

// ---- reconstruct ----

struct ReconOverrides {
  std::optional<std::string> engine;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<std::size_t> n_ensemble;
  std::optional<std::string> loss;
};

inline GridSpec read_obs_grid(const fs::path& obs_dir) {
  const fs::path p = obs_dir / "grid.json";
  if (!fs::exists(p)) fail_data("observation grid file missing: " + p.string());
  try {
    return io::grid_from_json(json::parse(io::read_bytes(p)));
  } catch (const json::exception& e) {
    fail_data(p.string() + ": " + e.what());
  }
}

/// Input tracks of an observation directory: the leave-one-out input set
/// when present, all tracks otherwise.
inline TrackSet read_input_tracks(const fs::path& obs_dir) {
  const fs::path split = obs_dir / "tracks_input.csv";
  return io::read_tracks_csv(fs::exists(split) ? split : obs_dir / "tracks.csv");
}

inline RunResult reconstruct_cmd(const Config& c, const fs::path& obs_dir, const fs::path& out,
                                 const ReconOverrides& ov = {}, std::size_t workers = 1) {
  Stopwatch sw;
  require_dir(obs_dir, "observation");
  ReconConfig rc = parse_reconstruct(c);
  if (ov.engine) rc.engine.engine = engine_from_string(*ov.engine);
  if (ov.lambda1) rc.engine.var.lambda1 = *ov.lambda1;
  if (ov.lambda2) rc.engine.var.lambda2 = *ov.lambda2;
  if (ov.loss) rc.engine.var.loss_kind = loss_kind_from_string(*ov.loss);
  if (ov.n_ensemble) rc.n_ensemble = *ov.n_ensemble;
  if (rc.engine.engine == Engine::var) rc.engine.var.validate();
  const GridSpec g = read_obs_grid(obs_dir);
  const TrackSet input = read_input_tracks(obs_dir);
  if (input.empty()) fail_data("no input observations in " + obs_dir.string());

  json search = nullptr;
  if (rc.engine.engine == Engine::var && !rc.smooth_weight_grid.empty()) {
    const auto sats = input.satellites();
    const int vsat = rc.validation_sat.value_or(sats.back());
    const auto ws = select_smooth_weight(input, g, rc.plan, rc.engine, rc.smooth_weight_grid, vsat, workers);
    rc.engine.var.smooth_weight = ws.best;
    search = {{"validation_sat", vsat}, {"scores", json::array()}};
    for (const auto& [w, s] : ws.scores) search["scores"].push_back({w, s});
  }

  Diagnostics diag;
  RunResult run = run_windows(input, g, rc.plan, rc.engine, rc.n_ensemble, rc.seeds, workers, &diag);
  fs::create_directories(out);
  io::write_field(out / "estimate", run.estimate);
  json outputs = {"estimate.bin"};
  if (rc.n_ensemble > 1)
    for (std::size_t m = 0; m < run.members.size(); ++m) {
      io::write_field(out / ("member_" + std::to_string(m)), run.members[m]);
      outputs.push_back("member_" + std::to_string(m) + ".bin");
    }
  if (rc.engine.engine == Engine::var) {
    fs::create_directories(out / "traces");
    for (std::size_t m = 0; m < run.traces.size(); ++m)
      for (std::size_t w = 0; w < run.traces[m].size(); ++w)
        write_trace_csv(out / "traces" / ("m" + std::to_string(m) + "_w" + std::to_string(w) + ".csv"),
                        run.traces[m][w]);
    outputs.push_back("traces/");
  }

  Manifest man{"reconstruct", c.hash()};
  json seeds = json::array();
  for (std::size_t m = 0; m < rc.n_ensemble; ++m)
    seeds.push_back(m < rc.seeds.size() ? rc.seeds[m] : (rc.seeds.empty() ? rc.engine.var.seed : rc.seeds.front()) + m);
  man.seeds = {{"members", seeds}};
  man.inputs = {{"obs", obs_dir.string()}};
  man.outputs = outputs;
  const auto& v = rc.engine.var;
  man.effective = {{"engine", to_string(rc.engine.engine)},
                   {"window", {{"length", rc.plan.window_len}, {"stride", rc.plan.stride}, {"center_index", rc.plan.center_index}}},
                   {"n_ensemble", rc.n_ensemble},
                   {"oi", {{"length_scale_km", rc.engine.oi.length_scale_km},
                           {"time_scale_days", rc.engine.oi.time_scale_days},
                           {"obs_noise_var", rc.engine.oi.obs_noise_var},
                           {"max_neighbors", rc.engine.oi.max_neighbors}}},
                   {"var", {{"loss", to_string(v.loss_kind)},
                            {"lambda1", v.lambda1},
                            {"lambda2", v.lambda2},
                            {"smooth_weight", v.smooth_weight},
                            {"time_smooth_ratio", v.time_smooth_ratio},
                            {"max_iters", v.max_iters},
                            {"step_init", v.step_init},
                            {"step_decay", v.step_decay},
                            {"tol_rel", v.tol_rel},
                            {"init_jitter", v.init_jitter}}},
                   {"smooth_weight_search", search},
                   {"warnings", diag.warnings},
                   {"counters", diag.counters}};
  man.seconds = sw.seconds();
  man.write(out);
  return run;
}

// ---- evaluate ----

/// SSH container of an estimate: a .bin file, or a directory holding
/// estimate.bin (reconstruction) or ssh.bin (truth).
inline Field read_ssh_container(const fs::path& p) {
  if (fs::is_directory(p)) {
    if (fs::exists(p / "estimate.bin")) return io::read_field(p / "estimate");
    if (fs::exists(p / "ssh.bin")) return io::read_field(p / "ssh");
    fail_data("no estimate.bin or ssh.bin in " + p.string());
  }
  if (!fs::exists(io::data_path(p))) fail("estimate not found: " + p.string());
  return io::read_field(p);
}

struct EngineScores {
  std::string name;
  EvalReport report;
  std::optional<Scores> eddy;
};

inline std::string opt_str(const std::optional<double>& v) { return v ? io::format_double(*v) : ""; }

inline std::vector<std::vector<Eddy>> detect_days(const Field& ssh, const VelocityField& vel, const EvalConfig& e,
                                                  std::size_t workers, Diagnostics* diag) {
  std::vector<std::size_t> days;
  for (std::size_t k = 0; k < ssh.spec.nt; k += e.eddy_day_stride) days.push_back(k);
  std::vector<std::vector<Eddy>> out(days.size());
  std::vector<Diagnostics> d(days.size());
  parallel_for(days.size(), workers, [&](std::size_t n) {
    const std::size_t k = days[n];
    out[n] = detect(ssh.slice_field(k), {vel.u.slice_field(k), vel.v.slice_field(k)}, e.lnam, {}, &d[n]);
  });
  if (diag)
    for (const auto& dk : d)
      for (const auto& [key, v] : dk.counters) diag->count(key, v);
  return out;
}

inline void write_eddy_tables(const fs::path& dir, const MatchReport& rep, const EvalConfig& e) {
  const Scores s = scores(rep);
  io::write_bytes(dir / "eddy_scores.csv",
                  "precision,recall,f1,matched,truth_total,est_total,excluded_multi\n" + opt_str(s.precision) + ',' +
                      opt_str(s.recall) + ',' + opt_str(s.f1) + ',' + std::to_string(rep.pairs.size()) + ',' +
                      std::to_string(rep.truth_total) + ',' + std::to_string(rep.est_total) + ',' +
                      std::to_string(rep.excluded_multi) + '\n');
  std::string t = "error_of,binned_by,bin_lo,bin_hi,n,rmse,bias\n";
  auto add = [&](EddyProperty what, EddyProperty by, const std::vector<double>& edges) {
    const auto b = property_errors(rep, what, by, edges);
    for (std::size_t q = 0; q < b.bins.size(); ++q)
      t += std::string(to_string(what)) + ',' + std::string(to_string(by)) + ',' + io::format_double(edges[q]) + ',' +
           io::format_double(edges[q + 1]) + ',' + std::to_string(b.bins[q].n) + ',' + opt_str(b.bins[q].rmse) + ',' +
           opt_str(b.bins[q].bias) + '\n';
  };
  for (auto what : {EddyProperty::max_radius, EddyProperty::max_velocity}) {
    add(what, EddyProperty::max_radius, e.radius_bins);
    add(what, EddyProperty::lifetime, e.lifetime_bins);
    add(what, EddyProperty::max_velocity, e.velocity_bins);
  }
  io::write_bytes(dir / "eddy_errors.csv", t);
}

/// Scores each named estimate. Without truth only the along-track RMSE
/// against held-out tracks is computed.
inline std::vector<EngineScores> evaluate_cmd(const Config& c, const std::optional<fs::path>& truth_dir,
                                              const std::vector<std::pair<std::string, fs::path>>& estimates,
                                              const std::optional<fs::path>& held_out_csv, const fs::path& out,
                                              bool tracks_only, std::size_t workers = 1) {
  Stopwatch sw;
  require(!estimates.empty(), "evaluate needs at least one estimate");
  const EvalConfig ec = parse_evaluate(c);
  std::optional<TrackSet> held;
  if (held_out_csv) held = io::read_tracks_csv(*held_out_csv);
  if (tracks_only && !held) fail("--tracks-only needs held-out tracks");
  std::optional<Truth> truth;
  if (!tracks_only) {
    if (!truth_dir) fail("evaluate needs a truth directory unless --tracks-only is given");
    require_dir(*truth_dir, "truth");
    truth = read_truth(*truth_dir);
  }
  fs::create_directories(out);

  std::vector<std::vector<Eddy>> truth_eddies;
  Diagnostics diag;
  if (truth) {
    truth_eddies = track(detect_days(truth->ssh, truth->currents, ec, workers, &diag), ec.tracking);
    write_eddies_jsonl(out / "eddies_truth.jsonl", truth_eddies);
  }

  std::vector<EngineScores> all;
  json outputs = json::array();
  for (const auto& [name, path] : estimates) {
    const Field est = read_ssh_container(path);
    const fs::path dir = estimates.size() > 1 ? out / name : out;
    fs::create_directories(dir);
    EngineScores es{name, {}, {}};
    if (held) es.report.along_track_rmse = along_track_rmse(*held, est);
    if (truth) {
      if (!(est.spec == truth->ssh.spec)) fail_data("estimate grid differs from the truth grid");
      es.report.rmse = rmse_suite(truth->ssh, est, ec.region);
      if (est.spec.nlon >= 16) es.report.lambda_x = lambda_x(truth->ssh, est, ec.lambda_threshold);
      if (est.spec.nt >= 16) es.report.lambda_t = lambda_t(truth->ssh, est, ec.lambda_threshold);
      es.report.currents = current_rmse(truth->currents, est);
      write_daily_csv(dir / "daily_rmse.csv", es.report.rmse);
      if (est.spec.nlon >= 16) write_spectrum_csv(dir / "spectrum_x.csv", spectra(truth->ssh, est, SpectralAxis::lon));
      if (est.spec.nt >= 16) write_spectrum_csv(dir / "spectrum_t.csv", spectra(truth->ssh, est, SpectralAxis::time));
      const VelocityField est_vel = geostrophic_currents(est);
      const auto est_eddies = track(detect_days(est, est_vel, ec, workers, &diag), ec.tracking);
      write_eddies_jsonl(dir / "eddies_est.jsonl", est_eddies);
      MatchReport rep;
      for (std::size_t d = 0; d < truth_eddies.size(); ++d) rep.append(match(truth_eddies[d], est_eddies[d]));
      es.eddy = scores(rep);
      write_eddy_tables(dir, rep, ec);
    }
    json j = tracks_only ? json{{"along_track_rmse", es.report.along_track_rmse ? json(*es.report.along_track_rmse)
                                                                                  : json(nullptr)}}
                         : to_json(es.report);
    if (es.eddy) {
      auto o = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
      j["eddy_precision"] = o(es.eddy->precision);
      j["eddy_recall"] = o(es.eddy->recall);
      j["eddy_f1"] = o(es.eddy->f1);
      j["eddy_radius_definitions"] = {{"mean_radius", "equivalent-area radius of the characteristic contour"},
                                      {"max_radius", "largest center-to-contour distance"}};
    }
    j["lambda_convention"] = ec.lambda_threshold == 1.0 ? "error PSD equals signal PSD" : "error/signal PSD ratio threshold";
    io::write_bytes(dir / "report.json", j.dump(2) + "\n");
    outputs.push_back((estimates.size() > 1 ? name + "/" : std::string()) + "report.json");
    all.push_back(std::move(es));
  }

  if (estimates.size() > 1) {
    std::string csv = "engine,mu,sigma_t,lambda_x_deg,lambda_t_days,mu_u,mu_v,along_track_rmse,precision,recall,f1\n";
    for (const auto& es : all) {
      const auto& r = es.report;
      csv += es.name + ',' + (truth ? io::format_double(r.rmse.mu) : "") + ',' +
             (truth ? io::format_double(r.rmse.sigma_t) : "") + ',' +
             (r.lambda_x ? io::format_double(r.lambda_x->lambda) : "") + ',' +
             (r.lambda_t ? io::format_double(r.lambda_t->lambda) : "") + ',' +
             (r.currents ? io::format_double(r.currents->mu_u) : "") + ',' +
             (r.currents ? io::format_double(r.currents->mu_v) : "") + ',' + opt_str(r.along_track_rmse) + ',' +
             (es.eddy ? opt_str(es.eddy->precision) : "") + ',' + (es.eddy ? opt_str(es.eddy->recall) : "") + ',' +
             (es.eddy ? opt_str(es.eddy->f1) : "") + '\n';
    }
    io::write_bytes(out / "comparison.csv", csv);
    outputs.push_back("comparison.csv");
  }

  Manifest m{"evaluate", c.hash()};
  json inputs = {{"truth", truth_dir ? json(truth_dir->string()) : json(nullptr)}};
  for (const auto& [name, path] : estimates) inputs["estimates"][name] = path.string();
  if (held_out_csv) inputs["held_out"] = held_out_csv->string();
  m.inputs = inputs;
  m.outputs = outputs;
  m.effective = {{"lambda_threshold", ec.lambda_threshold},
                 {"tracks_only", tracks_only},
                 {"region", ec.region ? json{ec.region->lat_min, ec.region->lat_max} : json(nullptr)},
                 {"counters", diag.counters}};
  m.seconds = sw.seconds();
  m.write(out);
  return all;
}

// ---- profile-window ----

/// Every offset of every window, paired with the truth frame it estimates.
inline std::vector<OffsetFrame> offset_frames(const std::vector<WindowResult>& windows) {
  std::vector<OffsetFrame> frames;
  for (const auto& w : windows)
    for (std::size_t o = 0; o < w.frames.spec.nt; ++o) {
      const auto s = w.frames.slice(o);
      frames.push_back({o, w.k0 + o, std::vector<double>(s.begin(), s.end())});
    }
  return frames;
}

inline WindowProfile profile_window_cmd(const Config& c, const fs::path& truth_dir, const fs::path& obs_dir,
                                        const fs::path& out, const ReconOverrides& ov = {},
                                        std::size_t workers = 1) {
  Stopwatch sw;
  require_dir(truth_dir, "truth");
  const Truth truth = read_truth(truth_dir);
  const RunResult run = reconstruct_cmd(c, obs_dir, out / "reconstruction", ov, workers);
  if (!(run.estimate.spec == truth.ssh.spec)) fail_data("reconstruction grid differs from the truth grid");
  const std::size_t len = run.windows.front().frames.spec.nt;
  const WindowProfile prof = window_profile(truth.ssh, offset_frames(run.windows), len);
  write_profile_csv(out / "profile.csv", prof);
  Manifest m{"profile-window", c.hash()};
  m.inputs = {{"truth", truth_dir.string()}, {"obs", obs_dir.string()}};
  m.outputs = {"profile.csv", "reconstruction/"};
  const auto am = prof.argmin();
  m.effective = {{"window_length", len}, {"argmin_offset", am ? json(*am) : json(nullptr)}, {"complete", prof.complete()}};
  m.seconds = sw.seconds();
  m.write(out);
  return prof;
}

// ---- detect-eddies ----

inline std::vector<std::vector<Eddy>> detect_eddies_cmd(const Config& c, const fs::path& ssh_path,
                                                        const fs::path& out, std::size_t workers = 1) {
  Stopwatch sw;
  const EvalConfig ec = parse_evaluate(c);
  const Field ssh = read_ssh_container(ssh_path);
  const VelocityField vel = geostrophic_currents(ssh);
  Diagnostics diag;
  const auto days = track(detect_days(ssh, vel, ec, workers, &diag), ec.tracking);
  fs::create_directories(out);
  write_eddies_jsonl(out / "eddies.jsonl", days);
  std::string csv = "t,n_eddies,n_cyclones,n_anticyclones\n";
  for (const auto& d : days) {
    std::size_t cyc = 0;
    for (const auto& e : d) cyc += e.polarity == Polarity::cyclone;
    csv += (d.empty() ? std::string() : io::format_double(d.front().t)) + ',' + std::to_string(d.size()) + ',' +
           std::to_string(cyc) + ',' + std::to_string(d.size() - cyc) + '\n';
  }
  io::write_bytes(out / "eddy_counts.csv", csv);
  Manifest m{"detect-eddies", c.hash()};
  m.inputs = {{"ssh", ssh_path.string()}};
  m.outputs = {"eddies.jsonl", "eddy_counts.csv"};
  m.effective = {{"neighborhood_half_width", ec.lnam.neighborhood_half_width},
                 {"center_threshold", ec.lnam.center_threshold},
                 {"n_levels", ec.lnam.n_levels},
                 {"counters", diag.counters}};
  m.seconds = sw.seconds();
  m.write(out);
  return days;
}

}  // namespace osse::pipeline
