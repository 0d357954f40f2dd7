// Acceptance suite: one PASS/FAIL line per criterion with its pinned
// tolerance and time limit. Criteria can be selected by number on the
// command line; the exit status is non-zero when any selected one fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "osse/along_track.hpp"
#include "osse/eddy.hpp"
#include "osse/metrics.hpp"
#include "osse/objective.hpp"
#include "osse/obs.hpp"
#include "osse/pipeline.hpp"
#include "osse/truth.hpp"
#include "osse/windows.hpp"
#include "test_util.hpp"

using namespace osse;
namespace fs = std::filesystem;
namespace pl = osse::pipeline;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

// 1. <H x, y> = <x, H^T y> on random grids and supports.
Outcome adjoint() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> dim(2, 12);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = osse::testing::small_grid(dim(rng), dim(rng), dim(rng), 0.05 + 0.01 * (trial % 7), 0.1);
    const Field x = osse::testing::random_field(g, rng);
    const auto pts = osse::testing::random_points(g, 1 + dim(rng) * 40, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> y(pts.size());
    for (auto& v : y) v = n(rng);
    const auto hx = sample_trilinear(x, pts);
    const Field hty = scatter_adjoint(pts, y, g);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t q = 0; q < y.size(); ++q) lhs += hx[q] * y[q];
    for (std::size_t q = 0; q < x.values.size(); ++q) rhs += x.values[q] * hty.values[q];
    worst = std::max(worst, rel_err(lhs, rhs));
  }
  return {worst < 1e-12, fmt("max relative error %.2e (< 1e-12)", worst)};
}

// 2. Analytic gradients against central differences along random directions.
Outcome gradients() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GridSpec g = GridSpec::gulf_stream(5);
    g.nlat = g.nlon = 16;
    std::mt19937_64 rng(1000 + seed);
    const Field truth = osse::testing::random_field(g, rng, 0.1);
    TrackGenParams tp;
    tp.seed = 2000 + seed;
    const auto obs = simulate_ssh_obs(truth, synthesize_tracks(g, tp), {0.019, 3000 + seed});
    const Field est = osse::testing::random_field(g, rng, 0.1);
    const Field dir = osse::testing::random_field(g, rng, 1.0);
    const auto norm = derivative_norm_stats(obs);
    const double h = 1e-5;
    Field plus = est, minus = est;
    for (std::size_t n = 0; n < est.values.size(); ++n) {
      plus.values[n] += h * dir.values[n];
      minus.values[n] -= h * dir.values[n];
    }
    auto dot = [&](const Field& gr) {
      double s = 0.0;
      for (std::size_t n = 0; n < gr.values.size(); ++n) s += gr.values[n] * dir.values[n];
      return s;
    };
    const double fd_sup = (loss_sup(truth, plus) - loss_sup(truth, minus)) / (2.0 * h);
    worst = std::max(worst, rel_err(fd_sup, dot(grad_loss_sup(truth, est))));
    const double fd_un = (loss_unsup(obs, plus) - loss_unsup(obs, minus)) / (2.0 * h);
    worst = std::max(worst, rel_err(fd_un, dot(grad_loss(obs, est, LossKind::unsup))));
    const LossParams lp{0.05, 0.05};
    const double fd_reg =
        (loss_unsup_reg(obs, plus, lp, norm) - loss_unsup_reg(obs, minus, lp, norm)) / (2.0 * h);
    worst = std::max(worst, rel_err(fd_reg, dot(grad_loss(obs, est, LossKind::unsup_reg, lp, norm))));
  }
  return {worst < 1e-6, fmt("max relative error %.2e over sup/unsup/unsup_reg (< 1e-6)", worst)};
}

// 3. Geostrophic speed of a Gaussian bump and second-order convergence.
Outcome geostrophy() {
  const oracle::Bump b;
  const auto g = oracle::centered_grid(b.lat, b.lon, 10.0, 128);
  const auto [peak, r] = oracle::ring_speed_peak(geostrophic_currents(oracle::bump_field(g, b)), b.lat, b.lon,
                                                 2.5 * b.radius_m, 1e3);
  const double speed_err = rel_err(peak, b.peak_speed());
  const double r_err = std::abs(r - b.radius_m);
  const double e1 = oracle::bump_velocity_error(g, b, 4);
  const double e2 = oracle::bump_velocity_error(oracle::centered_grid(b.lat, b.lon, 10.0, 256), b, 8);
  const double ratio = e1 / e2;
  const bool ok = speed_err < 0.02 && r_err <= 2e3 && ratio >= 3.5;
  return {ok, fmt("peak %.4f m/s vs %.4f (err %.2f%% < 2%%), r* - R = %.1f km (|.| <= 2), refinement ratio %.2f (>= 3.5)",
                  peak, b.peak_speed(), 100.0 * speed_err, r_err / 1e3, ratio)};
}

double sine_amplitude(std::span<const double> row, double period_px, std::size_t j0, std::size_t j1) {
  const auto n = static_cast<Eigen::Index>(j1 - j0);
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const double x = 2.0 * std::numbers::pi * static_cast<double>(j0 + static_cast<std::size_t>(m)) / period_px;
    a(m, 0) = std::sin(x);
    a(m, 1) = std::cos(x);
    a(m, 2) = 1.0;
    y(m) = row[j0 + static_cast<std::size_t>(m)];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(y);
  return std::hypot(c(0), c(1));
}

// 4. Gaussian blur transfer function of the fully clouded SST operator.
Outcome sst_transfer() {
  const auto g = GridSpec::gulf_stream(3);
  SstObsParams p;
  p.noise_sigma = 0.0;
  const double px = g.pixel_km_zonal();
  double worst = 0.0;
  for (double mult : {4.0, 8.0, 16.0}) {
    const double L = mult * p.sigma_x;
    Field truth(g, Units::celsius);
    for (std::size_t k = 0; k < g.nt; ++k)
      for (std::size_t i = 0; i < g.nlat; ++i)
        for (std::size_t j = 0; j < g.nlon; ++j)
          truth(k, i, j) = std::sin(2.0 * std::numbers::pi * static_cast<double>(j) * px / L);
    const Field out = simulate_sst_obs(truth, Field(g, Units::dimensionless, 1.0), p);
    const double amp = sine_amplitude(out.slice(1).subspan(64 * g.nlon, g.nlon), L / px, 16, g.nlon - 16);
    const double expected = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * p.sigma_x * p.sigma_x / (L * L));
    worst = std::max(worst, std::abs(amp - expected) / expected);
  }
  return {worst < 0.03, fmt("max relative attenuation error %.2f%% over L = 4, 8, 16 sigma_x (< 3%%)", 100.0 * worst)};
}

template <class Fn>
VelocityField pixel_flow(const GridSpec& g, std::size_t ci, std::size_t cj, Fn&& uv) {
  VelocityField vel{Field(g, Units::meters_per_second), Field(g, Units::meters_per_second)};
  for (std::size_t i = 0; i < g.nlat; ++i)
    for (std::size_t j = 0; j < g.nlon; ++j) {
      const double x = (static_cast<double>(j) - static_cast<double>(cj)) * g.dx_m(ci);
      const double y = (static_cast<double>(ci) - static_cast<double>(i)) * g.dy_m();
      const auto [u, v] = uv(x, y);
      vel.u(0, i, j) = u;
      vel.v(0, i, j) = v;
    }
  return vel;
}

// 5. LNAM anchors and bounds.
Outcome lnam_anchors() {
  const auto g = osse::testing::small_grid(11, 11, 1);
  const LnamParams p;
  const double cyc = lnam(pixel_flow(g, 5, 5, [](double x, double y) { return std::pair{-1e-5 * y, 1e-5 * x}; }), p)(0, 5, 5);
  const double anti = lnam(pixel_flow(g, 5, 5, [](double x, double y) { return std::pair{1e-5 * y, -1e-5 * x}; }), p)(0, 5, 5);
  const double saddle = lnam(pixel_flow(g, 5, 5, [](double x, double y) { return std::pair{1e-5 * x, -1e-5 * y}; }), p)(0, 5, 5);
  const auto gr = osse::testing::small_grid(16, 16, 1);
  std::mt19937_64 rng(5);
  double lo = 0.0, hi = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const VelocityField vel{osse::testing::random_field(gr, rng), osse::testing::random_field(gr, rng)};
    for (double v : lnam(vel, p).values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const bool ok = std::abs(cyc - 1.0) <= 1e-6 && std::abs(anti + 1.0) <= 1e-6 && std::abs(saddle) < 0.1 && lo >= -1.0 &&
                  hi <= 1.0;
  return {ok, fmt("cyclone %.9f, anticyclone %.9f, saddle %.3f, random range [%.4f, %.4f]", cyc, anti, saddle, lo, hi)};
}

// 6. Detection on the truth's own currents, scored against the generated eddies.
Outcome self_detection() {
  TruthConfig tc;
  tc.spec = GridSpec::gulf_stream(30);
  tc.n_eddies = 10;
  tc.radius_km = {45.0, 60.0};
  tc.drift_km_per_day = {0.0, 0.5};
  tc.min_separation_radii = 3.5;
  tc.seed = 6;
  const Truth t = generate_truth(tc);
  const auto det = detect_all(t.ssh, t.currents, LnamParams{});
  MatchReport rep;
  for (std::size_t k = 0; k < tc.spec.nt; ++k) {
    std::vector<Eddy> ref;
    for (const auto& s : t.eddies) {
      Eddy e;
      const auto [clat, clon] = s.center_at(tc.spec.time(k) - tc.spec.t0);
      e.center = e.barycenter = {clat, clon};
      e.mean_radius_km = e.max_radius_km = s.radius_m / 1000.0;
      e.polarity = s.amplitude_m > 0.0 ? Polarity::anticyclone : Polarity::cyclone;
      ref.push_back(e);
    }
    rep.append(match(ref, det[k]));
  }
  const auto s = scores(rep);
  const double pr = s.precision.value_or(0.0), rc = s.recall.value_or(0.0);
  return {pr == 1.0 && rc == 1.0,
          fmt("precision %.4f, recall %.4f (both = 1); %zu generated, %zu detected, %zu excluded over %zu days", pr, rc,
              rep.truth_total, rep.est_total, rep.excluded_multi, tc.spec.nt)};
}

// 7 and 8 share one desk benchmark per scenario seed.
struct DeskRun {
  std::map<std::string, double> rmse;  // central-frame RMSE per engine
  double held_out_rmse = 0.0;          // variational (unsup_reg) along the withheld satellite
  std::vector<WindowResult> windows;   // variational (unsup_reg) windows, all offsets
  Field truth;
};

const std::vector<std::string> kEngines{"var_unsup_reg", "var_unsup", "oi", "nearest"};

DeskRun desk_run(std::uint64_t seed) {
  nlohmann::json j = {{"truth", {{"grid", {{"preset", "desk"}, {"nt", 63}}}, {"seed", seed}}},
                      {"obs", {{"tracks", {{"n_satellites", 3}, {"seed", seed}}}, {"ssh", {{"sigma_noise", 0.019}, {"seed", seed}}}}},
                      {"reconstruct", {{"window", {{"length", 21}, {"stride", 7}, {"center_index", 10}}}}}};
  const pl::Config c = pl::Config::parse(j.dump());
  const Truth truth = generate_truth(pl::parse_truth(c));
  const GridSpec& g = truth.ssh.spec;
  const auto oc = pl::parse_obs(c);
  const auto obs = simulate_ssh_obs(truth.ssh, synthesize_tracks(g, oc.tracks), oc.ssh);
  const auto split = leave_one_satellite(obs, 2);
  pl::ReconConfig rc = pl::parse_reconstruct(c);

  DeskRun out;
  out.truth = truth.ssh;
  for (const auto& name : kEngines) {
    EngineConfig ec = rc.engine;
    if (name == "nearest") ec.engine = Engine::nearest;
    if (name == "oi") ec.engine = Engine::oi;
    if (name.starts_with("var")) {
      ec.engine = Engine::var;
      ec.var.loss_kind = name == "var_unsup" ? LossKind::unsup : LossKind::unsup_reg;
    }
    auto run = run_windows(split.input, g, rc.plan, ec, 1, {}, 1);
    out.rmse[name] = rmse_suite(truth.ssh, run.estimate).mu;
    if (name == "var_unsup_reg") {
      out.held_out_rmse = along_track_rmse(split.held_out, run.estimate);
      out.windows = std::move(run.windows);
    }
  }
  return out;
}

constexpr std::uint64_t kDeskSeed = 2;
constexpr double kTie = 1e-4;  // m; closer than this counts as a tie

DeskRun& primary_desk() {
  static DeskRun r = desk_run(kDeskSeed);
  return r;
}

Outcome desk_ordering() {
  const DeskRun& r = primary_desk();
  std::string detail;
  for (const auto& name : kEngines) detail += fmt("%s %.4f  ", name.c_str(), r.rmse.at(name));
  bool ok = true;
  std::vector<DeskRun> extra;
  for (std::size_t n = 0; n + 1 < kEngines.size(); ++n) {
    const auto& a = kEngines[n];
    const auto& b = kEngines[n + 1];
    double margin = r.rmse.at(b) - r.rmse.at(a);
    if (std::abs(margin) < kTie) {
      if (extra.empty())
        for (std::uint64_t s = 1; s <= 3; ++s) extra.push_back(desk_run(kDeskSeed + 100 * s));
      double ma = 0.0, mb = 0.0;
      for (const auto& e : extra) {
        ma += e.rmse.at(a) / 3.0;
        mb += e.rmse.at(b) / 3.0;
      }
      margin = mb - ma;
      detail += fmt("[tie %s/%s re-seeded: margin %.5f] ", a.c_str(), b.c_str(), margin);
    }
    if (margin < 0.0) {
      ok = false;
      detail += fmt("[%s > %s by %.5f] ", a.c_str(), b.c_str(), -margin);
    }
  }
  const bool held_ok = r.held_out_rmse >= 0.019 && r.held_out_rmse <= 0.029;
  detail += fmt("held-out along-track %.4f m (in [0.019, 0.029])", r.held_out_rmse);
  return {ok && held_ok, detail};
}

Outcome window_shape() {
  const DeskRun& r = primary_desk();
  const auto prof = window_profile(r.truth, pl::offset_frames(r.windows), 21);
  const auto am = prof.argmin();
  std::string curve;
  for (const auto& v : prof.rmse) curve += v ? fmt("%.4f ", *v) : std::string("- ");
  const bool ok = am && *am >= 8 && *am <= 12;
  return {ok, fmt("argmin offset %zu (in 8..12); rmse by offset: ", am.value_or(999)) + curve};
}

// 9. Resolution crossing against a brute-force DFT oracle.
Outcome spectral_oracle() {
  const auto g = osse::testing::small_grid(32, 256, 2, 0.1, 0.05);
  const Field t = oracle::power_law_field(g, 3.0, 9, 0.1);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 0.005);
  Field e = t;
  for (auto& v : e.values) v += noise(rng);
  const std::size_t m = oracle::brute_force_crossing_bin(t, e);
  const auto r = lambda_x(t, e);
  const double dk = 1.0 / (static_cast<double>(g.nlon) * g.dlon);
  const double bins = std::abs(1.0 / r.lambda - static_cast<double>(m) * dk) / dk;
  const bool ok = m > 0 && !r.at_bound && bins <= 1.0;
  return {ok, fmt("lambda_x %.4f deg vs oracle bin %zu (%.4f deg): %.2f bins apart (<= 1)", r.lambda, m,
                  m ? 1.0 / (static_cast<double>(m) * dk) : 0.0, bins)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string bytes = io::read_bytes(e.path());
    if (e.path().filename() == "manifest.json") {
      auto j = nlohmann::json::parse(bytes);
      j.erase("timing");
      bytes = j.dump();
    }
    files[fs::relative(e.path(), dir).string()] = std::move(bytes);
  }
  return files;
}

// 10. Full pipeline twice with the same config; every container and report equal.
Outcome determinism() {
  const fs::path root = osse::testing::scratch_dir("acceptance_determinism");
  const pl::Config c = pl::Config::parse(R"({
    "truth": {"grid": {"preset": "desk", "nt": 21}, "seed": 12},
    "obs": {"tracks": {"seed": 12}, "ssh": {"seed": 12}},
    "reconstruct": {"engine": "var", "n_ensemble": 2, "window": {"length": 11, "stride": 5},
                    "var": {"max_iters": 40, "init_jitter": 0.01}},
    "evaluate": {"eddy_day_stride": 3}
  })");
  auto once = [&] {
    fs::remove_all(root);
    pl::generate_truth_cmd(c, root / "truth");
    pl::simulate_obs_cmd(c, root / "truth", root / "obs", 2);
    pl::reconstruct_cmd(c, root / "obs", root / "est", {}, 1);
    pl::evaluate_cmd(c, root / "truth", {{"var", root / "est"}}, root / "obs" / "tracks_held_out.csv", root / "eval",
                     false, 1);
    return snapshot(root);
  };
  const auto a = once();
  const auto b = once();
  std::size_t differing = 0;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    if (it == b.end() || it->second != v) ++differing;
  }
  const bool ok = a.size() == b.size() && differing == 0 && a.size() > 10;
  fs::remove_all(root);
  return {ok, fmt("%zu files compared, %zu differ (manifest timing excluded)", a.size(), differing)};
}

TrackSet meridional_track(std::size_t n, double step_m, const std::function<double(double)>& h) {
  std::vector<PointSample> s;
  for (std::size_t k = 0; k < n; ++k) {
    PointSample p;
    p.sat_id = 1;
    p.t = 4.5;
    p.seconds_of_day = 500.0 + static_cast<double>(k);
    p.lat = 37.0 + static_cast<double>(k) * step_m / geo::meters_per_degree;
    p.lon = -61.0;
    p.value = h(static_cast<double>(k) * step_m);
    s.push_back(p);
  }
  return TrackSet(std::move(s));
}

// 11. Along-track finite differences.
Outcome track_calculus() {
  const double b = 4e-10;
  const auto d2 = second_derivative(along_track_derivative(meridional_track(30, 6.5e3, [&](double s) { return b * s * s; })));
  double worst = 0.0;
  for (const auto& s : d2.samples) worst = std::max(worst, std::abs(s.value - 2.0 * b) / (2.0 * b));
  // A gap of two seconds breaks the pair.
  std::vector<PointSample> gap(2);
  gap[0].lat = 36.0;
  gap[1].lat = 36.06;
  gap[1].seconds_of_day = 2.0;
  const std::size_t n_gap = along_track_derivative(TrackSet(gap)).size();
  gap[1].seconds_of_day = 1.0;
  const std::size_t n_ok = along_track_derivative(TrackSet(gap)).size();
  // Consecutive samples of different satellites never pair.
  gap[1].sat_id = 3;
  const std::size_t n_sat = along_track_derivative(TrackSet(gap)).size();
  const bool ok = d2.size() == 28 && worst < 1e-10 && n_gap == 0 && n_ok == 1 && n_sat == 0;
  return {ok, fmt("second derivative rel. error %.2e (< 1e-10) on %zu samples; 2 s gap pairs %zu, 1 s gap pairs %zu, "
                  "cross-satellite pairs %zu",
                  worst, d2.size(), n_gap, n_ok, n_sat)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "adjoint", 5, adjoint},
      {2, "gradients", 30, gradients},
      {3, "geostrophy", 10, geostrophy},
      {4, "sst-transfer", 10, sst_transfer},
      {5, "lnam-anchors", 20, lnam_anchors},
      {6, "self-detection", 60, self_detection},
      {7, "desk-ordering", 600, desk_ordering},
      {8, "window-profile", 600, window_shape},
      {9, "spectral-oracle", 10, spectral_oracle},
      {10, "determinism", 600, determinism},
      {11, "track-calculus", 5, track_calculus},
  };
  std::set<int> pick;
  for (int a = 1; a < argc; ++a) pick.insert(std::atoi(argv[a]));
  int failures = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %2d %-16s %7.2fs (limit %gs%s)  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                c.limit_s, in_time ? "" : ", exceeded", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
