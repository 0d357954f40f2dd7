#pragma once

// Sliding-window reconstruction with per-window normalization and
// ensemble averaging.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "osse/error.hpp"
#include "osse/grid.hpp"
#include "osse/obs.hpp"
#include "osse/objective.hpp"
#include "osse/oi.hpp"
#include "osse/parallel.hpp"
#include "osse/variational.hpp"

namespace osse {

struct WindowPlan {
  std::size_t window_len = 21;
  std::size_t stride = 1;
  std::size_t center_index = 10;

  void validate() const {
    require(window_len >= 1 && stride >= 1, "window_len and stride must be at least 1");
    require(center_index < window_len, "center_index must lie inside the window");
  }
};

enum class Engine { nearest, oi, var };

inline std::string_view to_string(Engine e) {
  switch (e) {
    case Engine::nearest: return "nearest";
    case Engine::oi: return "oi";
    case Engine::var: return "var";
  }
  return "?";
}

inline Engine engine_from_string(std::string_view s) {
  if (s == "nearest") return Engine::nearest;
  if (s == "oi") return Engine::oi;
  if (s == "var") return Engine::var;
  fail("unknown engine '" + std::string(s) + "'");
}

struct EngineConfig {
  Engine engine = Engine::oi;
  OiParams oi;  // obs_noise_var in m^2; rescaled by the window variance
  VarParams var;
  double nearest_days_to_px = 1.0;
};

/// Window start frames: every stride, plus a final window flush with the
/// end of the record.
inline std::vector<std::size_t> window_starts(std::size_t nt, const WindowPlan& plan) {
  plan.validate();
  if (nt < plan.window_len)
    fail("record of " + std::to_string(nt) + " days is shorter than one window of " +
         std::to_string(plan.window_len));
  std::vector<std::size_t> starts;
  for (std::size_t k0 = 0; k0 + plan.window_len <= nt; k0 += plan.stride) starts.push_back(k0);
  if (starts.back() + plan.window_len < nt) starts.push_back(nt - plan.window_len);
  return starts;
}

/// Observations whose nearest time node lies inside [k0, k0 + len).
inline TrackSet window_obs(const TrackSet& obs, const GridSpec& spec, std::size_t k0, std::size_t len) {
  const double lo = spec.time(k0) - 0.5 * spec.dt;
  const double hi = spec.time(k0 + len - 1) + 0.5 * spec.dt;
  return obs.filter([&](const PointSample& s) { return s.t >= lo && s.t < hi; });
}

struct WindowResult {
  std::size_t k0 = 0;
  Field frames;  // window_len frames in physical units
  std::vector<TraceEntry> trace;
  NormStats norm;
};

/// Reconstructs one window for every member seed. The OI estimate (and
/// the variational warm start) is shared by all members; seeds only act
/// through the jittered variational start.
inline std::vector<WindowResult> reconstruct_window(const TrackSet& obs, const GridSpec& spec, std::size_t k0,
                                                    const WindowPlan& plan, const EngineConfig& cfg,
                                                    const std::vector<std::uint64_t>& seeds,
                                                    Diagnostics* diag = nullptr) {
  const GridSpec wspec = spec.with_time(spec.time(k0), plan.window_len);
  const TrackSet wobs = window_obs(obs, spec, k0, plan.window_len);
  if (wobs.empty()) fail_data("no observations inside the window starting at day " + std::to_string(k0));
  WindowResult base{k0, Field(wspec, Units::meters), {}, {}};

  if (cfg.engine == Engine::nearest) {
    base.frames = nearest_fill(rasterize_tracks(wobs, wspec), cfg.nearest_days_to_px);
    base.frames.units = Units::meters;
    return std::vector<WindowResult>(seeds.size(), base);
  }

  const auto vals = wobs.values();
  base.norm = compute_norm_stats(vals);
  const TrackSet nobs = wobs.with_values(apply_norm(vals, base.norm));
  OiParams oi = cfg.oi;
  oi.signal_var = 1.0;
  oi.obs_noise_var = cfg.oi.obs_noise_var / (base.norm.std * base.norm.std);
  const Field oi_est = oi_reconstruct(nobs, wspec, oi);
  auto finish = [&](Field est, WindowResult r) {
    for (auto& v : est.values) v = base.norm.unapply(v);
    est.units = Units::meters;
    r.frames = std::move(est);
    return r;
  };
  if (cfg.engine == Engine::oi) return std::vector<WindowResult>(seeds.size(), finish(oi_est, base));

  const DerivativeNorm dn =
      cfg.var.loss_kind == LossKind::unsup_reg ? derivative_norm_stats(nobs, diag) : DerivativeNorm{};
  std::vector<WindowResult> out;
  for (auto seed : seeds) {
    VarParams vp = cfg.var;
    vp.seed = seed;
    auto res = variational_reconstruct(nobs, wspec, vp, oi_est, dn, diag);
    WindowResult r = base;
    r.trace = std::move(res.trace);
    out.push_back(finish(std::move(res.field), std::move(r)));
  }
  return out;
}

/// Incremental mean; identical members reproduce the member bitwise.
inline void accumulate_mean(std::vector<double>& mean, std::span<const double> x, std::size_t count) {
  if (count == 1) {
    mean.assign(x.begin(), x.end());
    return;
  }
  const double inv = static_cast<double>(count);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (x[i] - mean[i]) / inv;
}

struct RunResult {
  Field estimate;                      // ensemble mean assembled from window centers
  std::vector<Field> members;          // per-member assembled fields
  std::vector<WindowResult> windows;   // ensemble-mean window outputs (all offsets)
  std::vector<std::vector<std::vector<TraceEntry>>> traces;  // [member][window]
};

/// Frame k takes the window whose center frame is closest (earlier on ties),
/// so the first and last windows also supply the record edges.
inline std::size_t window_for_frame(std::size_t k, const std::vector<std::size_t>& starts, std::size_t center) {
  std::size_t best = 0;
  double bd = INFINITY;
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const double d = std::abs(static_cast<double>(starts[w] + center) - static_cast<double>(k));
    if (d < bd) {
      bd = d;
      best = w;
    }
  }
  return best;
}

inline Field assemble(const std::vector<WindowResult>& windows, const std::vector<std::size_t>& starts,
                      const GridSpec& spec, std::size_t center) {
  Field out(spec, Units::meters, 0.0);
  for (std::size_t k = 0; k < spec.nt; ++k) {
    const std::size_t w = window_for_frame(k, starts, center);
    out.set_slice(k, windows[w].frames.slice(k - windows[w].k0));
  }
  return out;
}

/// Runs every window for n_ensemble members (seeds[m], or base seed + m when
/// seeds is short) and averages the members.
inline RunResult run_windows(const TrackSet& obs, const GridSpec& spec, const WindowPlan& plan,
                             const EngineConfig& cfg, std::size_t n_ensemble, const std::vector<std::uint64_t>& seeds,
                             std::size_t workers = 1, Diagnostics* diag = nullptr) {
  require(n_ensemble >= 1, "n_ensemble must be at least 1");
  const auto starts = window_starts(spec.nt, plan);
  const std::size_t nw = starts.size();
  auto seed_of = [&](std::size_t m) {
    if (m < seeds.size()) return seeds[m];
    return (seeds.empty() ? cfg.var.seed : seeds.front()) + m;
  };

  std::vector<std::uint64_t> member_seeds;
  for (std::size_t m = 0; m < n_ensemble; ++m) member_seeds.push_back(seed_of(m));

  std::vector<std::vector<WindowResult>> per(n_ensemble, std::vector<WindowResult>(nw));
  std::vector<Diagnostics> job_diag(nw);
  parallel_for(nw, workers, [&](std::size_t w) {
    auto results = reconstruct_window(obs, spec, starts[w], plan, cfg, member_seeds, &job_diag[w]);
    for (std::size_t m = 0; m < n_ensemble; ++m) per[m][w] = std::move(results[m]);
  });
  if (diag)
    for (const auto& d : job_diag) {
      for (const auto& msg : d.warnings) diag->warn(msg);
      for (const auto& [key, v] : d.counters) diag->count(key, v);
    }

  RunResult res;
  res.windows.resize(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    res.windows[w].k0 = starts[w];
    res.windows[w].norm = per[0][w].norm;
    std::vector<double> mean;
    for (std::size_t m = 0; m < n_ensemble; ++m) accumulate_mean(mean, per[m][w].frames.values, m + 1);
    res.windows[w].frames = Field(per[0][w].frames.spec, Units::meters, std::move(mean));
  }
  res.traces.resize(n_ensemble);
  for (std::size_t m = 0; m < n_ensemble; ++m) {
    res.members.push_back(assemble(per[m], starts, spec, plan.center_index));
    for (auto& wr : per[m]) res.traces[m].push_back(std::move(wr.trace));
  }
  res.estimate = assemble(res.windows, starts, spec, plan.center_index);
  return res;
}

struct WeightSearch {
  double best = 0.0;
  std::vector<std::pair<double, double>> scores;  // (smooth_weight, validation along-track RMSE)
  int validation_sat = -1;
};

/// Chooses the variational smooth_weight among candidates by withholding
/// one satellite of the input set and scoring along its tracks.
inline WeightSearch select_smooth_weight(const TrackSet& input, const GridSpec& spec, const WindowPlan& plan,
                                         EngineConfig cfg, const std::vector<double>& candidates,
                                         int validation_sat, std::size_t workers = 1) {
  require(!candidates.empty(), "no smooth_weight candidates");
  const auto split = leave_one_satellite(input, validation_sat);
  if (split.input.empty() || split.held_out.empty()) fail_data("validation split leaves an empty track set");
  cfg.engine = Engine::var;
  WeightSearch ws;
  ws.validation_sat = validation_sat;
  double best_score = INFINITY;
  for (double w : candidates) {
    cfg.var.smooth_weight = w;
    const auto run = run_windows(split.input, spec, plan, cfg, 1, {cfg.var.seed}, workers);
    const auto pred = sample_trilinear(run.estimate, split.held_out);
    double acc = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n) acc += (pred[n] - split.held_out[n].value) * (pred[n] - split.held_out[n].value);
    const double score = std::sqrt(acc / static_cast<double>(pred.size()));
    ws.scores.emplace_back(w, score);
    if (score < best_score) {
      best_score = score;
      ws.best = w;
    }
  }
  return ws;
}

}  // namespace osse
