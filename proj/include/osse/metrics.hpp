#pragma once

// Reconstruction scores: RMSE and its temporal spread, spectral effective
// resolution, current RMSE, along-track RMSE and the window-position
// error profile.

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "osse/dynamics.hpp"
#include "osse/error.hpp"
#include "osse/field_io.hpp"
#include "osse/geo.hpp"
#include "osse/grid.hpp"

namespace osse {

/// Latitude band; rows whose center lies inside [lat_min, lat_max] count.
struct Region {
  double lat_min = -90.0;
  double lat_max = 90.0;
};

struct RmseSuite {
  double mu = 0.0;
  double sigma_t = 0.0;
  std::vector<double> daily;
  std::vector<std::size_t> daily_count;
};

/// Per-day spatial RMSE, overall RMSE (mu) and population standard
/// deviation of the daily series (sigma_t). Cells missing in either field
/// are skipped.
inline RmseSuite rmse_suite(const Field& truth, const Field& est, const std::optional<Region>& region = {}) {
  if (!(truth.spec == est.spec)) fail("truth and estimate grids differ");
  const auto& g = truth.spec;
  RmseSuite r;
  double total = 0.0;
  std::size_t total_n = 0;
  for (std::size_t k = 0; k < g.nt; ++k) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < g.nlat; ++i) {
      const double lat = g.lat(i);
      if (region && (lat < region->lat_min || lat > region->lat_max)) continue;
      for (std::size_t j = 0; j < g.nlon; ++j) {
        const double d = est(k, i, j) - truth(k, i, j);
        if (std::isnan(d)) continue;
        acc += d * d;
        ++n;
      }
    }
    if (n > 0) {
      r.daily.push_back(std::sqrt(acc / static_cast<double>(n)));
      r.daily_count.push_back(n);
      total += acc;
      total_n += n;
    }
  }
  if (total_n == 0) fail("evaluation region contains no valid cells");
  r.mu = std::sqrt(total / static_cast<double>(total_n));
  double mean = 0.0;
  for (double v : r.daily) mean += v;
  mean /= static_cast<double>(r.daily.size());
  double ss = 0.0;
  for (double v : r.daily) ss += (v - mean) * (v - mean);
  r.sigma_t = std::sqrt(ss / static_cast<double>(r.daily.size()));
  return r;
}

struct Spectrum {
  std::vector<double> k;       // cycles per unit of the transformed axis, k > 0
  std::vector<double> psd_err;
  std::vector<double> psd_sig;
};

namespace detail {

/// Removes the least-squares line, applies a Hann window, and returns
/// |X_m|^2 for m = 1..n/2.
class Periodogram {
 public:
  explicit Periodogram(std::size_t n) : n_(n), win_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    for (std::size_t i = 0; i < n; ++i)
      win_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  ~Periodogram() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  Periodogram(const Periodogram&) = delete;
  Periodogram& operator=(const Periodogram&) = delete;

  void accumulate(const std::vector<double>& x, std::vector<double>& acc) {
    const double n = static_cast<double>(n_);
    const double xm = 0.5 * (n - 1.0);
    double my = 0.0, sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n_; ++i) my += x[i];
    my /= n;
    for (std::size_t i = 0; i < n_; ++i) {
      const double dx = static_cast<double>(i) - xm;
      sxy += dx * (x[i] - my);
      sxx += dx * dx;
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      in_[i] = (x[i] - my - slope * (static_cast<double>(i) - xm)) * win_[i];
    fftw_execute(plan_);
    for (std::size_t m = 1; m <= n_ / 2; ++m) acc[m - 1] += out_[m][0] * out_[m][0] + out_[m][1] * out_[m][1];
  }

 private:
  std::size_t n_;
  std::vector<double> win_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace detail

enum class SpectralAxis { lon, time };

/// Averaged periodograms of the error (est - truth) and of the truth along
/// one axis.
inline Spectrum spectra(const Field& truth, const Field& est, SpectralAxis axis) {
  if (!(truth.spec == est.spec)) fail("truth and estimate grids differ");
  const auto& g = truth.spec;
  const std::size_t n = axis == SpectralAxis::lon ? g.nlon : g.nt;
  if (n < 16) fail("spectral metrics need at least 16 samples along the axis");
  const double step = axis == SpectralAxis::lon ? g.dlon : g.dt;
  Spectrum s;
  s.psd_err.assign(n / 2, 0.0);
  s.psd_sig.assign(n / 2, 0.0);
  for (std::size_t m = 1; m <= n / 2; ++m) s.k.push_back(static_cast<double>(m) / (static_cast<double>(n) * step));
  detail::Periodogram pg(n);
  std::vector<double> sig(n), err(n);
  std::size_t series = 0;
  auto add = [&] {
    for (std::size_t q = 0; q < n; ++q)
      if (std::isnan(sig[q]) || std::isnan(err[q])) return;
    pg.accumulate(sig, s.psd_sig);
    pg.accumulate(err, s.psd_err);
    ++series;
  };
  if (axis == SpectralAxis::lon) {
    for (std::size_t k = 0; k < g.nt; ++k)
      for (std::size_t i = 0; i < g.nlat; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          sig[j] = truth(k, i, j);
          err[j] = est(k, i, j) - truth(k, i, j);
        }
        add();
      }
  } else {
    for (std::size_t i = 0; i < g.nlat; ++i)
      for (std::size_t j = 0; j < g.nlon; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
          sig[k] = truth(k, i, j);
          err[k] = est(k, i, j) - truth(k, i, j);
        }
        add();
      }
  }
  if (series == 0) fail_data("no complete series for the spectral metric");
  double sig_total = 0.0;
  for (std::size_t m = 0; m < s.psd_sig.size(); ++m) {
    s.psd_sig[m] /= static_cast<double>(series);
    s.psd_err[m] /= static_cast<double>(series);
    sig_total += s.psd_sig[m];
  }
  if (!(sig_total > 0.0)) fail("degenerate signal: zero spectral variance");
  return s;
}

struct Resolution {
  double lambda = 0.0;    // wavelength in units of the transformed axis
  bool at_bound = false;  // ratio never reached the threshold; lambda = 2 * step
  double threshold = 1.0;
};

/// Wavelength 1/k* where PSD_err / PSD_sig first reaches the threshold
/// scanning from the largest scales, with k* linearly interpolated between
/// neighbouring wavenumbers.
inline Resolution crossing(const Spectrum& s, double threshold, double step) {
  require(threshold > 0.0, "threshold must be positive");
  Resolution r;
  r.threshold = threshold;
  double prev_ratio = 0.0;
  for (std::size_t m = 0; m < s.k.size(); ++m) {
    const double ratio = s.psd_sig[m] > 0.0 ? s.psd_err[m] / s.psd_sig[m] : INFINITY;
    if (ratio >= threshold) {
      if (m == 0 || !std::isfinite(ratio)) {
        r.lambda = 1.0 / s.k[m];
        return r;
      }
      const double f = (threshold - prev_ratio) / (ratio - prev_ratio);
      r.lambda = 1.0 / (s.k[m - 1] + f * (s.k[m] - s.k[m - 1]));
      return r;
    }
    prev_ratio = ratio;
  }
  r.lambda = 2.0 * step;
  r.at_bound = true;
  return r;
}

/// Effective spatial resolution in degrees of longitude.
inline Resolution lambda_x(const Field& truth, const Field& est, double threshold = 1.0) {
  return crossing(spectra(truth, est, SpectralAxis::lon), threshold, truth.spec.dlon);
}

/// Effective temporal resolution in days.
inline Resolution lambda_t(const Field& truth, const Field& est, double threshold = 1.0) {
  return crossing(spectra(truth, est, SpectralAxis::time), threshold, truth.spec.dt);
}

inline double degrees_to_km(double lambda_deg, double lat) {
  return lambda_deg * geo::meters_per_degree_lon(lat) / 1000.0;
}

struct CurrentRmse {
  double mu_u = 0.0;
  double mu_v = 0.0;
};

/// RMSE between reference currents and the geostrophic currents of est_ssh.
inline CurrentRmse current_rmse(const VelocityField& truth_vel, const Field& est_ssh, const PhysConsts& c = {}) {
  require(truth_vel.u.spec == est_ssh.spec && truth_vel.v.spec == est_ssh.spec, "current and SSH grids differ");
  const VelocityField est = geostrophic_currents(est_ssh, c);
  auto rms = [](const Field& a, const Field& b) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t q = 0; q < a.values.size(); ++q) {
      const double d = a.values[q] - b.values[q];
      if (std::isnan(d)) continue;
      acc += d * d;
      ++n;
    }
    if (n == 0) fail_data("no valid cells for the current RMSE");
    return std::sqrt(acc / static_cast<double>(n));
  };
  return {rms(truth_vel.u, est.u), rms(truth_vel.v, est.v)};
}

inline double along_track_rmse(const TrackSet& held_out, const Field& est) {
  if (held_out.empty()) fail("empty held-out track set");
  const auto pred = sample_trilinear(est, held_out);
  double acc = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    const double d = pred[n] - held_out[n].value;
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

/// One reconstructed frame at a given window offset and the truth frame it
/// estimates.
struct OffsetFrame {
  std::size_t offset = 0;
  std::size_t truth_frame = 0;
  std::vector<double> values;
};

struct WindowProfile {
  std::vector<std::optional<double>> rmse;  // per offset; empty where no frame was supplied
  std::size_t window_len = 0;

  /// Days of future data available at an offset (window_len - 1 is causal).
  std::size_t delay(std::size_t offset) const { return window_len - 1 - offset; }
  std::optional<std::size_t> argmin() const {
    std::optional<std::size_t> best;
    for (std::size_t o = 0; o < rmse.size(); ++o)
      if (rmse[o] && (!best || *rmse[o] < *rmse[*best])) best = o;
    return best;
  }
  bool complete() const {
    return std::all_of(rmse.begin(), rmse.end(), [](const auto& v) { return v.has_value(); });
  }
};

/// RMSE per window offset, pooled over all frames supplied for it.
inline WindowProfile window_profile(const Field& truth, const std::vector<OffsetFrame>& frames, std::size_t window_len) {
  require(window_len >= 1, "window length must be at least 1");
  WindowProfile p;
  p.window_len = window_len;
  std::vector<double> acc(window_len, 0.0);
  std::vector<std::size_t> cnt(window_len, 0);
  for (const auto& f : frames) {
    require(f.offset < window_len, "offset outside the window");
    require(f.truth_frame < truth.spec.nt, "frame outside the truth record");
    require(f.values.size() == truth.spec.slice_size(), "frame size differs from the truth grid");
    const auto t = truth.slice(f.truth_frame);
    for (std::size_t q = 0; q < t.size(); ++q) {
      const double d = f.values[q] - t[q];
      if (std::isnan(d)) continue;
      acc[f.offset] += d * d;
      ++cnt[f.offset];
    }
  }
  p.rmse.resize(window_len);
  for (std::size_t o = 0; o < window_len; ++o)
    if (cnt[o] > 0) p.rmse[o] = std::sqrt(acc[o] / static_cast<double>(cnt[o]));
  return p;
}

struct EvalReport {
  RmseSuite rmse;
  std::optional<Resolution> lambda_x;  // degrees
  std::optional<Resolution> lambda_t;  // days
  std::optional<CurrentRmse> currents;
  std::optional<double> along_track_rmse;
};

inline nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["mu"] = r.rmse.mu;
  j["sigma_t"] = r.rmse.sigma_t;
  j["daily_rmse"] = r.rmse.daily;
  auto res = [](const std::optional<Resolution>& x) {
    if (!x) return json(nullptr);
    return json{{"value", x->lambda}, {"at_grid_bound", x->at_bound}, {"threshold", x->threshold}};
  };
  j["lambda_x_deg"] = res(r.lambda_x);
  j["lambda_t_days"] = res(r.lambda_t);
  j["mu_u"] = r.currents ? json(r.currents->mu_u) : json(nullptr);
  j["mu_v"] = r.currents ? json(r.currents->mu_v) : json(nullptr);
  j["along_track_rmse"] = opt(r.along_track_rmse);
  return j;
}

inline void write_daily_csv(const std::filesystem::path& path, const RmseSuite& r) {
  std::string out = "day,rmse,cells\n";
  for (std::size_t k = 0; k < r.daily.size(); ++k)
    out += std::to_string(k) + ',' + io::format_double(r.daily[k]) + ',' + std::to_string(r.daily_count[k]) + '\n';
  io::write_bytes(path, out);
}

inline void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s) {
  std::string out = "k,psd_err,psd_sig\n";
  for (std::size_t m = 0; m < s.k.size(); ++m)
    out += io::format_double(s.k[m]) + ',' + io::format_double(s.psd_err[m]) + ',' + io::format_double(s.psd_sig[m]) +
           '\n';
  io::write_bytes(path, out);
}

inline void write_profile_csv(const std::filesystem::path& path, const WindowProfile& p) {
  std::string out = "offset,delay_days,rmse\n";
  for (std::size_t o = 0; o < p.rmse.size(); ++o)
    out += std::to_string(o) + ',' + std::to_string(p.delay(o)) + ',' + (p.rmse[o] ? io::format_double(*p.rmse[o]) : "") +
           '\n';
  io::write_bytes(path, out);
}

}  // namespace osse
