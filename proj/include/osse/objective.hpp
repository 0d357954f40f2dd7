#pragma once

// Reconstruction losses and their gradients with respect to the gridded
// estimate:
//   supervised     mean over all cells of (X - Xhat)^2
//   unsupervised   mean over observations of (Y - H(Xhat))^2
//   regularized    unsupervised + lambda1 * MSE of normalized first
//                  along-track derivatives + lambda2 * MSE of normalized
//                  second derivatives
// plus the leave-one-satellite-out split and mean/std normalization.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osse/along_track.hpp"
#include "osse/error.hpp"
#include "osse/grid.hpp"

namespace osse {

struct LossParams {
  double lambda1 = 0.05;
  double lambda2 = 0.05;
};

enum class LossKind { sup, unsup, unsup_reg };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::sup: return "sup";
    case LossKind::unsup: return "unsup";
    case LossKind::unsup_reg: return "unsup_reg";
  }
  return "?";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  if (s == "sup") return LossKind::sup;
  if (s == "unsup") return LossKind::unsup;
  if (s == "unsup_reg") return LossKind::unsup_reg;
  fail("unknown loss kind '" + std::string(s) + "'");
}

struct NormStats {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const { return (x - mean) / std; }
  double unapply(double z) const { return z * std + mean; }
};

/// Population mean and standard deviation of observed samples.
inline NormStats compute_norm_stats(std::span<const double> samples) {
  require(!samples.empty(), "cannot compute normalization statistics of an empty sample");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) fail("zero variance: normalization statistics are degenerate");
  return {mean, sd};
}

inline std::vector<double> apply_norm(std::span<const double> x, const NormStats& s) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s.apply(x[i]);
  return out;
}

inline std::vector<double> unapply_norm(std::span<const double> z, const NormStats& s) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = s.unapply(z[i]);
  return out;
}

/// Normalizes observed pixels of a rasterized field and zero-fills the rest.
inline Field normalize_observed(const Field& raster, const Field& counts, const NormStats& s) {
  require(raster.spec == counts.spec, "raster and count grids differ");
  Field out(raster.spec, Units::dimensionless, 0.0);
  for (std::size_t n = 0; n < out.values.size(); ++n)
    if (counts.values[n] > 0.0) out.values[n] = s.apply(raster.values[n]);
  return out;
}

/// Statistics for each derivative order, taken from observed derivatives.
struct DerivativeNorm {
  NormStats d1;
  NormStats d2;
};

/// Falls back to unit statistics (with a warning) when an order has fewer
/// than two samples or no spread.
inline DerivativeNorm derivative_norm_stats(const TrackSet& obs, Diagnostics* diag = nullptr) {
  const auto d1 = along_track_derivative(obs);
  const auto d2 = second_derivative(d1);
  auto stats = [&](const DerivedTrackSet& d, const char* name) {
    const auto v = d.samples.values();
    try {
      if (v.size() >= 2) return compute_norm_stats(v);
    } catch (const Error&) {
    }
    if (diag) diag->warn(std::string("degenerate ") + name + " derivative statistics; using unit scaling");
    return NormStats{};
  };
  return {stats(d1, "first"), stats(d2, "second")};
}

inline double loss_sup(const Field& truth, const Field& est) {
  if (!(truth.spec == est.spec)) fail("shape mismatch between truth and estimate");
  double acc = 0.0;
  for (std::size_t n = 0; n < truth.values.size(); ++n) {
    const double d = truth.values[n] - est.values[n];
    acc += d * d;
  }
  return acc / static_cast<double>(truth.values.size());
}

/// Observation-space loss with precomputed sampling stencils and
/// along-track difference operators; reused across solver iterations.
class ObservationLoss {
 public:
  ObservationLoss(const TrackSet& obs, const GridSpec& spec, LossKind kind, const LossParams& p = {},
                  const DerivativeNorm& norm = {}, Diagnostics* diag = nullptr)
      : kind_(kind), params_(p), norm_(norm), sampler_(spec, obs), y_(obs.values()) {
    require(kind != LossKind::sup, "ObservationLoss handles the observation-space losses only");
    if (obs.empty()) fail("no constraint points");
    require(p.lambda1 >= 0.0 && p.lambda2 >= 0.0, "regularization coefficients must be non-negative");
    if (kind == LossKind::unsup_reg) {
      d1_ = along_track_derivative(obs, 2.0, diag);
      d2_ = second_derivative(d1_, 2.0, diag);
      d1_obs_ = d1_.samples.values();
      d2_obs_ = d2_.samples.values();
      use1_ = p.lambda1 > 0.0 && d1_.size() > 0;
      use2_ = p.lambda2 > 0.0 && d2_.size() > 0;
      if (d1_.size() == 0 && diag) diag->warn("no valid along-track derivative pairs; using the unregularized loss");
      require(norm.d1.std > 0.0 && norm.d2.std > 0.0, "derivative normalization needs positive std");
    }
  }

  const GridSpec& spec() const { return sampler_.spec(); }
  std::size_t n_obs() const { return y_.size(); }
  std::size_t n_first() const { return d1_.size(); }
  std::size_t n_second() const { return d2_.size(); }

  double value(std::span<const double> x) const { return evaluate(x, nullptr); }

  /// Loss value; the gradient with respect to every cell is written to grad.
  double value_and_gradient(std::span<const double> x, std::span<double> grad) const {
    return evaluate(x, &grad);
  }

 private:
  double evaluate(std::span<const double> x, std::span<double>* grad) const {
    const auto hx = sampler_.forward(x);
    const double n0 = static_cast<double>(hx.size());
    std::vector<double> r0(hx.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < hx.size(); ++i) {
      r0[i] = hx[i] - y_[i];
      loss += r0[i] * r0[i];
    }
    loss /= n0;
    std::vector<double> back;
    if (grad) {
      back.resize(hx.size());
      for (std::size_t i = 0; i < hx.size(); ++i) back[i] = 2.0 * r0[i] / n0;
    }
    if (use1_ || use2_) {
      const auto e1 = d1_.apply(hx);
      std::vector<double> back1;
      if (grad) back1.assign(e1.size(), 0.0);
      if (use1_) {
        const double n1 = static_cast<double>(e1.size());
        const double s = norm_.d1.std;
        double acc = 0.0;
        for (std::size_t i = 0; i < e1.size(); ++i) {
          const double r = (e1[i] - d1_obs_[i]) / s;
          acc += r * r;
          if (grad) back1[i] += 2.0 * params_.lambda1 * r / (n1 * s);
        }
        loss += params_.lambda1 * acc / n1;
      }
      if (use2_) {
        const auto e2 = d2_.apply(e1);
        const double n2 = static_cast<double>(e2.size());
        const double s = norm_.d2.std;
        std::vector<double> back2(e2.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < e2.size(); ++i) {
          const double r = (e2[i] - d2_obs_[i]) / s;
          acc += r * r;
          back2[i] = 2.0 * params_.lambda2 * r / (n2 * s);
        }
        loss += params_.lambda2 * acc / n2;
        if (grad) d2_.adjoint_add(back2, back1);
      }
      if (grad) d1_.adjoint_add(back1, back);
    }
    if (grad) {
      std::fill(grad->begin(), grad->end(), 0.0);
      sampler_.adjoint_add(back, *grad);
    }
    return loss;
  }

  LossKind kind_;
  LossParams params_;
  DerivativeNorm norm_;
  TrilinearOperator sampler_;
  std::vector<double> y_;
  DerivedTrackSet d1_, d2_;
  std::vector<double> d1_obs_, d2_obs_;
  bool use1_ = false, use2_ = false;
};

inline double loss_unsup(const TrackSet& obs, const Field& est) {
  return ObservationLoss(obs, est.spec, LossKind::unsup).value(est.values);
}

inline double loss_unsup_reg(const TrackSet& obs, const Field& est, const LossParams& p, const DerivativeNorm& norm,
                             Diagnostics* diag = nullptr) {
  return ObservationLoss(obs, est.spec, LossKind::unsup_reg, p, norm, diag).value(est.values);
}

/// Gradient of the supervised loss: 2 (est - truth) / (T H W).
inline Field grad_loss_sup(const Field& truth, const Field& est) {
  if (!(truth.spec == est.spec)) fail("shape mismatch between truth and estimate");
  Field g(est.spec, Units::dimensionless, 0.0);
  const double n = static_cast<double>(est.values.size());
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = 2.0 * (est.values[i] - truth.values[i]) / n;
  return g;
}

inline Field grad_loss(const TrackSet& obs, const Field& est, LossKind kind, const LossParams& p = {},
                       const DerivativeNorm& norm = {}) {
  require(kind != LossKind::sup, "use grad_loss_sup for the supervised loss");
  Field g(est.spec, Units::dimensionless, 0.0);
  ObservationLoss(obs, est.spec, kind, p, norm).value_and_gradient(est.values, g.values);
  return g;
}

struct SatelliteSplit {
  TrackSet input;       // all satellites but the held-out one
  TrackSet constraint;  // every observation
  TrackSet held_out;
};

inline SatelliteSplit leave_one_satellite(const TrackSet& obs, int held_out) {
  const auto sats = obs.satellites();
  if (std::find(sats.begin(), sats.end(), held_out) == sats.end())
    fail("unknown sat_id " + std::to_string(held_out));
  return {obs.filter([&](const PointSample& s) { return s.sat_id != held_out; }), obs,
          obs.filter([&](const PointSample& s) { return s.sat_id == held_out; })};
}

}  // namespace osse
