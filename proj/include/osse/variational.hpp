#pragma once

// Variational interpolation: gradient descent with backtracking on an
// observation-space loss plus a finite-difference smoothness prior.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "osse/error.hpp"
#include "osse/field_io.hpp"
#include "osse/grid.hpp"
#include "osse/objective.hpp"
#include "osse/parallel.hpp"

namespace osse {

struct VarParams {
  LossKind loss_kind = LossKind::unsup_reg;
  double lambda1 = 0.05;
  double lambda2 = 0.05;
  double smooth_weight = 1.0;
  double time_smooth_ratio = 10.0;  // weight of day-to-day differences relative to pixel-to-pixel
  std::size_t max_iters = 2000;
  double step_init = 0.5;
  double step_decay = 0.5;
  double tol_rel = 1e-6;
  double grad_tol = 1e-12;
  double init_jitter = 0.0;  // std of the seeded perturbation added to the initial field
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    require(loss_kind != LossKind::sup, "variational engine needs an observation-space loss");
    require(lambda1 >= 0.0 && lambda2 >= 0.0, "lambda must be non-negative");
    require(smooth_weight >= 0.0 && time_smooth_ratio >= 0.0, "smoothness weights must be non-negative");
    require(max_iters >= 1, "max_iters must be at least 1");
    require(step_init > 0.0 && step_decay > 0.0 && step_decay < 1.0, "step_init > 0 and 0 < step_decay < 1 required");
    require(tol_rel > 0.0 && grad_tol >= 0.0, "tolerances must be positive");
    require(init_jitter >= 0.0, "init_jitter must be non-negative");
  }
};

struct TraceEntry {
  std::size_t iter = 0;
  double loss = 0.0;
  double step = 0.0;
};

enum class StopReason { gradient, tolerance, line_search, max_iters };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::gradient: return "gradient";
    case StopReason::tolerance: return "tolerance";
    case StopReason::line_search: return "line_search";
    case StopReason::max_iters: return "max_iters";
  }
  return "?";
}

struct VarResult {
  Field field;
  std::vector<TraceEntry> trace;  // entry 0 is the initial loss, then one per accepted step
  StopReason stop = StopReason::max_iters;
};

/// w / ncell * sum over neighbor pairs of squared differences along lon,
/// lat and (scaled by ratio) time. Per-slice partial sums are reduced in
/// slice order so the value does not depend on the worker count.
inline double smoothness_penalty(std::span<const double> x, const GridSpec& g, double w, double ratio,
                                 std::span<double>* grad, std::size_t workers = 1) {
  if (w == 0.0) return 0.0;
  const std::size_t ni = g.nlat, nj = g.nlon, nt = g.nt, plane = ni * nj;
  const double scale = w / static_cast<double>(x.size());
  std::vector<double> partial(nt, 0.0);
  parallel_for(nt, workers, [&](std::size_t k) {
    const double* s = x.data() + k * plane;
    double* gs = grad ? grad->data() + k * plane : nullptr;
    double acc = 0.0;
    for (std::size_t i = 0; i < ni; ++i) {
      for (std::size_t j = 0; j < nj; ++j) {
        const std::size_t c = i * nj + j;
        double gc = 0.0;
        if (j + 1 < nj) {
          const double d = s[c + 1] - s[c];
          acc += d * d;
          gc -= d;
        }
        if (j > 0) gc += s[c] - s[c - 1];
        if (i + 1 < ni) {
          const double d = s[c + nj] - s[c];
          acc += d * d;
          gc -= d;
        }
        if (i > 0) gc += s[c] - s[c - nj];
        if (ratio > 0.0) {
          if (k + 1 < nt) {
            const double d = s[c + plane] - s[c];
            acc += ratio * d * d;
            gc -= ratio * d;
          }
          if (k > 0) gc += ratio * (s[c] - s[c - plane]);
        }
        if (gs) gs[c] += 2.0 * scale * gc;
      }
    }
    partial[k] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return scale * total;
}

/// Minimizes loss(obs, x) + smoothness(x) from `init` (warm start).
inline VarResult variational_reconstruct(const TrackSet& obs, const GridSpec& spec, const VarParams& p,
                                         const Field& init, const DerivativeNorm& norm = {},
                                         Diagnostics* diag = nullptr) {
  p.validate();
  require(init.spec == spec, "initial field grid differs from the target grid");
  if (obs.empty()) fail("no observations inside the window");
  const ObservationLoss data(obs, spec, p.loss_kind, {p.lambda1, p.lambda2}, norm, diag);

  const std::size_t n = spec.size();
  auto objective = [&](std::span<const double> x, std::span<double>* g) {
    double v = g ? data.value_and_gradient(x, *g) : data.value(x);
    v += smoothness_penalty(x, spec, p.smooth_weight, p.time_smooth_ratio, g, p.workers);
    if (!std::isfinite(v)) fail_numerical("non-finite loss in variational solver");
    return v;
  };

  VarResult res{init, {}, StopReason::max_iters};
  res.field.units = init.units;
  std::vector<double>& x = res.field.values;
  if (p.init_jitter > 0.0) {
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> noise(0.0, p.init_jitter);
    for (auto& v : x) v += noise(rng);
  }

  std::vector<double> grad(n), trial(n);
  std::span<double> gspan(grad);
  double loss = objective(x, &gspan);
  double step = p.step_init;
  res.trace.push_back({0, loss, 0.0});

  for (std::size_t it = 1; it <= p.max_iters; ++it) {
    double gnorm2 = 0.0;
    for (double g : grad) gnorm2 += g * g;
    if (std::sqrt(gnorm2) < p.grad_tol) {
      res.stop = StopReason::gradient;
      return res;
    }
    bool accepted = false;
    double trial_loss = loss;
    // Backtrack until the loss decreases or the step underflows.
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t c = 0; c < n; ++c) trial[c] = x[c] - step * grad[c];
      trial_loss = objective(trial, nullptr);
      if (trial_loss < loss) {
        accepted = true;
        break;
      }
      step *= p.step_decay;
    }
    if (!accepted) {
      res.stop = StopReason::line_search;
      return res;
    }
    x.swap(trial);
    const double prev = loss;
    loss = objective(x, &gspan);
    res.trace.push_back({it, loss, step});
    step /= p.step_decay;
    if ((prev - loss) <= p.tol_rel * std::abs(prev)) {
      res.stop = StopReason::tolerance;
      return res;
    }
  }
  return res;
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& trace) {
  std::string out = "iter,loss,step\n";
  for (const auto& e : trace)
    out += std::to_string(e.iter) + ',' + io::format_double(e.loss) + ',' + io::format_double(e.step) + '\n';
  io::write_bytes(path, out);
}

}  // namespace osse
