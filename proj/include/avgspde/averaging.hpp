#pragma once

// Ergodic estimation of the averaged drift, and mixing diagnostics of the
// frozen fast process.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "avgspde/errors.hpp"
#include "avgspde/integrators.hpp"
#include "avgspde/models.hpp"
#include "avgspde/noise.hpp"
#include "avgspde/parallel.hpp"
#include "avgspde/spectral.hpp"

namespace avgspde {

struct ErgodicParams {
  double t_burn = 16.0;
  double t_avg = 160.0;
  double h = 0.01;
  std::size_t replicas = 8;

  /// Burn-in 8/beta and averaging window 80/beta.
  static ErgodicParams defaults(double beta)
  {
    if (!(beta > 0.0)) throw InvalidArgument("ErgodicParams: beta must be positive");
    return {8.0 / beta, 80.0 / beta, 0.01, 8};
  }

  void validate() const
  {
    if (!(t_burn > 0.0 && t_avg > 0.0 && h > 0.0) || replicas == 0)
      throw InvalidArgument("ErgodicParams: times, step and replica count must be positive");
  }
};

struct FieldEstimate {
  SpectralField mean;
  std::vector<double> std_error;  ///< per mode
};

/// Time average of F(x, Y^x_s) over [t_burn, t_burn + t_avg], averaged over
/// independent replicas (streams (seed, replica, W2)); stderr from replica spread.
inline FieldEstimate estimate_fbar_ergodic(const Model& model, const SpectralField& x,
                                           const ErgodicParams& params, std::uint64_t seed,
                                           const std::optional<SpectralField>& y0 = std::nullopt)
{
  params.validate();
  model.check_field(x, "estimate_fbar_ergodic");
  const std::size_t n = model.modes();
  const StepGrid burn = make_grid(params.t_burn, params.h);
  const auto avg_steps = static_cast<std::size_t>(std::max(1.0, std::round(params.t_avg / burn.h)));

  std::vector<SpectralField> per_replica;
  per_replica.reserve(params.replicas);
  FrozenStepper stepper(model, burn.h);
  SpectralField f = model.zero();
  for (std::size_t r = 0; r < params.replicas; ++r) {
    NoiseStream w2(seed, r, ProcessTag::W2);
    SpectralField y = y0 ? *y0 : model.zero();
    for (std::size_t j = 0; j < burn.steps; ++j) stepper.step(y, x, w2);
    SpectralField acc = model.zero();
    for (std::size_t j = 0; j < avg_steps; ++j) {
      stepper.step(y, x, w2);
      model.F_into(x, y, f);
      acc += f;
    }
    acc *= 1.0 / static_cast<double>(avg_steps);
    per_replica.push_back(std::move(acc));
  }

  FieldEstimate out{model.zero(), std::vector<double>(n, 0.0)};
  std::vector<double> column(params.replicas);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < params.replicas; ++r) column[r] = per_replica[r][i];
    const MeanEstimate e = mean_and_stderr(column);
    out.mean[i] = e.mean;
    out.std_error[i] = e.std_error;
  }
  return out;
}

/// Fbar provider backed by the ergodic estimator. Every call draws fresh
/// streams derived from (seed, call number); one adaptor per sample path keeps
/// results reproducible.
inline DriftMap ergodic_fbar(const Model& model, ErgodicParams params, std::uint64_t seed)
{
  auto calls = std::make_shared<std::uint64_t>(0);
  return [&model, params, seed, calls](const SpectralField& x) {
    const std::uint64_t call = (*calls)++;
    return estimate_fbar_ergodic(model, x, params, derive_seed(seed ^ call, "ergodic-fbar-call"))
        .mean;
  };
}

// ---------------------------------------------------------------------------
// Mixing curves

struct CurvePoint {
  double t;
  double value;
  double std_error;
};

namespace detail {

/// Step indices of the requested times on a grid of step h (ascending, unique).
inline std::vector<std::size_t> snap_times(const std::vector<double>& t_grid, double h)
{
  std::vector<std::size_t> idx;
  idx.reserve(t_grid.size());
  for (double t : t_grid) {
    if (!(t >= 0.0)) throw InvalidArgument("time grid must be nonnegative");
    idx.push_back(static_cast<std::size_t>(std::llround(t / h)));
  }
  if (!std::is_sorted(idx.begin(), idx.end()))
    throw InvalidArgument("time grid must be ascending");
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

/// Per-block running mean and centered second moment (Welford), one entry per
/// (time, mode).
struct BlockMoments {
  double count = 0.0;
  std::vector<double> mean;
  std::vector<double> m2;

  void add(const std::vector<double>& obs)
  {
    count += 1.0;
    for (std::size_t q = 0; q < obs.size(); ++q) {
      const double d = obs[q] - mean[q];
      mean[q] += d / count;
      m2[q] += d * (obs[q] - mean[q]);
    }
  }

  /// Chan et al. pairwise combination.
  void merge(const BlockMoments& o)
  {
    if (o.count == 0.0) return;
    const double total = count + o.count;
    for (std::size_t q = 0; q < mean.size(); ++q) {
      const double d = o.mean[q] - mean[q];
      mean[q] += d * o.count / total;
      m2[q] += o.m2[q] + d * d * count * o.count / total;
    }
    count = total;
  }
};

/// Monte Carlo over M paths split into a fixed number of blocks; blocks are
/// merged in order so results do not depend on the worker count.
template <class PathFn>
std::vector<CurvePoint> blocked_curve(std::size_t M, std::size_t times, std::size_t n,
                                      const std::vector<double>& t_values, unsigned threads,
                                      PathFn&& path, const std::vector<double>& offset)
{
  constexpr std::size_t kBlocks = 64;
  const std::size_t blocks = std::min(kBlocks, M);
  std::vector<BlockMoments> moments(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    BlockMoments& s = moments[b];
    s.mean.assign(times * n, 0.0);
    s.m2.assign(times * n, 0.0);
    std::vector<double> obs(times * n);
    for (std::size_t i = b * M / blocks; i < (b + 1) * M / blocks; ++i) {
      path(i, obs);
      s.add(obs);
    }
  });
  BlockMoments total;
  total.mean.assign(times * n, 0.0);
  total.m2.assign(times * n, 0.0);
  for (const auto& s : moments) total.merge(s);

  std::vector<CurvePoint> curve;
  const double m = static_cast<double>(M);
  for (std::size_t j = 0; j < times; ++j) {
    double gap2 = 0.0, var = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = total.mean[j * n + k] - offset[k];
      gap2 += d * d;
      if (M > 1) var += total.m2[j * n + k] / (m - 1.0) / m;
    }
    curve.push_back({t_values[j], std::sqrt(gap2), std::sqrt(var)});
  }
  return curve;
}

}  // namespace detail

/// gap(t) = || E F(x, Y^x_t(y)) - Fbar(x) || from M frozen paths (streams (seed, i, W2)).
inline std::vector<CurvePoint> mixing_gap_curve(const Model& model, const SpectralField& x,
                                                const SpectralField& y,
                                                const std::vector<double>& t_grid, std::size_t M,
                                                double h, std::uint64_t seed,
                                                const SpectralField& fbar_x, unsigned threads = 1)
{
  if (M == 0) throw InvalidArgument("mixing_gap_curve: M must be >= 1");
  if (!(h > 0.0)) throw InvalidArgument("mixing_gap_curve: step must be positive");
  model.check_field(x, "mixing_gap_curve");
  model.check_field(y, "mixing_gap_curve");
  model.check_field(fbar_x, "mixing_gap_curve");
  const auto idx = detail::snap_times(t_grid, h);
  const std::size_t n = model.modes();
  std::vector<double> t_values;
  for (auto j : idx) t_values.push_back(static_cast<double>(j) * h);

  auto path = [&](std::size_t i, std::vector<double>& obs) {
    NoiseStream w2(seed, i, ProcessTag::W2);
    FrozenStepper stepper(model, h);
    SpectralField yy = y;
    SpectralField f = model.zero();
    std::size_t step = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      for (; step < idx[j]; ++step) stepper.step(yy, x, w2);
      model.F_into(x, yy, f);
      std::copy(f.coeffs().begin(), f.coeffs().end(), obs.begin() + static_cast<long>(j * n));
    }
  };
  return detail::blocked_curve(M, idx.size(), n, t_values, threads, path, fbar_x.vector());
}

struct DecayFit {
  double rate;
  double intercept;  ///< log of the fitted prefactor
  double residual;   ///< RMS of log-residuals
  std::size_t points;
};

/// Least squares of log value against t over the leading window where
/// value > floor_factor * stderr. Rate is clamped to be nonnegative.
inline DecayFit fit_exponential_decay(const std::vector<CurvePoint>& curve,
                                      double floor_factor = 10.0)
{
  std::vector<double> ts, ls;
  for (const auto& p : curve) {
    if (!(p.value > 0.0) || !(p.value > floor_factor * p.std_error)) break;
    ts.push_back(p.t);
    ls.push_back(std::log(p.value));
  }
  if (ts.size() < 4)
    throw EstimationFailure("fit_exponential_decay: fewer than 4 points above the noise floor");
  const double nn = static_cast<double>(ts.size());
  const double tm = std::accumulate(ts.begin(), ts.end(), 0.0) / nn;
  const double lm = std::accumulate(ls.begin(), ls.end(), 0.0) / nn;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxx += (ts[i] - tm) * (ts[i] - tm);
    sxy += (ts[i] - tm) * (ls[i] - lm);
  }
  if (sxx == 0.0) throw EstimationFailure("fit_exponential_decay: degenerate time grid");
  const double slope = sxy / sxx;
  const double intercept = lm - slope * tm;
  double rss = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double r = ls[i] - (intercept + slope * ts[i]);
    rss += r * r;
  }
  return {std::max(0.0, -slope), intercept, std::sqrt(rss / nn), ts.size()};
}

/// || D_x (Fbar(x) - E F(x, Y^x_t(y))) . direction || by central differences in
/// x with step fd_step along the unit direction; both shifted paths share the
/// same W2 normals. fd_step <= 0 selects 1e-4 (1 + ||x||).
inline std::vector<CurvePoint> mixing_derivative_decay(
    const Model& model, const SpectralField& x, const SpectralField& y,
    const SpectralField& direction, const std::vector<double>& t_grid, std::size_t M,
    double fd_step, double h, std::uint64_t seed, const DriftMap& fbar, unsigned threads = 1)
{
  if (M == 0) throw InvalidArgument("mixing_derivative_decay: M must be >= 1");
  if (!(h > 0.0)) throw InvalidArgument("mixing_derivative_decay: step must be positive");
  model.check_field(x, "mixing_derivative_decay");
  model.check_field(y, "mixing_derivative_decay");
  model.check_field(direction, "mixing_derivative_decay");
  const double dn = direction.norm();
  if (dn == 0.0) throw InvalidArgument("mixing_derivative_decay: direction must be nonzero");
  const double delta = fd_step > 0.0 ? fd_step : 1e-4 * (1.0 + x.norm());
  SpectralField xp = x, xm = x;
  xp.axpy(delta / dn, direction);
  xm.axpy(-delta / dn, direction);
  const SpectralField fbar_p = fbar(xp);
  const SpectralField fbar_m = fbar(xm);

  const auto idx = detail::snap_times(t_grid, h);
  const std::size_t n = model.modes();
  std::vector<double> t_values;
  for (auto j : idx) t_values.push_back(static_cast<double>(j) * h);
  const double scale = dn / (2.0 * delta);

  auto path = [&](std::size_t i, std::vector<double>& obs) {
    NoiseStream w2(seed, i, ProcessTag::W2);
    FrozenStepper sp(model, h), sm(model, h);
    SpectralField yp = y, ym = y;
    SpectralField fp = model.zero(), fm = model.zero();
    std::vector<double> xi(n);
    std::size_t step = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      for (; step < idx[j]; ++step) {
        for (auto& z : xi) z = w2.normal();
        sp.step(yp, xp, xi);
        sm.step(ym, xm, xi);
      }
      model.F_into(xp, yp, fp);
      model.F_into(xm, ym, fm);
      for (std::size_t k = 0; k < n; ++k)
        obs[j * n + k] = ((fbar_p[k] - fp[k]) - (fbar_m[k] - fm[k])) * scale;
    }
  };
  return detail::blocked_curve(M, idx.size(), n, t_values, threads, path,
                               std::vector<double>(n, 0.0));
}

}  // namespace avgspde
