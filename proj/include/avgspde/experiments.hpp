#pragma once

// Weak-order study, order fitting, and the table producers behind the CLI.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "avgspde/averaging.hpp"
#include "avgspde/config.hpp"
#include "avgspde/errors.hpp"
#include "avgspde/expansion.hpp"
#include "avgspde/integrators.hpp"
#include "avgspde/models.hpp"
#include "avgspde/parallel.hpp"

namespace avgspde {

/// Shortest round-trip-safe decimal: 17 significant digits.
inline std::string fmt17(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct OrderFit {
  double slope;
  double std_error;
  std::size_t rows;
};

struct WeakRow {
  double eps;
  double weak_err;
  double std_error;
};

/// Least-squares slope of log err against log eps over rows with err > 0.
inline OrderFit fit_order(const std::vector<WeakRow>& rows)
{
  std::vector<double> lx, ly;
  for (const auto& r : rows)
    if (r.weak_err > 0.0 && r.eps > 0.0) {
      lx.push_back(std::log(r.eps));
      ly.push_back(std::log(r.weak_err));
    }
  if (lx.size() < 3) throw EstimationFailure("fit_order: fewer than 3 rows with positive error");
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw EstimationFailure("fit_order: all eps values coincide");
  const double slope = sxy / sxx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (my + slope * (lx[i] - mx));
    rss += r * r;
  }
  const double se = lx.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  return {slope, se, lx.size()};
}

enum class ReportStatus { Ok, DegenerateZero, Inconclusive };

struct WeakOrderReport {
  std::vector<WeakRow> rows;
  double fitted_order = std::numeric_limits<double>::quiet_NaN();
  double order_std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t usable_rows = 0;
  ReportStatus status = ReportStatus::Ok;
  WeakMode mode = WeakMode::Gaussian;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> steps;  ///< time steps per row (mc) or max RK4 substeps (gaussian)
  double wall_seconds = 0.0;

  /// Rows must clear this multiple of their stderr to enter the fit (mc mode).
  static constexpr double kNoiseFloor = 5.0;

  std::string csv() const
  {
    std::string s = "eps,weak_err,stderr\n";
    for (const auto& r : rows)
      s += fmt17(r.eps) + "," + fmt17(r.weak_err) + "," + fmt17(r.std_error) + "\n";
    return s;
  }

  std::string summary() const
  {
    char buf[160];
    switch (status) {
      case ReportStatus::Ok:
        std::snprintf(buf, sizeof buf, "order=%.2f (%.2f) rows=%zu/%zu", fitted_order,
                      order_std_error, usable_rows, rows.size());
        break;
      case ReportStatus::DegenerateZero:
        std::snprintf(buf, sizeof buf, "order=nan degenerate-zero (weak error vanishes for every eps)");
        break;
      case ReportStatus::Inconclusive:
        std::snprintf(buf, sizeof buf, "order=nan inconclusive (%zu of %zu rows above noise floor)",
                      usable_rows, rows.size());
        break;
    }
    return buf;
  }
};

inline void finish_report(WeakOrderReport& rep)
{
  bool all_zero = true;
  std::vector<WeakRow> usable;
  for (const auto& r : rep.rows) {
    if (r.weak_err != 0.0 || r.std_error != 0.0) all_zero = false;
    const bool above = rep.mode == WeakMode::Gaussian
                           ? r.weak_err > 0.0
                           : r.weak_err > WeakOrderReport::kNoiseFloor * r.std_error && r.weak_err > 0.0;
    if (above) usable.push_back(r);
  }
  rep.usable_rows = usable.size();
  if (all_zero) {
    rep.status = ReportStatus::DegenerateZero;
    return;
  }
  if (usable.size() < 3) {
    rep.status = ReportStatus::Inconclusive;
    return;
  }
  const OrderFit fit = fit_order(usable);
  rep.fitted_order = fit.slope;
  rep.order_std_error = fit.std_error;
  rep.status = ReportStatus::Ok;
}

/// Averaged drift used by Monte Carlo runs: closed form for LINEAR models,
/// otherwise a per-sample ergodic estimator.
inline DriftMap default_fbar(const Model& model, const ExperimentConfig& cfg, std::uint64_t sample)
{
  if (model.is_linear()) return closed_form_fbar(model);
  return ergodic_fbar(model, cfg.ergodic_params(model.beta()),
                      derive_seed(cfg.sim.seed ^ sample, "fbar-per-sample"));
}

/// |E phi(X^eps_T) - E phi(Xbar_T)| for every eps of the grid, and the fitted order.
inline WeakOrderReport run_weak_order(const ExperimentConfig& cfg, unsigned threads = 1)
{
  const auto start = std::chrono::steady_clock::now();
  const Model model(cfg.model);
  const SpectralField x0 = cfg.initial_x();
  const SpectralField y0 = cfg.initial_y();
  const TestFunction phi = cfg.test_function();

  WeakOrderReport rep;
  rep.mode = cfg.mode;
  rep.seed = cfg.sim.seed;
  rep.samples = cfg.mode == WeakMode::MonteCarlo ? cfg.sim.samples : 0;

  for (double eps : cfg.eps_grid) {
    if (cfg.mode == WeakMode::Gaussian) {
      if (!model.is_linear())
        throw UnsupportedOperation("run_weak_order: gaussian mode requires the LINEAR family");
      const auto cm = gaussian_moments_coupled(model, eps, cfg.sim.T, x0, y0);
      const auto am = gaussian_moments_averaged_rk4(model, eps, cfg.sim.T, x0);
      const double err = std::abs(weak_value_gaussian(cm, phi) - weak_value_gaussian(am, phi));
      rep.rows.push_back({eps, err, 0.0});
      rep.steps.push_back(cm.max_substeps);
      continue;
    }
    SimParams sp = cfg.sim;
    sp.epsilon = eps;
    if (sp.h_coupled > sp.h_macro) sp.h_coupled = 0.0;
    std::vector<double> diff(sp.samples);
    parallel_for(sp.samples, threads, [&](std::size_t i) {
      const DriftMap fbar = default_fbar(model, cfg, i);
      const PairedTerminal pt = simulate_pair(model, sp, i, x0, y0, fbar);
      diff[i] = phi(pt.x_coupled) - phi(pt.x_averaged);
    });
    const MeanEstimate e = mean_and_stderr(diff);
    rep.rows.push_back({eps, std::abs(e.mean), e.std_error});
    rep.steps.push_back(make_grid(sp.T, sp.coupled_step()).steps);
  }
  finish_report(rep);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Tables for the remaining subcommands

struct FbarRow {
  std::size_t mode;
  double closed_form;  ///< NaN when no closed form exists
  double ergodic;
  double std_error;
};

inline std::vector<FbarRow> fbar_table(const ExperimentConfig& cfg)
{
  const Model model(cfg.model);
  const SpectralField x = cfg.initial_x();
  const FieldEstimate est = estimate_fbar_ergodic(model, x, cfg.ergodic_params(model.beta()),
                                                  derive_seed(cfg.sim.seed, "fbar-table"));
  std::vector<FbarRow> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::optional<SpectralField> closed =
      model.is_linear() ? std::optional<SpectralField>(model.fbar_closed_form(x)) : std::nullopt;
  for (std::size_t i = 0; i < model.modes(); ++i)
    rows.push_back({i + 1, closed ? (*closed)[i] : nan, est.mean[i], est.std_error[i]});
  return rows;
}

inline std::string fbar_csv(const std::vector<FbarRow>& rows)
{
  std::string s = "mode,closed_form,ergodic,stderr\n";
  for (const auto& r : rows)
    s += std::to_string(r.mode) + "," + fmt17(r.closed_form) + "," + fmt17(r.ergodic) + "," +
         fmt17(r.std_error) + "\n";
  return s;
}

struct MixingResult {
  std::vector<CurvePoint> curve;
  std::optional<DecayFit> fit;
  double beta = 0.0;
};

inline MixingResult mixing_study(const ExperimentConfig& cfg, unsigned threads = 1)
{
  const Model model(cfg.model);
  const SpectralField x = cfg.initial_x();
  const SpectralField y = cfg.initial_y();
  const SpectralField fx =
      model.is_linear()
          ? model.fbar_closed_form(x)
          : estimate_fbar_ergodic(model, x, cfg.ergodic_params(model.beta()),
                                  derive_seed(cfg.sim.seed, "mixing-fbar"))
                .mean;
  MixingResult r;
  r.beta = model.beta();
  r.curve = mixing_gap_curve(model, x, y, cfg.diagnostics.t_grid, cfg.diagnostics.paths,
                             cfg.diagnostics.h, derive_seed(cfg.sim.seed, "mixing"), fx, threads);
  try {
    r.fit = fit_exponential_decay(r.curve);
  } catch (const EstimationFailure&) {
    r.fit.reset();
  }
  return r;
}

inline std::string curve_csv(const std::vector<CurvePoint>& curve)
{
  std::string s = "t,gap,stderr\n";
  for (const auto& p : curve) s += fmt17(p.t) + "," + fmt17(p.value) + "," + fmt17(p.std_error) + "\n";
  return s;
}

inline std::string residual_csv(const std::vector<ResidualRow>& rows)
{
  std::string s = "eps,u_eps_minus_ubar,scaled_residual\n";
  for (const auto& r : rows) s += fmt17(r.eps) + "," + fmt17(r.diff) + "," + fmt17(r.scaled) + "\n";
  return s;
}

inline std::string terminal_csv(const TerminalState& t)
{
  std::string s = "mode,x,y\n";
  for (std::size_t i = 0; i < t.x.size(); ++i)
    s += std::to_string(i + 1) + "," + fmt17(t.x[i]) + "," +
         (t.y ? fmt17((*t.y)[i]) : std::string("nan")) + "\n";
  return s;
}

}  // namespace avgspde
