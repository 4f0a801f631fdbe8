#pragma once

// Stochastic exponential Euler for the Galerkin-truncated slow-fast system,
// the frozen fast equation, the averaged equation and the first-variation
// process. Linear part and additive noise are propagated exactly; the drift
// nonlinearity is evaluated at the pre-step state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "avgspde/errors.hpp"
#include "avgspde/models.hpp"
#include "avgspde/noise.hpp"
#include "avgspde/spectral.hpp"

namespace avgspde {

struct SimParams {
  double epsilon = 0.125;
  double T = 0.5;
  double h_macro = 0.01;
  double h_coupled = 0.0;  ///< 0 selects min(h_macro, epsilon / 20)
  std::size_t samples = 1000;
  std::uint64_t seed = 1;

  double coupled_step() const
  {
    return h_coupled > 0.0 ? h_coupled : std::min(h_macro, epsilon / 20.0);
  }

  void validate() const
  {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidArgument("SimParams: epsilon must lie in (0, 1]");
    if (!(T > 0.0)) throw InvalidArgument("SimParams: horizon T must be positive");
    if (!(h_macro > 0.0 && h_macro <= T)) throw InvalidArgument("SimParams: need 0 < h_macro <= T");
    if (h_coupled < 0.0 || h_coupled > h_macro)
      throw InvalidArgument("SimParams: need 0 < h_coupled <= h_macro");
    if (samples == 0) throw InvalidArgument("SimParams: sample count must be >= 1");
  }
};

/// Uniform grid on [0, T] whose step does not exceed the requested one.
struct StepGrid {
  std::size_t steps;
  double h;
};

inline StepGrid make_grid(double T, double h_requested)
{
  if (!(T >= 0.0)) throw InvalidArgument("make_grid: horizon must be nonnegative");
  if (!(h_requested > 0.0)) throw InvalidArgument("make_grid: step must be positive");
  if (T == 0.0) return {0, h_requested};
  auto steps = static_cast<std::size_t>(std::ceil(T / h_requested - 1e-9));
  steps = std::max<std::size_t>(steps, 1);
  return {steps, T / static_cast<double>(steps)};
}

struct CoupledState {
  SpectralField x;
  SpectralField y;
  double t = 0.0;
};

/// Averaged drift x -> Fbar(x): closed form or an ergodic estimate.
using DriftMap = std::function<SpectralField(const SpectralField&)>;
/// (x, direction) -> Fbar'(x) . direction
using JacobianMap = std::function<SpectralField(const SpectralField&, const SpectralField&)>;

inline DriftMap closed_form_fbar(const Model& model)
{
  return [&model](const SpectralField& x) { return model.fbar_closed_form(x); };
}

inline JacobianMap closed_form_fbar_jacobian(const Model& model)
{
  return [&model, diag = model.fbar_jacobian_diagonal()](const SpectralField& x,
                                                         const SpectralField& dir) {
    model.check_field(x, "fbar_jacobian");
    SpectralField out = dir;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = diag[i] * dir[i];
    return out;
  };
}

/// Central difference of Fbar along dir with step 1e-5 (1 + ||x||) on the unit direction.
inline JacobianMap finite_difference_jacobian(DriftMap fbar, double rel_step = 1e-5)
{
  return [fbar = std::move(fbar), rel_step](const SpectralField& x, const SpectralField& dir) {
    const double dn = dir.norm();
    if (dn == 0.0) return SpectralField(dir.size(), dir.length());
    const double delta = rel_step * (1.0 + x.norm());
    SpectralField unit = (1.0 / dn) * SpectralField(dir);
    SpectralField xp = x, xm = x;
    xp.axpy(delta, unit);
    xm.axpy(-delta, unit);
    SpectralField d = fbar(xp) - fbar(xm);
    d *= dn / (2.0 * delta);
    return d;
  };
}

// ---------------------------------------------------------------------------
// Precomputed one-step propagators

/// Per-mode coefficients of x' = decay x + weight D(x) + sd xi.
struct LinearPropagator {
  std::vector<double> decay;
  std::vector<double> weight;
  std::vector<double> noise_sd;

  /// scale = 1 for slow-type equations, epsilon for the fast one; the drift
  /// weight already includes the 1/scale factor of the fast drift.
  static LinearPropagator make(const Model& m, double h, double scale, const CovarianceSpec& q,
                               double sigma, ConvolutionKind kind)
  {
    LinearPropagator p;
    const std::size_t n = m.modes();
    p.decay.resize(n);
    p.weight.resize(n);
    p.noise_sd.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = m.alpha(i);
      p.decay[i] = std::exp(-a * h / scale);
      p.weight[i] = exp_euler_weight(a, h, scale) / scale;
      p.noise_sd[i] = std::sqrt(
          stoch_conv_variance(a, q.lambda(i + 1), sigma, h, scale, kind));
    }
    return p;
  }

  /// state <- decay state + weight drift + sd xi, one normal per mode from stream.
  void apply(SpectralField& state, const SpectralField& drift, NoiseStream& stream) const
  {
    for (std::size_t i = 0; i < state.size(); ++i)
      state[i] = decay[i] * state[i] + weight[i] * drift[i] + noise_sd[i] * stream.normal();
  }

  /// Same update with a pre-drawn vector of standard normals.
  void apply(SpectralField& state, const SpectralField& drift, const std::vector<double>& xi) const
  {
    for (std::size_t i = 0; i < state.size(); ++i)
      state[i] = decay[i] * state[i] + weight[i] * drift[i] + noise_sd[i] * xi[i];
  }

  void apply_deterministic(SpectralField& state, const SpectralField& drift) const
  {
    for (std::size_t i = 0; i < state.size(); ++i)
      state[i] = decay[i] * state[i] + weight[i] * drift[i];
  }
};

/// Coupled slow-fast step with fixed (epsilon, h).
class CoupledStepper {
public:
  CoupledStepper(const Model& model, double epsilon, double h)
      : model_(model),
        h_(h),
        slow_(LinearPropagator::make(model, h, 1.0, model.spec().q1, model.spec().sigma1,
                                     ConvolutionKind::Slow)),
        fast_(LinearPropagator::make(model, h, epsilon, model.spec().q2, model.spec().sigma2,
                                     ConvolutionKind::Fast)),
        f_(model.zero()),
        g_(model.zero())
  {
    if (!(epsilon > 0.0)) throw InvalidArgument("CoupledStepper: epsilon must be positive");
  }

  double step_size() const { return h_; }

  void step(CoupledState& s, NoiseStream& w1, NoiseStream& w2)
  {
    model_.F_into(s.x, s.y, f_);
    model_.G_into(s.x, s.y, g_);
    slow_.apply(s.x, f_, w1);
    fast_.apply(s.y, g_, w2);
    s.t += h_;
  }

private:
  const Model& model_;
  double h_;
  LinearPropagator slow_;
  LinearPropagator fast_;
  SpectralField f_;
  SpectralField g_;
};

/// One coupled step. Builds propagators on every call; loops should use CoupledStepper.
inline CoupledState step_coupled(const CoupledState& state, const Model& model,
                                 const SimParams& params, NoiseStream& w1, NoiseStream& w2)
{
  CoupledStepper stepper(model, params.epsilon, params.coupled_step());
  CoupledState out = state;
  stepper.step(out, w1, w2);
  return out;
}

/// Frozen fast equation dY = (AY + G(x, Y)) dt + sigma2 dW2 with x held fixed.
class FrozenStepper {
public:
  FrozenStepper(const Model& model, double h)
      : model_(model),
        prop_(LinearPropagator::make(model, h, 1.0, model.spec().q2, model.spec().sigma2,
                                     ConvolutionKind::Fast)),
        g_(model.zero())
  {
  }

  void step(SpectralField& y, const SpectralField& x_frozen, NoiseStream& w2)
  {
    model_.G_into(x_frozen, y, g_);
    prop_.apply(y, g_, w2);
  }

  /// Step driven by pre-drawn normals (for coupled copies of the same path).
  void step(SpectralField& y, const SpectralField& x_frozen, const std::vector<double>& xi)
  {
    model_.G_into(x_frozen, y, g_);
    prop_.apply(y, g_, xi);
  }

private:
  const Model& model_;
  LinearPropagator prop_;
  SpectralField g_;
};

inline SpectralField step_frozen(const SpectralField& y, const SpectralField& x_frozen,
                                 const Model& model, double h, NoiseStream& w2)
{
  if (!(h > 0.0)) throw InvalidArgument("step_frozen: step must be positive");
  y.require_same_geometry(x_frozen, "step_frozen");
  FrozenStepper stepper(model, h);
  SpectralField out = y;
  stepper.step(out, x_frozen, w2);
  return out;
}

/// Averaged equation dX = (AX + Fbar(X)) dt + sigma1 dW1.
class AveragedStepper {
public:
  AveragedStepper(const Model& model, DriftMap fbar, double h)
      : fbar_(std::move(fbar)),
        prop_(LinearPropagator::make(model, h, 1.0, model.spec().q1, model.spec().sigma1,
                                     ConvolutionKind::Slow))
  {
  }

  void step(SpectralField& x, NoiseStream& w1) { prop_.apply(x, fbar_(x), w1); }

  void step(SpectralField& x, const std::vector<double>& xi) { prop_.apply(x, fbar_(x), xi); }

  const DriftMap& fbar() const { return fbar_; }

private:
  DriftMap fbar_;
  LinearPropagator prop_;
};

inline SpectralField step_averaged(const SpectralField& x, const Model& model, const DriftMap& fbar,
                                   double h, NoiseStream& w1)
{
  if (!(h > 0.0)) throw InvalidArgument("step_averaged: step must be positive");
  model.check_field(x, "step_averaged");
  AveragedStepper stepper(model, fbar, h);
  SpectralField out = x;
  stepper.step(out, w1);
  return out;
}

/// First variation eta of the averaged flow along a driving path.
struct VariationState {
  SpectralField eta;
};

/// Deterministic first-variation step d eta = (A eta + Fbar'(xbar_t) eta) dt.
class VariationStepper {
public:
  VariationStepper(const Model& model, JacobianMap jacobian, double h)
      : jac_(std::move(jacobian)),
        prop_(LinearPropagator::make(model, h, 1.0, model.spec().q1, 0.0, ConvolutionKind::Slow))
  {
  }

  void step(VariationState& v, const SpectralField& xbar_t) const
  {
    prop_.apply_deterministic(v.eta, jac_(xbar_t, v.eta));
  }

private:
  JacobianMap jac_;
  LinearPropagator prop_;
};

inline VariationState step_first_variation(const VariationState& v, const SpectralField& xbar_t,
                                           const Model& model, const JacobianMap& jacobian, double h)
{
  if (!(h > 0.0)) throw InvalidArgument("step_first_variation: step must be positive");
  v.eta.require_same_geometry(xbar_t, "step_first_variation");
  VariationStepper stepper(model, jacobian, h);
  VariationState out = v;
  stepper.step(out, xbar_t);
  return out;
}

// ---------------------------------------------------------------------------
// Path loops

enum class PathKind { Coupled, Averaged, Frozen };

struct TerminalState {
  SpectralField x;
  std::optional<SpectralField> y;  ///< fast component (coupled and frozen kinds)
  std::uint64_t w1_draws = 0;
  std::uint64_t w2_draws = 0;
};

/// Coupled path on the grid h_coupled; observer(step_index, state) is called
/// after every step.
template <class Observer>
CoupledState run_coupled_path(const Model& model, double epsilon, const StepGrid& grid,
                              CoupledState state, NoiseStream& w1, NoiseStream& w2,
                              Observer&& observe)
{
  CoupledStepper stepper(model, epsilon, grid.h);
  for (std::size_t j = 0; j < grid.steps; ++j) {
    stepper.step(state, w1, w2);
    observe(j + 1, state);
  }
  return state;
}

/// Terminal state of one sample path. Streams are (seed, sample_index, W1/W2).
///
/// Coupled kind steps with h_coupled; averaged and frozen kinds with h_macro.
/// Frozen kind holds x at x0 and returns Y in y (and x0 in x).
inline TerminalState simulate_terminal(PathKind kind, const Model& model, const SimParams& params,
                                       std::uint64_t sample_index, const SpectralField& x0,
                                       const SpectralField& y0, const DriftMap& fbar = {})
{
  params.validate();
  model.check_field(x0, "simulate_terminal");
  model.check_field(y0, "simulate_terminal");
  NoiseStream w1(params.seed, sample_index, ProcessTag::W1);
  NoiseStream w2(params.seed, sample_index, ProcessTag::W2);
  TerminalState out{x0, std::nullopt};

  switch (kind) {
    case PathKind::Coupled: {
      const StepGrid grid = make_grid(params.T, params.coupled_step());
      CoupledState s = run_coupled_path(model, params.epsilon, grid, {x0, y0, 0.0}, w1, w2,
                                        [](std::size_t, const CoupledState&) {});
      out.x = std::move(s.x);
      out.y = std::move(s.y);
      break;
    }
    case PathKind::Averaged: {
      DriftMap drift = fbar;
      if (!drift) {
        if (!model.is_linear())
          throw UnsupportedOperation(
              "simulate_terminal: averaged path of a NEMYTSKII model needs an Fbar provider");
        drift = closed_form_fbar(model);
      }
      const StepGrid grid = make_grid(params.T, params.h_macro);
      AveragedStepper stepper(model, drift, grid.h);
      for (std::size_t j = 0; j < grid.steps; ++j) stepper.step(out.x, w1);
      break;
    }
    case PathKind::Frozen: {
      const StepGrid grid = make_grid(params.T, params.h_macro);
      FrozenStepper stepper(model, grid.h);
      SpectralField y = y0;
      for (std::size_t j = 0; j < grid.steps; ++j) stepper.step(y, x0, w2);
      out.y = std::move(y);
      break;
    }
  }
  out.w1_draws = w1.draws();
  out.w2_draws = w2.draws();
  return out;
}

/// Coupled and averaged paths of one sample advanced in lockstep on the
/// h_coupled grid, each with its own copy of the W1 stream (same identity).
struct PairedTerminal {
  SpectralField x_coupled;
  SpectralField y_coupled;
  SpectralField x_averaged;
  std::uint64_t w1_draws_coupled = 0;
  std::uint64_t w1_draws_averaged = 0;
};

inline PairedTerminal simulate_pair(const Model& model, const SimParams& params,
                                    std::uint64_t sample_index, const SpectralField& x0,
                                    const SpectralField& y0, const DriftMap& fbar)
{
  params.validate();
  model.check_field(x0, "simulate_pair");
  model.check_field(y0, "simulate_pair");
  const StepGrid grid = make_grid(params.T, params.coupled_step());
  NoiseStream w1c(params.seed, sample_index, ProcessTag::W1);
  NoiseStream w1a(params.seed, sample_index, ProcessTag::W1);
  NoiseStream w2(params.seed, sample_index, ProcessTag::W2);
  CoupledStepper coupled(model, params.epsilon, grid.h);
  AveragedStepper averaged(model, fbar, grid.h);
  CoupledState s{x0, y0, 0.0};
  SpectralField xbar = x0;
  for (std::size_t j = 0; j < grid.steps; ++j) {
    coupled.step(s, w1c, w2);
    averaged.step(xbar, w1a);
  }
  return {std::move(s.x), std::move(s.y), std::move(xbar), w1c.draws(), w1a.draws()};
}

}  // namespace avgspde
