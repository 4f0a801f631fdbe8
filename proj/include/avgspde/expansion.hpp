#pragma once

// Noise-free weak values for mode-diagonal linear models (mean and covariance
// propagation), Monte Carlo estimators of D_x ubar and of the first-order
// expansion coefficient u1, and the expansion-residual table.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "avgspde/averaging.hpp"
#include "avgspde/errors.hpp"
#include "avgspde/integrators.hpp"
#include "avgspde/models.hpp"
#include "avgspde/noise.hpp"
#include "avgspde/parallel.hpp"
#include "avgspde/spectral.hpp"

namespace avgspde {

/// Law of one (X_k, Y_k) mode pair: means and the symmetric 2x2 covariance.
struct ModeMoments {
  double mx = 0.0, my = 0.0;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;

  double det() const { return sxx * syy - sxy * sxy; }
};

struct GaussianModeMoments {
  std::vector<ModeMoments> modes;
  double min_det = 0.0;        ///< smallest covariance determinant seen during propagation
  std::size_t max_substeps = 0;
};

namespace detail {

/// Linear 2x2 SDE  dZ = (M Z + c) dt + diag(q)^{1/2} dB  for one mode.
struct ModeSystem {
  std::array<double, 4> m;  // row-major
  std::array<double, 2> c;
  std::array<double, 2> q;

  /// Stiffness bound used to size the RK4 substeps.
  double stiffness() const
  {
    return std::max(std::abs(m[0]) + std::abs(m[1]), std::abs(m[2]) + std::abs(m[3]));
  }

  using State = std::array<double, 5>;  // mx, my, sxx, sxy, syy

  State rhs(const State& s) const
  {
    const double mx = s[0], my = s[1], sxx = s[2], sxy = s[3], syy = s[4];
    return {m[0] * mx + m[1] * my + c[0],
            m[2] * mx + m[3] * my + c[1],
            2.0 * (m[0] * sxx + m[1] * sxy) + q[0],
            m[0] * sxy + m[1] * syy + m[2] * sxx + m[3] * sxy,
            2.0 * (m[2] * sxy + m[3] * syy) + q[1]};
  }

  /// Classical RK4 with N uniform substeps; tracks the smallest determinant.
  ModeMoments propagate(double x0, double y0, double T, std::size_t N, double& min_det) const
  {
    State s{x0, y0, 0.0, 0.0, 0.0};
    const double h = T / static_cast<double>(N);
    auto axpy = [](const State& a, double w, const State& b) {
      State r;
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] + w * b[i];
      return r;
    };
    for (std::size_t j = 0; j < N; ++j) {
      const State k1 = rhs(s);
      const State k2 = rhs(axpy(s, 0.5 * h, k1));
      const State k3 = rhs(axpy(s, 0.5 * h, k2));
      const State k4 = rhs(axpy(s, h, k3));
      for (std::size_t i = 0; i < s.size(); ++i)
        s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      min_det = std::min(min_det, s[2] * s[4] - s[3] * s[3]);
    }
    return {s[0], s[1], s[2], s[3], s[4]};
  }
};

inline std::size_t rk4_substeps(double T, double stiffness, double steps_per_unit)
{
  const double n = std::ceil(T * stiffness * steps_per_unit);
  return std::max<std::size_t>(16, static_cast<std::size_t>(n));
}

inline void require_linear(const Model& model, const char* where)
{
  if (!model.is_linear())
    throw UnsupportedOperation(std::string(where) + ": Gaussian oracle needs the LINEAR family");
}

}  // namespace detail

/// Exact law of the Galerkin-truncated coupled LINEAR system at time T.
///
/// Per mode the pair (X_k, Y_k) has drift matrix
/// [[-alpha_k + a_k, b_k], [g_k/eps, -(alpha_k + c_k)/eps]] and independent
/// noise intensities sigma1^2 lambda_{1,k}, sigma2^2 lambda_{2,k}/eps. Mean and
/// Lyapunov equations are integrated with RK4; the substep count scales with
/// the stiffness (hence with 1/eps).
inline GaussianModeMoments gaussian_moments_coupled(const Model& model, double eps, double T,
                                                    const SpectralField& x0,
                                                    const SpectralField& y0,
                                                    double steps_per_unit = 40.0)
{
  detail::require_linear(model, "gaussian_moments_coupled");
  if (!(eps > 0.0) || !(T > 0.0))
    throw InvalidArgument("gaussian_moments_coupled: eps and T must be positive");
  model.check_field(x0, "gaussian_moments_coupled");
  model.check_field(y0, "gaussian_moments_coupled");
  const LinearDrift& lin = model.linear();
  const ModelSpec& spec = model.spec();
  GaussianModeMoments out;
  out.min_det = 0.0;
  for (std::size_t i = 0; i < model.modes(); ++i) {
    const double al = model.alpha(i);
    const detail::ModeSystem sys{
        {-al + lin.a[i], lin.b[i], lin.g[i] / eps, -(al + lin.c[i]) / eps},
        {lin.f0[i], lin.g0[i] / eps},
        {spec.sigma1 * spec.sigma1 * spec.q1.lambda(i + 1),
         spec.sigma2 * spec.sigma2 * spec.q2.lambda(i + 1) / eps}};
    const std::size_t N = detail::rk4_substeps(T, sys.stiffness(), steps_per_unit);
    out.max_substeps = std::max(out.max_substeps, N);
    out.modes.push_back(sys.propagate(x0[i], y0[i], T, N, out.min_det));
  }
  return out;
}

/// Law of the averaged LINEAR equation propagated by the same RK4 machinery
/// and substep counts as gaussian_moments_coupled at the same eps (the fast
/// block is carried along but decoupled). When F ignores y the slow
/// components coincide bit for bit with the coupled ones.
inline GaussianModeMoments gaussian_moments_averaged_rk4(const Model& model, double eps, double T,
                                                         const SpectralField& x0,
                                                         double steps_per_unit = 40.0)
{
  detail::require_linear(model, "gaussian_moments_averaged_rk4");
  if (!(eps > 0.0) || !(T > 0.0))
    throw InvalidArgument("gaussian_moments_averaged_rk4: eps and T must be positive");
  model.check_field(x0, "gaussian_moments_averaged_rk4");
  const LinearDrift& lin = model.linear();
  const ModelSpec& spec = model.spec();
  const auto jac = model.fbar_jacobian_diagonal();
  const auto off = model.fbar_offset();
  GaussianModeMoments out;
  for (std::size_t i = 0; i < model.modes(); ++i) {
    const double al = model.alpha(i);
    const detail::ModeSystem coupled_shape{
        {-al + lin.a[i], lin.b[i], lin.g[i] / eps, -(al + lin.c[i]) / eps}, {}, {}};
    const detail::ModeSystem sys{
        {-al + jac[i], 0.0, lin.g[i] / eps, -(al + lin.c[i]) / eps},
        {off[i], lin.g0[i] / eps},
        {spec.sigma1 * spec.sigma1 * spec.q1.lambda(i + 1),
         spec.sigma2 * spec.sigma2 * spec.q2.lambda(i + 1) / eps}};
    const std::size_t N = detail::rk4_substeps(T, coupled_shape.stiffness(), steps_per_unit);
    out.max_substeps = std::max(out.max_substeps, N);
    ModeMoments mm = sys.propagate(x0[i], 0.0, T, N, out.min_det);
    out.modes.push_back({mm.mx, 0.0, mm.sxx, 0.0, 0.0});
  }
  return out;
}

/// Closed-form law of the averaged LINEAR equation:
/// m(T) = e^{r T} x0 + f (e^{r T} - 1)/r,  s(T) = sigma1^2 lambda_1 (e^{2 r T} - 1)/(2 r).
inline GaussianModeMoments gaussian_moments_averaged(const Model& model, double T,
                                                     const SpectralField& x0)
{
  detail::require_linear(model, "gaussian_moments_averaged");
  model.check_field(x0, "gaussian_moments_averaged");
  const auto jac = model.fbar_jacobian_diagonal();
  const auto off = model.fbar_offset();
  const ModelSpec& spec = model.spec();
  GaussianModeMoments out;
  for (std::size_t i = 0; i < model.modes(); ++i) {
    const double r = -model.alpha(i) + jac[i];
    const double growth = std::exp(r * T);
    const double integral = T * phi1(-r * T);             // int_0^T e^{r s} ds
    const double integral2 = T * phi1(-2.0 * r * T);      // int_0^T e^{2 r s} ds
    const double q = spec.sigma1 * spec.sigma1 * spec.q1.lambda(i + 1);
    out.modes.push_back({growth * x0[i] + off[i] * integral, 0.0, q * integral2, 0.0, 0.0});
  }
  return out;
}

/// Exact law of the exponential-Euler discretization of the averaged LINEAR
/// equation with step h (used to size time-discretization gaps).
inline GaussianModeMoments averaged_scheme_moments(const Model& model, double T, double h,
                                                   const SpectralField& x0)
{
  detail::require_linear(model, "averaged_scheme_moments");
  model.check_field(x0, "averaged_scheme_moments");
  const StepGrid grid = make_grid(T, h);
  const auto jac = model.fbar_jacobian_diagonal();
  const auto off = model.fbar_offset();
  const ModelSpec& spec = model.spec();
  GaussianModeMoments out;
  for (std::size_t i = 0; i < model.modes(); ++i) {
    const double al = model.alpha(i);
    const double w = exp_euler_weight(al, grid.h, 1.0);
    const double growth = std::exp(-al * grid.h) + w * jac[i];
    const double v = stoch_conv_variance(al, spec.q1.lambda(i + 1), spec.sigma1, grid.h, 1.0,
                                         ConvolutionKind::Slow);
    double m = x0[i], s = 0.0;
    for (std::size_t j = 0; j < grid.steps; ++j) {
      m = growth * m + w * off[i];
      s = growth * growth * s + v;
    }
    out.modes.push_back({m, 0.0, s, 0.0, 0.0});
  }
  return out;
}

/// E cos(Z) for Z ~ N(mean, var).
inline double gaussian_cosine_expectation(double mean, double var)
{
  return std::cos(mean) * std::exp(-0.5 * var);
}

/// E sin(Z) for Z ~ N(mean, var).
inline double gaussian_sine_expectation(double mean, double var)
{
  return std::sin(mean) * std::exp(-0.5 * var);
}

/// Projection (X, v) of the slow component: mean and variance (modes independent).
inline std::pair<double, double> projected_moments(const GaussianModeMoments& mm,
                                                   const SpectralField& v)
{
  if (v.size() != mm.modes.size())
    throw InvalidArgument("projected_moments: direction has wrong mode count");
  double m = 0.0, s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    m += v[i] * mm.modes[i].mx;
    s += v[i] * v[i] * mm.modes[i].sxx;
  }
  return {m, s};
}

/// E phi(X) under the Gaussian law, phi(x) = cos((x, v)).
inline double weak_value_gaussian(const GaussianModeMoments& mm, const TestFunction& phi)
{
  if (phi.family() != TestFamily::Cosine)
    throw UnsupportedOperation("weak_value_gaussian: only the COSINE test function is supported");
  const auto [m, s] = projected_moments(mm, phi.direction());
  return gaussian_cosine_expectation(m, s);
}

struct OracleWeakPair {
  double u_eps;
  double ubar;
};

/// u^eps = E phi(X^eps_T) and ubar = E phi(Xbar_T) by the RK4 oracle at equal substep counts.
inline OracleWeakPair oracle_weak_pair(const Model& model, double eps, double T,
                                       const SpectralField& x0, const SpectralField& y0,
                                       const TestFunction& phi, double steps_per_unit = 40.0)
{
  const double ue = weak_value_gaussian(gaussian_moments_coupled(model, eps, T, x0, y0, steps_per_unit), phi);
  const double ub = weak_value_gaussian(gaussian_moments_averaged_rk4(model, eps, T, x0, steps_per_unit), phi);
  return {ue, ub};
}

// ---------------------------------------------------------------------------
// D_x ubar(t, x) . h = E (phi'(Xbar_t), eta_t)

struct ScalarEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct AveragedMcParams {
  std::size_t M = 10000;
  double h = 1e-3;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

/// Gradient D_x ubar(t, x) from M averaged paths (streams (seed, i, W1)), each
/// carrying the n first-variation processes eta^{e_j}. Per-path gradients are
/// kept for variance propagation.
struct GradientEstimate {
  SpectralField mean;
  std::vector<std::vector<double>> per_path;
};

inline GradientEstimate estimate_Dx_ubar_gradient(const Model& model, const DriftMap& fbar,
                                                  const JacobianMap& jacobian,
                                                  const TestFunction& phi, double t,
                                                  const SpectralField& x,
                                                  const AveragedMcParams& p)
{
  if (!(t >= 0.0)) throw InvalidArgument("estimate_Dx_ubar: t must be nonnegative");
  if (p.M == 0) throw InvalidArgument("estimate_Dx_ubar: M must be >= 1");
  model.check_field(x, "estimate_Dx_ubar");
  const std::size_t n = model.modes();
  const StepGrid grid = t > 0.0 ? make_grid(t, p.h) : StepGrid{0, p.h};
  std::vector<std::vector<double>> per_path(p.M, std::vector<double>(n));
  parallel_for(p.M, p.threads, [&](std::size_t i) {
    NoiseStream w1(p.seed, i, ProcessTag::W1);
    AveragedStepper avg(model, fbar, grid.h);
    VariationStepper var(model, jacobian, grid.h);
    std::vector<VariationState> etas;
    etas.reserve(n);
    for (std::size_t j = 1; j <= n; ++j)
      etas.push_back({SpectralField::basis(n, model.length(), j)});
    SpectralField xb = x;
    for (std::size_t s = 0; s < grid.steps; ++s) {
      for (auto& e : etas) var.step(e, xb);
      avg.step(xb, w1);
    }
    const SpectralField g = phi.gradient(xb);
    for (std::size_t j = 0; j < n; ++j) per_path[i][j] = g.dot(etas[j].eta);
  });
  GradientEstimate out{model.zero(), std::move(per_path)};
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (const auto& row : out.per_path) s += row[j];
    out.mean[j] = s / static_cast<double>(p.M);
  }
  return out;
}

/// Directional derivative D_x ubar(t, x) . direction with one variation process per path.
inline ScalarEstimate estimate_Dx_ubar(const Model& model, const DriftMap& fbar,
                                       const JacobianMap& jacobian, const TestFunction& phi,
                                       double t, const SpectralField& x,
                                       const SpectralField& direction, const AveragedMcParams& p)
{
  if (!(t >= 0.0)) throw InvalidArgument("estimate_Dx_ubar: t must be nonnegative");
  if (p.M == 0) throw InvalidArgument("estimate_Dx_ubar: M must be >= 1");
  model.check_field(x, "estimate_Dx_ubar");
  model.check_field(direction, "estimate_Dx_ubar");
  if (direction.norm() == 0.0) throw InvalidArgument("estimate_Dx_ubar: direction must be nonzero");
  if (t == 0.0) return {phi.gradient(x).dot(direction), 0.0};
  const StepGrid grid = make_grid(t, p.h);
  std::vector<double> values(p.M);
  parallel_for(p.M, p.threads, [&](std::size_t i) {
    NoiseStream w1(p.seed, i, ProcessTag::W1);
    AveragedStepper avg(model, fbar, grid.h);
    VariationStepper var(model, jacobian, grid.h);
    VariationState eta{direction};
    SpectralField xb = x;
    for (std::size_t s = 0; s < grid.steps; ++s) {
      var.step(eta, xb);
      avg.step(xb, w1);
    }
    values[i] = phi.gradient(xb).dot(eta.eta);
  });
  const MeanEstimate e = mean_and_stderr(values);
  return {e.mean, e.std_error};
}

// ---------------------------------------------------------------------------
// u1(t, x, y) = int_0^inf E (F(x, Y^x_s(y)) - Fbar(x), D_x ubar(t, x)) ds

struct U1Params {
  double S = 0.0;               ///< truncation horizon; 0 selects 10 / beta
  double first_node = 0.02;     ///< first quadrature spacing; spacings grow by 1.3
  double node_ratio = 1.3;
  double h_frozen = 0.01;       ///< frozen-path step (nodes snap to this grid)
  std::size_t M_fast = 10000;   ///< frozen paths for the integrated gap
  AveragedMcParams slow{};      ///< averaged paths for D_x ubar
  bool stationary_coupling = true;
  double t_burn = 0.0;          ///< burn-in for the stationary start; 0 selects 8 / beta
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct ExpansionEstimates {
  double ubar = 0.0;      ///< E phi(Xbar_t) from the averaged paths
  double u1 = 0.0;
  double u1_std_error = 0.0;
  double S = 0.0;
  double tail_bound = 0.0;  ///< e^{-beta S / 2} ||F(x, y) - Fbar(x)|| ||D_x ubar||
  std::vector<double> nodes;
  SpectralField integrated_gap;  ///< int_0^S E (F(x, Y_s) - Fbar(x)) ds
  SpectralField gradient;        ///< D_x ubar(t, x)
};

/// Quadrature nodes 0 = s_0 < s_1 < ... = S with spacings growing geometrically,
/// snapped to multiples of h.
inline std::vector<double> geometric_nodes(double S, double first, double ratio, double h)
{
  if (!(S > 0.0 && first > 0.0 && ratio >= 1.0 && h > 0.0))
    throw InvalidArgument("geometric_nodes: invalid parameters");
  std::vector<double> nodes{0.0};
  double s = 0.0, d = first;
  while (s + d < S) {
    s += d;
    d *= ratio;
    const double snapped = std::round(s / h) * h;
    if (snapped > nodes.back()) nodes.push_back(snapped);
  }
  const double end = std::round(S / h) * h;
  if (end > nodes.back()) nodes.push_back(end);
  return nodes;
}

inline ExpansionEstimates estimate_u1(const Model& model, const DriftMap& fbar,
                                      const JacobianMap& jacobian, const TestFunction& phi,
                                      double t, const SpectralField& x, const SpectralField& y,
                                      const U1Params& p)
{
  model.check_field(x, "estimate_u1");
  model.check_field(y, "estimate_u1");
  if (p.M_fast < 2 || p.slow.M < 2) throw InvalidArgument("estimate_u1: need at least 2 paths");
  const double beta = model.beta();
  const double S = p.S > 0.0 ? p.S : 10.0 / beta;
  if (S < 10.0 / beta - 1e-12) throw InvalidArgument("estimate_u1: S must be >= 10 / beta");
  const double t_burn = p.t_burn > 0.0 ? p.t_burn : 8.0 / beta;
  const std::size_t n = model.modes();
  const auto nodes = geometric_nodes(S, p.first_node, p.node_ratio, p.h_frozen);
  std::vector<std::size_t> node_steps;
  for (double s : nodes) node_steps.push_back(static_cast<std::size_t>(std::llround(s / p.h_frozen)));

  const SpectralField fbar_x = fbar(x);
  const std::uint64_t seed_fast = derive_seed(p.seed, "u1-fast");
  const StepGrid burn = make_grid(t_burn, p.h_frozen);

  // Per-path trapezoid integrals of F(x, Y_s(y)) - Fbar(x) (or of the
  // difference to a stationary-started copy driven by the same noise).
  std::vector<std::vector<double>> d_path(p.M_fast, std::vector<double>(n, 0.0));
  parallel_for(p.M_fast, p.threads, [&](std::size_t i) {
    NoiseStream w2(seed_fast, i, ProcessTag::W2);
    FrozenStepper sy(model, p.h_frozen), sz(model, p.h_frozen);
    SpectralField yy = y;
    SpectralField zz = y;
    if (p.stationary_coupling) {
      NoiseStream aux(seed_fast, i, ProcessTag::AUX);
      for (std::size_t j = 0; j < burn.steps; ++j) sz.step(zz, x, aux);
    }
    SpectralField fy = model.zero(), fz = model.zero();
    std::vector<double> xi(n), prev(n), cur(n);
    auto integrand = [&](std::vector<double>& out) {
      model.F_into(x, yy, fy);
      if (p.stationary_coupling) {
        model.F_into(x, zz, fz);
        for (std::size_t k = 0; k < n; ++k) out[k] = fy[k] - fz[k];
      } else {
        for (std::size_t k = 0; k < n; ++k) out[k] = fy[k] - fbar_x[k];
      }
    };
    integrand(prev);
    std::size_t step = 0;
    for (std::size_t q = 1; q < nodes.size(); ++q) {
      for (; step < node_steps[q]; ++step) {
        for (auto& z : xi) z = w2.normal();
        sy.step(yy, x, xi);
        if (p.stationary_coupling) sz.step(zz, x, xi);
      }
      integrand(cur);
      const double w = 0.5 * (nodes[q] - nodes[q - 1]);
      for (std::size_t k = 0; k < n; ++k) d_path[i][k] += w * (prev[k] + cur[k]);
      prev.swap(cur);
    }
  });

  SpectralField d = model.zero();
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (const auto& row : d_path) s += row[k];
    d[k] = s / static_cast<double>(p.M_fast);
  }

  AveragedMcParams slow = p.slow;
  slow.seed = derive_seed(p.seed, "u1-slow");
  slow.threads = p.threads;
  const GradientEstimate grad = estimate_Dx_ubar_gradient(model, fbar, jacobian, phi, t, x, slow);

  ExpansionEstimates out{0.0, d.dot(grad.mean), 0.0, S, 0.0, nodes, d, grad.mean};
  // Delta method: var(d . g) ~ g^T Cov(d) g / M_fast + d^T Cov(g) d / M_slow.
  std::vector<double> proj_d(p.M_fast), proj_g(p.slow.M);
  for (std::size_t i = 0; i < p.M_fast; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += d_path[i][k] * grad.mean[k];
    proj_d[i] = s;
  }
  for (std::size_t i = 0; i < p.slow.M; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += grad.per_path[i][k] * d[k];
    proj_g[i] = s;
  }
  const double se_d = mean_and_stderr(proj_d).std_error;
  const double se_g = mean_and_stderr(proj_g).std_error;
  out.u1_std_error = std::sqrt(se_d * se_d + se_g * se_g);
  out.tail_bound =
      std::exp(-0.5 * beta * S) * (model.F(x, y) - fbar_x).norm() * grad.mean.norm();

  // ubar from independent averaged paths of the same batch size.
  std::vector<double> phis(slow.M);
  const StepGrid g = t > 0.0 ? make_grid(t, slow.h) : StepGrid{0, slow.h};
  parallel_for(slow.M, slow.threads, [&](std::size_t i) {
    NoiseStream w1(derive_seed(p.seed, "u1-ubar"), i, ProcessTag::W1);
    AveragedStepper avg(model, fbar, g.h);
    SpectralField xb = x;
    for (std::size_t s = 0; s < g.steps; ++s) avg.step(xb, w1);
    phis[i] = phi(xb);
  });
  out.ubar = mean_and_stderr(phis).mean;
  return out;
}

// ---------------------------------------------------------------------------
// Expansion residual table

struct ResidualRow {
  double eps;
  double diff;    ///< u^eps - ubar
  double scaled;  ///< (u^eps - ubar) / eps
};

inline std::vector<ResidualRow> expansion_residual_study(const Model& model,
                                                         const std::vector<double>& eps_grid,
                                                         double T, const SpectralField& x,
                                                         const SpectralField& y,
                                                         const TestFunction& phi,
                                                         double steps_per_unit = 40.0)
{
  std::vector<ResidualRow> rows;
  for (double eps : eps_grid) {
    const OracleWeakPair w = oracle_weak_pair(model, eps, T, x, y, phi, steps_per_unit);
    const double diff = w.u_eps - w.ubar;
    rows.push_back({eps, diff, diff / eps});
  }
  return rows;
}

}  // namespace avgspde
