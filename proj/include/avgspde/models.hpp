#pragma once

// Drift pairs (F, G), covariance rules for the two Q-Wiener processes, test
// functions, and the hypothesis checks that gate every experiment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "avgspde/errors.hpp"
#include "avgspde/spectral.hpp"

namespace avgspde {

// ---------------------------------------------------------------------------
// Covariance operators Q = diag(lambda_k)

enum class CovarianceRule { Constant, Power };

struct CovarianceSpec {
  CovarianceRule rule = CovarianceRule::Power;
  double c = 1.0;  ///< scale
  double p = 4.0;  ///< decay exponent (power rule only)

  static CovarianceSpec constant(double c) { return {CovarianceRule::Constant, c, 0.0}; }
  static CovarianceSpec power(double c, double p) { return {CovarianceRule::Power, c, p}; }

  double lambda(std::size_t k) const
  {
    if (k == 0) throw InvalidArgument("CovarianceSpec::lambda: mode index must be >= 1");
    if (rule == CovarianceRule::Constant) return c;
    return c * std::pow(static_cast<double>(k), -p);
  }

  bool nonnegative() const { return c >= 0.0; }

  /// sum_{k <= n} lambda_k
  double partial_trace(std::size_t n) const
  {
    double s = 0.0;
    for (std::size_t k = 1; k <= n; ++k) s += lambda(k);
    return s;
  }

  /// sum_{k <= n} lambda_k alpha_k
  double partial_weighted_trace(std::size_t n, double length) const
  {
    double s = 0.0;
    for (std::size_t k = 1; k <= n; ++k) s += lambda(k) * eigenvalue(k, length);
    return s;
  }

  /// Tr Q < infinity as n -> infinity.
  bool trace_class() const
  {
    if (c == 0.0) return true;
    return rule == CovarianceRule::Power && p > 1.0;
  }

  /// Tr((-A) Q) < infinity as n -> infinity (alpha_k grows like k^2).
  bool weighted_trace_class() const
  {
    if (c == 0.0) return true;
    return rule == CovarianceRule::Power && p > 3.0;
  }

  bool operator==(const CovarianceSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Drift families

/// Mode-diagonal affine drifts:
///   F(x, y) = a.x + b.y + f0,   G(x, y) = g.x - c.y + g0.
struct LinearDrift {
  std::vector<double> a, b, f0, g, c, g0;

  bool operator==(const LinearDrift&) const = default;
};

/// Jointly C^3 scalar map with bounded derivatives:
///   s(u, v) = k0 + ku u + kv v + sin_amp sin(sin_wu u + sin_wv v + sin_phase)
///             + tanh_amp tanh(tanh_tu u + tanh_tv v)
struct ScalarMap {
  double k0 = 0.0, ku = 0.0, kv = 0.0;
  double sin_amp = 0.0, sin_wu = 0.0, sin_wv = 0.0, sin_phase = 0.0;
  double tanh_amp = 0.0, tanh_tu = 0.0, tanh_tv = 0.0;

  double operator()(double u, double v) const
  {
    return k0 + ku * u + kv * v + sin_amp * std::sin(sin_wu * u + sin_wv * v + sin_phase) +
           tanh_amp * std::tanh(tanh_tu * u + tanh_tv * v);
  }

  double du(double u, double v) const
  {
    const double th = std::tanh(tanh_tu * u + tanh_tv * v);
    return ku + sin_amp * sin_wu * std::cos(sin_wu * u + sin_wv * v + sin_phase) +
           tanh_amp * tanh_tu * (1.0 - th * th);
  }

  double dv(double u, double v) const
  {
    const double th = std::tanh(tanh_tu * u + tanh_tv * v);
    return kv + sin_amp * sin_wv * std::cos(sin_wu * u + sin_wv * v + sin_phase) +
           tanh_amp * tanh_tv * (1.0 - th * th);
  }

  /// sup |ds/du|
  double lipschitz_u() const
  {
    return std::abs(ku) + std::abs(sin_amp * sin_wu) + std::abs(tanh_amp * tanh_tu);
  }
  /// sup |ds/dv|
  double lipschitz_v() const
  {
    return std::abs(kv) + std::abs(sin_amp * sin_wv) + std::abs(tanh_amp * tanh_tv);
  }

  bool depends_on_v() const
  {
    return kv != 0.0 || (sin_amp != 0.0 && sin_wv != 0.0) || (tanh_amp != 0.0 && tanh_tv != 0.0);
  }

  bool operator==(const ScalarMap&) const = default;
};

/// Pointwise drifts F(x,y)(xi) = f(x(xi), y(xi)), G likewise, evaluated on the
/// type-I sine collocation grid. grid_size = 0 selects 2n.
struct NemytskiiDrift {
  ScalarMap f;
  ScalarMap g;
  std::size_t grid_size = 0;

  bool operator==(const NemytskiiDrift&) const = default;
};

using DriftModel = std::variant<LinearDrift, NemytskiiDrift>;

struct ModelSpec {
  DriftModel drift;
  CovarianceSpec q1;
  CovarianceSpec q2;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double length = 1.0;
  std::size_t modes = 1;

  bool is_linear() const { return std::holds_alternative<LinearDrift>(drift); }

  bool operator==(const ModelSpec&) const = default;
};

/// LINEAR spec with every per-mode coefficient set to the same scalar.
inline LinearDrift uniform_linear_drift(std::size_t n, double a, double b, double f0, double g,
                                        double c, double g0)
{
  return {std::vector<double>(n, a), std::vector<double>(n, b), std::vector<double>(n, f0),
          std::vector<double>(n, g), std::vector<double>(n, c), std::vector<double>(n, g0)};
}

// ---------------------------------------------------------------------------
// Hypothesis validation

struct ValidationCheck {
  std::string name;
  bool passed;
  double value;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  double alpha1 = 0.0;
  double lipschitz_g_y = 0.0;  ///< L_g
  double beta = 0.0;           ///< alpha_1 - L_g, mixing rate of the frozen fast process
  double trace_q1 = 0.0;
  double trace_q2 = 0.0;
  double weighted_trace_q1 = 0.0;

  bool ok() const
  {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }

  std::string summary() const
  {
    std::ostringstream os;
    for (const auto& c : checks)
      os << (c.passed ? "[ok]   " : "[FAIL] ") << c.name << " = " << c.value
         << (c.detail.empty() ? "" : "  (" + c.detail + ")") << '\n';
    return os.str();
  }

  std::string failures() const
  {
    std::string s;
    for (const auto& c : checks)
      if (!c.passed) s += (s.empty() ? "" : "; ") + c.name + (c.detail.empty() ? "" : ": " + c.detail);
    return s;
  }
};

/// Lipschitz metadata derived from the drift parameters.
struct DriftConstants {
  double k_f = 0.0;  ///< ||F(x1,y1)-F(x2,y2)|| <= K_F (||dx|| + ||dy||)
  double k_g = 0.0;
  double l_g = 0.0;  ///< Lipschitz constant of G in y
};

inline double max_abs_sum(const std::vector<double>& p, const std::vector<double>& q)
{
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(p.size(), q.size()); ++i)
    m = std::max(m, std::abs(p[i]) + std::abs(q[i]));
  return m;
}

inline DriftConstants drift_constants(const ModelSpec& spec)
{
  DriftConstants k;
  if (const auto* lin = std::get_if<LinearDrift>(&spec.drift)) {
    k.k_f = max_abs_sum(lin->a, lin->b);
    k.k_g = max_abs_sum(lin->g, lin->c);
    for (double c : lin->c) k.l_g = std::max(k.l_g, std::abs(c));
  } else {
    const auto& nem = std::get<NemytskiiDrift>(spec.drift);
    k.k_f = std::max(nem.f.lipschitz_u(), nem.f.lipschitz_v());
    k.k_g = std::max(nem.g.lipschitz_u(), nem.g.lipschitz_v());
    k.l_g = nem.g.lipschitz_v();
  }
  return k;
}

inline ValidationReport validate_hypotheses(const ModelSpec& spec, std::size_t n)
{
  ValidationReport r;
  auto add = [&](std::string name, bool ok, double value, std::string detail = {}) {
    r.checks.push_back({std::move(name), ok, value, std::move(detail)});
  };

  const bool geometry_ok = spec.length > 0.0 && n >= 1;
  add("geometry (l > 0, n >= 1)", geometry_ok, spec.length);
  if (!geometry_ok) return r;
  add("mode count matches spec", n == spec.modes, static_cast<double>(spec.modes));

  if (const auto* lin = std::get_if<LinearDrift>(&spec.drift)) {
    const bool sizes = lin->a.size() == n && lin->b.size() == n && lin->f0.size() == n &&
                       lin->g.size() == n && lin->c.size() == n && lin->g0.size() == n;
    add("linear coefficient arrays have n entries", sizes, static_cast<double>(n));
    if (!sizes) return r;
    double cmin = *std::min_element(lin->c.begin(), lin->c.end());
    add("fast damping c_k >= 0", cmin >= 0.0, cmin);
  } else {
    const auto& nem = std::get<NemytskiiDrift>(spec.drift);
    const std::size_t grid = nem.grid_size == 0 ? 2 * n : nem.grid_size;
    add("collocation grid_size >= n", grid >= n, static_cast<double>(grid));
  }

  const DriftConstants k = drift_constants(spec);
  r.alpha1 = eigenvalue(1, spec.length);
  r.lipschitz_g_y = k.l_g;
  r.beta = r.alpha1 - k.l_g;
  add("dissipativity L_g < alpha_1", k.l_g < r.alpha1, k.l_g,
      "alpha_1 = " + std::to_string(r.alpha1) + ", beta = " + std::to_string(r.beta));

  add("sigma1 >= 0", spec.sigma1 >= 0.0, spec.sigma1);
  add("sigma2 >= 0", spec.sigma2 >= 0.0, spec.sigma2);
  add("Q1 eigenvalues nonnegative", spec.q1.nonnegative(), spec.q1.c);
  add("Q2 eigenvalues nonnegative", spec.q2.nonnegative(), spec.q2.c);

  r.trace_q1 = spec.q1.partial_trace(n);
  r.trace_q2 = spec.q2.partial_trace(n);
  r.weighted_trace_q1 = spec.q1.partial_weighted_trace(n, spec.length);
  add("Tr(Q1) finite", spec.q1.trace_class(), r.trace_q1, "partial sum over n modes");
  add("Tr(Q2) finite", spec.q2.trace_class(), r.trace_q2, "partial sum over n modes");
  add("Tr((-A)Q1) finite", spec.q1.weighted_trace_class(), r.weighted_trace_q1,
      spec.q1.weighted_trace_class() ? "partial sum over n modes"
                                     : "diverges as n grows; power rule needs p > 3");
  return r;
}

// ---------------------------------------------------------------------------
// Drift evaluation

/// Validated model with cached eigenvalues and collocation transform.
class Model {
public:
  explicit Model(ModelSpec spec) : spec_(std::move(spec))
  {
    report_ = validate_hypotheses(spec_, spec_.modes);
    if (!report_.ok())
      throw ConfigError("model fails hypothesis validation: " + report_.failures());
    constants_ = drift_constants(spec_);
    alpha_.resize(spec_.modes);
    for (std::size_t k = 1; k <= spec_.modes; ++k) alpha_[k - 1] = eigenvalue(k, spec_.length);
    if (const auto* nem = std::get_if<NemytskiiDrift>(&spec_.drift)) {
      const std::size_t grid = nem->grid_size == 0 ? 2 * spec_.modes : nem->grid_size;
      transform_.emplace(spec_.modes, grid, spec_.length);
    }
  }

  const ModelSpec& spec() const { return spec_; }
  const ValidationReport& validation() const { return report_; }
  const DriftConstants& constants() const { return constants_; }
  std::size_t modes() const { return spec_.modes; }
  double length() const { return spec_.length; }
  double alpha(std::size_t i) const { return alpha_[i]; }
  double beta() const { return report_.beta; }
  bool is_linear() const { return spec_.is_linear(); }
  const LinearDrift& linear() const { return std::get<LinearDrift>(spec_.drift); }

  SpectralField zero() const { return SpectralField(spec_.modes, spec_.length); }

  /// True when F does not depend on the fast variable.
  bool slow_drift_ignores_fast() const
  {
    if (const auto* lin = std::get_if<LinearDrift>(&spec_.drift))
      return std::all_of(lin->b.begin(), lin->b.end(), [](double v) { return v == 0.0; });
    return !std::get<NemytskiiDrift>(spec_.drift).f.depends_on_v();
  }

  SpectralField F(const SpectralField& x, const SpectralField& y) const
  {
    SpectralField out = zero();
    F_into(x, y, out);
    return out;
  }

  SpectralField G(const SpectralField& x, const SpectralField& y) const
  {
    SpectralField out = zero();
    G_into(x, y, out);
    return out;
  }

  /// F(x, y) written into out (no allocation for the LINEAR family).
  void F_into(const SpectralField& x, const SpectralField& y, SpectralField& out) const
  {
    check_pair(x, y, "apply_F");
    check_field(out, "apply_F");
    if (const auto* lin = std::get_if<LinearDrift>(&spec_.drift)) {
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = lin->a[i] * x[i] + lin->b[i] * y[i] + lin->f0[i];
      return;
    }
    out = pointwise(std::get<NemytskiiDrift>(spec_.drift).f, x, y);
  }

  void G_into(const SpectralField& x, const SpectralField& y, SpectralField& out) const
  {
    check_pair(x, y, "apply_G");
    check_field(out, "apply_G");
    if (const auto* lin = std::get_if<LinearDrift>(&spec_.drift)) {
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = lin->g[i] * x[i] - lin->c[i] * y[i] + lin->g0[i];
      return;
    }
    out = pointwise(std::get<NemytskiiDrift>(spec_.drift).g, x, y);
  }

  /// Mean of the frozen fast mode k under mu^x (LINEAR only):
  /// m_k(x) = (g_k x_k + g0_k) / (alpha_k + c_k).
  SpectralField stationary_fast_mean(const SpectralField& x) const
  {
    const LinearDrift& lin = require_linear("stationary_fast_mean");
    check_field(x, "stationary_fast_mean");
    SpectralField m = zero();
    for (std::size_t i = 0; i < m.size(); ++i)
      m[i] = (lin.g[i] * x[i] + lin.g0[i]) / (alpha_[i] + lin.c[i]);
    return m;
  }

  /// Closed-form averaged drift for the LINEAR family.
  SpectralField fbar_closed_form(const SpectralField& x) const
  {
    const LinearDrift& lin = require_linear("fbar_closed_form");
    check_field(x, "fbar_closed_form");
    SpectralField out = zero();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double m = (lin.g[i] * x[i] + lin.g0[i]) / (alpha_[i] + lin.c[i]);
      out[i] = lin.a[i] * x[i] + lin.b[i] * m + lin.f0[i];
    }
    return out;
  }

  /// Diagonal of the constant Jacobian of the closed-form averaged drift.
  std::vector<double> fbar_jacobian_diagonal() const
  {
    const LinearDrift& lin = require_linear("fbar_jacobian_diagonal");
    std::vector<double> d(modes());
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = lin.a[i] + lin.b[i] * lin.g[i] / (alpha_[i] + lin.c[i]);
    return d;
  }

  /// Constant part of the closed-form averaged drift (value at x = 0).
  std::vector<double> fbar_offset() const
  {
    const LinearDrift& lin = require_linear("fbar_offset");
    std::vector<double> d(modes());
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = lin.f0[i] + lin.b[i] * lin.g0[i] / (alpha_[i] + lin.c[i]);
    return d;
  }

  void check_field(const SpectralField& x, const char* where) const
  {
    if (x.size() != spec_.modes || x.length() != spec_.length)
      throw InvalidArgument(std::string(where) + ": field geometry does not match the model");
  }

private:
  const LinearDrift& require_linear(const char* where) const
  {
    const auto* lin = std::get_if<LinearDrift>(&spec_.drift);
    if (!lin)
      throw UnsupportedOperation(std::string(where) +
                                 ": closed form exists only for the LINEAR family");
    return *lin;
  }

  void check_pair(const SpectralField& x, const SpectralField& y, const char* where) const
  {
    x.require_same_geometry(y, where);
    check_field(x, where);
  }

  SpectralField pointwise(const ScalarMap& s, const SpectralField& x, const SpectralField& y) const
  {
    const std::vector<double> u = transform_->synthesis(x);
    const std::vector<double> v = transform_->synthesis(y);
    std::vector<double> w(u.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = s(u[j], v[j]);
    return transform_->analysis(w);
  }

  ModelSpec spec_;
  ValidationReport report_;
  DriftConstants constants_;
  std::vector<double> alpha_;
  std::optional<SineTransform> transform_;
};

inline SpectralField apply_F(const Model& m, const SpectralField& x, const SpectralField& y)
{
  return m.F(x, y);
}

inline SpectralField apply_G(const Model& m, const SpectralField& x, const SpectralField& y)
{
  return m.G(x, y);
}

inline SpectralField fbar_closed_form(const Model& m, const SpectralField& x)
{
  return m.fbar_closed_form(x);
}

// ---------------------------------------------------------------------------
// Test functions phi in C^3_b

enum class TestFamily { Cosine, Rational };

class TestFunction {
public:
  /// phi(x) = cos((x, v))
  static TestFunction cosine(SpectralField direction)
  {
    return TestFunction(TestFamily::Cosine, std::move(direction));
  }
  /// phi(x) = 1 / (1 + ||x||^2)
  static TestFunction rational() { return TestFunction(TestFamily::Rational, std::nullopt); }

  TestFamily family() const { return family_; }
  const SpectralField& direction() const
  {
    if (!v_) throw UnsupportedOperation("TestFunction: rational family has no direction");
    return *v_;
  }

  double operator()(const SpectralField& x) const
  {
    if (family_ == TestFamily::Cosine) {
      x.require_same_geometry(*v_, "phi_eval");
      return std::cos(x.dot(*v_));
    }
    const double r2 = x.dot(x);
    return 1.0 / (1.0 + r2);
  }

  SpectralField gradient(const SpectralField& x) const
  {
    if (family_ == TestFamily::Cosine) {
      x.require_same_geometry(*v_, "phi_grad");
      return -std::sin(x.dot(*v_)) * SpectralField(*v_);
    }
    const double r2 = x.dot(x);
    return (-2.0 / ((1.0 + r2) * (1.0 + r2))) * SpectralField(x);
  }

  /// sup_x ||phi'(x)||
  double gradient_bound() const
  {
    if (family_ == TestFamily::Cosine) return v_->norm();
    return 9.0 / (8.0 * std::sqrt(3.0));  // attained at ||x|| = 1/sqrt(3)
  }

  bool operator==(const TestFunction&) const = default;

private:
  TestFunction(TestFamily f, std::optional<SpectralField> v) : family_(f), v_(std::move(v)) {}

  TestFamily family_;
  std::optional<SpectralField> v_;
};

inline double phi_eval(const TestFunction& phi, const SpectralField& x) { return phi(x); }
inline SpectralField phi_grad(const TestFunction& phi, const SpectralField& x)
{
  return phi.gradient(x);
}

}  // namespace avgspde
