#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "avgspde/models.hpp"

using namespace avgspde;

namespace {

constexpr double kPi = std::numbers::pi;

ModelSpec linear_spec(std::size_t n, double a, double b, double f0, double g, double c, double g0,
                      double l = kPi)
{
  ModelSpec s;
  s.drift = uniform_linear_drift(n, a, b, f0, g, c, g0);
  s.q1 = CovarianceSpec::power(1.0, 4.0);
  s.q2 = CovarianceSpec::power(1.0, 2.0);
  s.sigma1 = 0.5;
  s.sigma2 = 0.5;
  s.length = l;
  s.modes = n;
  return s;
}

ModelSpec nemytskii_spec(std::size_t n)
{
  ModelSpec s = linear_spec(n, 0, 0, 0, 0, 0, 0);
  ScalarMap f;
  f.sin_amp = 0.8;
  f.sin_wu = 1.0;
  f.sin_wv = 0.7;
  f.tanh_amp = 0.4;
  f.tanh_tu = -0.5;
  f.tanh_tv = 1.2;
  f.kv = 0.3;
  ScalarMap g;
  g.ku = 0.6;
  g.sin_amp = 0.3;
  g.sin_wu = 1.0;
  g.sin_wv = 0.5;
  g.tanh_amp = 0.2;
  g.tanh_tv = -1.0;
  s.drift = NemytskiiDrift{f, g, 0};
  return s;
}

SpectralField random_field(std::mt19937_64& rng, std::size_t n, double l, double scale = 1.0)
{
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> c(n);
  for (auto& v : c) v = nd(rng);
  return SpectralField(c, l);
}

ModelSpec random_linear_spec(std::mt19937_64& rng, std::size_t n)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0), uc(0.0, 0.9);
  LinearDrift d;
  for (std::size_t i = 0; i < n; ++i) {
    d.a.push_back(u(rng));
    d.b.push_back(u(rng));
    d.f0.push_back(u(rng));
    d.g.push_back(u(rng));
    d.c.push_back(uc(rng));
    d.g0.push_back(u(rng));
  }
  ModelSpec s = linear_spec(n, 0, 0, 0, 0, 0, 0);
  s.drift = d;
  return s;
}

const ValidationCheck* find_check(const ValidationReport& r, const std::string& prefix)
{
  for (const auto& c : r.checks)
    if (c.name.rfind(prefix, 0) == 0) return &c;
  return nullptr;
}

}  // namespace

TEST(Validation, DissipativeLinearPasses)
{
  const auto r = validate_hypotheses(linear_spec(4, 0, 1, 0, 1, 0.5, 0), 4);
  EXPECT_TRUE(r.ok()) << r.summary();
  EXPECT_DOUBLE_EQ(r.lipschitz_g_y, 0.5);
  EXPECT_NEAR(r.alpha1, 1.0, 1e-14);
  EXPECT_NEAR(r.beta, 0.5, 1e-14);
}

TEST(Validation, DampingAboveFirstEigenvalueFails)
{
  const auto r = validate_hypotheses(linear_spec(4, 0, 0, 0, 0, 1.5, 0), 4);
  EXPECT_FALSE(r.ok());
  const auto* c = find_check(r, "dissipativity");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->passed);
  EXPECT_DOUBLE_EQ(c->value, 1.5);
  EXPECT_THROW(Model(linear_spec(4, 0, 0, 0, 0, 1.5, 0)), ConfigError);
}

TEST(Validation, WeightedTraceFlagsSlowPowerTwo)
{
  ModelSpec s = linear_spec(16, 0, 1, 0, 1, 0.5, 0);
  s.q1 = CovarianceSpec::power(1.0, 2.0);
  const auto r = validate_hypotheses(s, 16);
  const auto* c = find_check(r, "Tr((-A)Q1)");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->passed);
  // partial sums grow without bound: with l = pi, lambda_k alpha_k = 1 for every k
  EXPECT_NEAR(r.weighted_trace_q1, 16.0, 1e-12);
  EXPECT_NEAR(validate_hypotheses([&] {
                auto t = s;
                t.modes = 64;
                t.drift = uniform_linear_drift(64, 0, 1, 0, 1, 0.5, 0);
                return t;
              }(), 64).weighted_trace_q1,
              64.0, 1e-10);
  EXPECT_TRUE(find_check(r, "Tr(Q1)")->passed);
}

TEST(Validation, TraceRules)
{
  EXPECT_TRUE(CovarianceSpec::power(1.0, 1.5).trace_class());
  EXPECT_FALSE(CovarianceSpec::power(1.0, 1.0).trace_class());
  EXPECT_FALSE(CovarianceSpec::constant(1.0).trace_class());
  EXPECT_TRUE(CovarianceSpec::constant(0.0).trace_class());
  EXPECT_TRUE(CovarianceSpec::power(1.0, 3.5).weighted_trace_class());
  EXPECT_FALSE(CovarianceSpec::power(1.0, 3.0).weighted_trace_class());
  EXPECT_NEAR(CovarianceSpec::power(2.0, 2.0).lambda(3), 2.0 / 9.0, 1e-15);
  EXPECT_NEAR(CovarianceSpec::power(1.0, 2.0).partial_trace(3), 1.0 + 0.25 + 1.0 / 9.0, 1e-15);
  ModelSpec s = linear_spec(3, 0, 0, 0, 0, 0, 0);
  s.q2 = CovarianceSpec::power(-1.0, 2.0);
  EXPECT_FALSE(find_check(validate_hypotheses(s, 3), "Q2 eigenvalues")->passed);
}

TEST(Validation, NemytskiiUsesScalarDerivativeBounds)
{
  const ModelSpec s = nemytskii_spec(6);
  const auto r = validate_hypotheses(s, 6);
  EXPECT_TRUE(r.ok()) << r.summary();
  EXPECT_NEAR(r.lipschitz_g_y, 0.3 * 0.5 + 0.2 * 1.0, 1e-15);
}

TEST(Drift, LinearExamples)
{
  const double l = kPi;
  const auto e1 = SpectralField::basis(3, l, 1);
  const Model m1(linear_spec(3, 1, 1, 0, 0, 0, 0));
  const auto f = apply_F(m1, e1, e1);
  EXPECT_DOUBLE_EQ(f[0], 2.0);
  EXPECT_DOUBLE_EQ(f[1], 0.0);
  const Model m2(linear_spec(3, 0, 0, 0, 1, 0.5, 0));
  const auto g = apply_G(m2, e1, e1);
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_DOUBLE_EQ(g[2], 0.0);
}

TEST(Drift, NemytskiiSinAtZero)
{
  ModelSpec s = linear_spec(5, 0, 0, 0, 0, 0, 0);
  ScalarMap f;
  f.sin_amp = 1.0;
  f.sin_wu = 1.0;
  s.drift = NemytskiiDrift{f, ScalarMap{}, 0};
  const Model m(s);
  const auto out = apply_F(m, m.zero(), m.zero());
  for (double v : out.coeffs()) EXPECT_EQ(v, 0.0);
}

TEST(Drift, NemytskiiMatchesQuadrature)
{
  // Compare pseudo-spectral projection against a fine-grid projection of f(x(xi), y(xi)).
  const Model m(nemytskii_spec(4));
  std::mt19937_64 rng(2);
  const auto x = random_field(rng, 4, kPi, 0.1);
  const auto y = random_field(rng, 4, kPi, 0.1);
  const auto ps = m.F(x, y);
  const std::size_t N = 20000;
  const auto u = sine_synthesis(x, N), v = sine_synthesis(y, N);
  const auto& f = std::get<NemytskiiDrift>(m.spec().drift).f;
  std::vector<double> w(N);
  for (std::size_t j = 0; j < N; ++j) w[j] = f(u[j], v[j]);
  const auto fine = sine_analysis(w, 4, kPi);
  // small-amplitude fields: aliasing from the nonlinearity is weak
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(ps[i], fine[i], 2e-3);
}

TEST(Drift, GeometryMismatchRejected)
{
  const Model m(linear_spec(3, 1, 1, 0, 0, 0, 0));
  EXPECT_THROW(m.F(SpectralField(4, kPi), SpectralField(4, kPi)), InvalidArgument);
  EXPECT_THROW(m.F(SpectralField(3, kPi), SpectralField(3, 1.0)), InvalidArgument);
  EXPECT_THROW(m.G(SpectralField(3, 2.0), SpectralField(3, 2.0)), InvalidArgument);
}

TEST(Drift, LipschitzProperty)
{
  std::mt19937_64 rng(17);
  std::vector<Model> models;
  models.emplace_back(random_linear_spec(rng, 6));
  models.emplace_back(nemytskii_spec(6));
  for (const Model& m : models) {
    const auto k = m.constants();
    for (int i = 0; i < 1000; ++i) {
      const double sc = i % 2 ? 0.1 : 3.0;
      const auto x1 = random_field(rng, 6, kPi, sc), y1 = random_field(rng, 6, kPi, sc);
      const auto x2 = random_field(rng, 6, kPi, sc), y2 = random_field(rng, 6, kPi, sc);
      const double d = (x1 - x2).norm() + (y1 - y2).norm();
      EXPECT_LE((m.F(x1, y1) - m.F(x2, y2)).norm(), k.k_f * d + 1e-9);
      EXPECT_LE((m.G(x1, y1) - m.G(x2, y2)).norm(), k.k_g * d + 1e-9);
    }
  }
}

TEST(Fbar, ClosedFormExamples)
{
  const auto e1 = SpectralField::basis(4, kPi, 1);
  EXPECT_NEAR(Model(linear_spec(4, 0, 1, 0, 1, 0.5, 0)).fbar_closed_form(e1)[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(Model(linear_spec(4, 1, 1, 0, 1, 0.5, 0)).fbar_closed_form(e1)[0], 5.0 / 3.0, 1e-15);
  const Model m0(linear_spec(4, 0.7, 0, 0.2, 1, 0.5, 0.3));
  std::mt19937_64 rng(4);
  const auto x = random_field(rng, 4, kPi);
  const auto fb = fbar_closed_form(m0, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(fb[i], 0.7 * x[i] + 0.2);
  EXPECT_TRUE(m0.slow_drift_ignores_fast());
}

TEST(Fbar, StationaryMeanSolvesFrozenEquation)
{
  // (A - c) m + g x + g0 = 0 per mode, i.e. G(x, m) - alpha m = 0
  std::mt19937_64 rng(8);
  const Model m(random_linear_spec(rng, 5));
  const auto x = random_field(rng, 5, kPi);
  const auto mean = m.stationary_fast_mean(x);
  const auto g = m.G(x, mean);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(g[i] - m.alpha(i) * mean[i], 0.0, 1e-13);
  // averaging a linear F over mu^x equals F at the mean
  const auto fb = m.fbar_closed_form(x);
  const auto fm = m.F(x, mean);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(fb[i], fm[i], 1e-14);
}

TEST(Fbar, NemytskiiUnsupported)
{
  const Model m(nemytskii_spec(3));
  EXPECT_THROW(m.fbar_closed_form(m.zero()), UnsupportedOperation);
  EXPECT_THROW(m.fbar_jacobian_diagonal(), UnsupportedOperation);
}

TEST(Fbar, LipschitzConstant)
{
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    const Model m(random_linear_spec(rng, 6));
    const auto& lin = m.linear();
    double gmax = 0.0;
    for (std::size_t i = 0; i < 6; ++i) gmax = std::max(gmax, std::abs(lin.g[i]) / (m.alpha(i) + lin.c[i]));
    const double bound = m.constants().k_f * (1.0 + gmax);
    for (int i = 0; i < 200; ++i) {
      const auto x1 = random_field(rng, 6, kPi), x2 = random_field(rng, 6, kPi);
      EXPECT_LE((m.fbar_closed_form(x1) - m.fbar_closed_form(x2)).norm(),
                bound * (x1 - x2).norm() + 1e-12);
    }
  }
}

TEST(TestFunction, Examples)
{
  const auto e1 = SpectralField::basis(3, kPi, 1);
  const auto cosine = TestFunction::cosine(e1);
  const SpectralField zero(3, kPi);
  EXPECT_DOUBLE_EQ(phi_eval(cosine, zero), 1.0);
  const auto grad0 = phi_grad(cosine, zero);
  for (double v : grad0.coeffs()) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(phi_eval(cosine, (kPi / 2) * e1), 0.0, 1e-15);
  const auto rat = TestFunction::rational();
  EXPECT_DOUBLE_EQ(phi_eval(rat, SpectralField({0.6, 0.8, 0.0}, kPi)), 0.5);
  EXPECT_THROW(phi_eval(cosine, SpectralField(4, kPi)), InvalidArgument);
  EXPECT_THROW(phi_grad(cosine, SpectralField(3, 1.0)), InvalidArgument);
}

TEST(TestFunction, GradientMatchesFiniteDifferences)
{
  std::mt19937_64 rng(99);
  const auto v = random_field(rng, 5, 2.0);
  for (const auto& phi : {TestFunction::cosine(v), TestFunction::rational()}) {
    for (int dir = 0; dir < 10; ++dir) {
      const auto x = random_field(rng, 5, 2.0, 0.5);
      auto h = random_field(rng, 5, 2.0);
      h *= 1.0 / h.norm();
      const double d = 1e-5;
      const double fd = (phi(x + d * h) - phi(x - d * h)) / (2 * d);
      const double an = phi_grad(phi, x).dot(h);
      EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(an)));
    }
  }
}

TEST(TestFunction, GradientBound)
{
  std::mt19937_64 rng(5);
  const auto rat = TestFunction::rational();
  double best = 0.0;
  for (int i = 0; i < 2000; ++i) {
    auto x = random_field(rng, 3, 1.0);
    x *= (i / 2000.0) * 2.0 / x.norm();
    best = std::max(best, rat.gradient(x).norm());
    EXPECT_LE(rat.gradient(x).norm(), rat.gradient_bound() + 1e-15);
  }
  EXPECT_NEAR(best, rat.gradient_bound(), 1e-4);
}
