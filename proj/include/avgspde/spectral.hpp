#pragma once

// Dirichlet-Laplacian eigenbasis on [0, l]: eigenpairs, the sine-coefficient
// field type, semigroup action and the type-I sine transform used for
// pointwise (Nemytskii) nonlinearities.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "avgspde/errors.hpp"

namespace avgspde {

/// alpha_k = (k pi / l)^2, the k-th eigenvalue of -Laplacian with Dirichlet ends.
inline double eigenvalue(std::size_t k, double length)
{
  if (k == 0) throw InvalidArgument("eigenvalue: mode index must be >= 1");
  if (!(length > 0.0)) throw InvalidArgument("eigenvalue: length must be positive");
  const double w = static_cast<double>(k) * std::numbers::pi / length;
  return w * w;
}

/// Coefficients of a function on [0, l] in the orthonormal basis
/// e_k(xi) = sqrt(2/l) sin(k pi xi / l), k = 1..n (stored at index k-1).
class SpectralField {
public:
  SpectralField(std::size_t n, double length) : coeffs_(n, 0.0), length_(length)
  {
    check_geometry();
  }

  SpectralField(std::vector<double> coeffs, double length)
      : coeffs_(std::move(coeffs)), length_(length)
  {
    check_geometry();
    for (double c : coeffs_)
      if (!std::isfinite(c)) throw InvalidArgument("SpectralField: non-finite coefficient");
  }

  /// Braced coefficients, so that {0.5} is one coefficient rather than a size.
  SpectralField(std::initializer_list<double> coeffs, double length)
      : SpectralField(std::vector<double>(coeffs), length)
  {
  }

  /// Unit field e_k.
  static SpectralField basis(std::size_t n, double length, std::size_t k)
  {
    if (k == 0 || k > n) throw InvalidArgument("SpectralField::basis: mode out of range");
    SpectralField f(n, length);
    f.coeffs_[k - 1] = 1.0;
    return f;
  }

  std::size_t size() const { return coeffs_.size(); }
  double length() const { return length_; }

  double& operator[](std::size_t i) { return coeffs_[i]; }
  double operator[](std::size_t i) const { return coeffs_[i]; }

  std::span<double> coeffs() { return coeffs_; }
  std::span<const double> coeffs() const { return coeffs_; }
  const std::vector<double>& vector() const { return coeffs_; }

  /// Eigenvalue of the mode stored at index i (mode k = i + 1).
  double alpha(std::size_t i) const { return eigenvalue(i + 1, length_); }

  bool same_geometry(const SpectralField& o) const
  {
    return size() == o.size() && length_ == o.length_;
  }

  void require_same_geometry(const SpectralField& o, const char* where) const
  {
    if (!same_geometry(o))
      throw InvalidArgument(std::string(where) + ": fields differ in mode count or length");
  }

  /// L2(0, l) norm; equals the Euclidean norm of the coefficients.
  double norm() const { return std::sqrt(dot(*this)); }

  double dot(const SpectralField& o) const
  {
    require_same_geometry(o, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += coeffs_[i] * o.coeffs_[i];
    return s;
  }

  SpectralField& operator+=(const SpectralField& o)
  {
    require_same_geometry(o, "operator+=");
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }

  SpectralField& operator-=(const SpectralField& o)
  {
    require_same_geometry(o, "operator-=");
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }

  SpectralField& operator*=(double s)
  {
    for (double& c : coeffs_) c *= s;
    return *this;
  }

  /// this += s * o
  SpectralField& axpy(double s, const SpectralField& o)
  {
    require_same_geometry(o, "axpy");
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] += s * o.coeffs_[i];
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

  bool operator==(const SpectralField& o) const
  {
    return length_ == o.length_ && coeffs_ == o.coeffs_;
  }

private:
  void check_geometry() const
  {
    if (coeffs_.empty()) throw InvalidArgument("SpectralField: mode count must be >= 1");
    if (!(length_ > 0.0)) throw InvalidArgument("SpectralField: length must be positive");
  }

  std::vector<double> coeffs_;
  double length_;
};

/// (1 - e^{-z}) / z, continuous at z = 0.
inline double phi1(double z)
{
  if (std::abs(z) < 1e-300) return 1.0;
  return -std::expm1(-z) / z;
}

/// S_t x: coefficient k multiplied by e^{-alpha_k t}.
inline SpectralField semigroup_apply(const SpectralField& x, double t)
{
  if (!(t >= 0.0)) throw InvalidArgument("semigroup_apply: t must be nonnegative");
  SpectralField out = x;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(-x.alpha(i) * t) * x[i];
  return out;
}

/// int_0^h e^{-alpha s / scale} ds = (1 - e^{-alpha h/scale}) scale / alpha.
///
/// scale = 1 for the slow and averaged systems, scale = epsilon for the fast one.
inline double exp_euler_weight(double alpha, double h, double scale)
{
  if (!(h > 0.0)) throw InvalidArgument("exp_euler_weight: step must be positive");
  if (!(scale > 0.0)) throw InvalidArgument("exp_euler_weight: scale must be positive");
  if (!(alpha > 0.0)) throw InvalidArgument("exp_euler_weight: eigenvalue must be positive");
  return h * phi1(alpha * h / scale);
}

inline double exp_euler_weight(std::size_t k, double length, double h, double scale)
{
  return exp_euler_weight(eigenvalue(k, length), h, scale);
}

/// || (-A)^gamma x || = sqrt(sum alpha_k^{2 gamma} x_k^2), gamma in [0, 1].
inline double fractional_norm(const SpectralField& x, double gamma)
{
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw InvalidArgument("fractional_norm: gamma must lie in [0, 1]");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = gamma == 0.0 ? 1.0 : std::pow(x.alpha(i), gamma);
    s += w * w * x[i] * x[i];
  }
  return std::sqrt(s);
}

/// Type-I discrete sine transform between n sine coefficients and the
/// interior collocation points xi_j = j l / (N + 1), j = 1..N.
///
/// Synthesis is the exact pointwise sum; analysis is the discrete inner
/// product, which inverts synthesis whenever n <= N.
class SineTransform {
public:
  SineTransform(std::size_t modes, std::size_t grid_size, double length)
      : n_(modes), grid_(grid_size), length_(length)
  {
    if (modes == 0) throw InvalidArgument("SineTransform: mode count must be >= 1");
    if (grid_size < modes)
      throw InvalidArgument("SineTransform: grid_size < mode count would alias");
    if (!(length > 0.0)) throw InvalidArgument("SineTransform: length must be positive");
    table_.resize(n_ * grid_);
    const double amp = std::sqrt(2.0 / length);
    const double np1 = static_cast<double>(grid_ + 1);
    for (std::size_t k = 1; k <= n_; ++k)
      for (std::size_t j = 1; j <= grid_; ++j)
        table_[(k - 1) * grid_ + (j - 1)] =
            amp * std::sin(std::numbers::pi * static_cast<double>(k * j % (2 * (grid_ + 1))) / np1);
  }

  std::size_t modes() const { return n_; }
  std::size_t grid_size() const { return grid_; }
  double length() const { return length_; }

  double node(std::size_t j) const
  {
    return static_cast<double>(j + 1) * length_ / static_cast<double>(grid_ + 1);
  }

  std::vector<double> synthesis(const SpectralField& x) const
  {
    check(x);
    std::vector<double> u(grid_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      const double c = x[k];
      if (c == 0.0) continue;
      const double* row = &table_[k * grid_];
      for (std::size_t j = 0; j < grid_; ++j) u[j] += c * row[j];
    }
    return u;
  }

  SpectralField analysis(std::span<const double> samples) const
  {
    if (samples.size() != grid_)
      throw InvalidArgument("SineTransform::analysis: sample count does not match grid");
    const double w = length_ / static_cast<double>(grid_ + 1);
    SpectralField out(n_, length_);
    for (std::size_t k = 0; k < n_; ++k) {
      const double* row = &table_[k * grid_];
      double s = 0.0;
      for (std::size_t j = 0; j < grid_; ++j) s += row[j] * samples[j];
      out[k] = w * s;
    }
    return out;
  }

private:
  void check(const SpectralField& x) const
  {
    if (x.size() != n_ || x.length() != length_)
      throw InvalidArgument("SineTransform: field geometry does not match transform");
  }

  std::size_t n_;
  std::size_t grid_;
  double length_;
  std::vector<double> table_;
};

inline std::vector<double> sine_synthesis(const SpectralField& x, std::size_t grid_size)
{
  return SineTransform(x.size(), grid_size, x.length()).synthesis(x);
}

inline SpectralField sine_analysis(std::span<const double> samples, std::size_t modes,
                                   double length)
{
  return SineTransform(modes, samples.size(), length).analysis(samples);
}

}  // namespace avgspde
