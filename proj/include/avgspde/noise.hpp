#pragma once

// Counter-based Gaussian streams for the two independent Q-Wiener processes
// and exact-variance increments of the stochastic convolution.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "avgspde/errors.hpp"
#include "avgspde/models.hpp"
#include "avgspde/spectral.hpp"

namespace avgspde {

enum class ProcessTag : std::uint32_t { W1 = 1, W2 = 2, AUX = 3 };

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state)
{
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi)
{
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  return static_cast<std::uint32_t>(p);
}

/// Philox4x32-10 (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key)
{
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, hi1;
    const auto lo0 = static_cast<std::uint32_t>(mulhilo32(M0, ctr[0], hi0));
    const auto lo1 = static_cast<std::uint32_t>(mulhilo32(M1, ctr[2], hi1));
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

/// Derive a sub-seed for a named purpose so that different experiment stages
/// never share streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose)
{
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char ch : purpose) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  std::uint64_t s = seed ^ h;
  return splitmix64(s);
}

}  // namespace detail

using detail::derive_seed;

/// Reproducible stream of standard normals identified by
/// (master_seed, sample_index, tag). Normal number i is a pure function of the
/// identifying triple and i; replaying a triple replays the sequence exactly.
class NoiseStream {
public:
  NoiseStream(std::uint64_t master_seed, std::uint64_t sample_index, ProcessTag tag)
      : seed_(master_seed), index_(sample_index), tag_(tag)
  {
    // 128-bit identity hash: 64 bits of Philox key, 64 bits of counter prefix.
    std::uint64_t s = master_seed;
    const std::uint64_t h0 = detail::splitmix64(s);
    s ^= sample_index * 0xD1B54A32D192ED03ULL;
    const std::uint64_t h1 = detail::splitmix64(s);
    s ^= static_cast<std::uint64_t>(tag) * 0x8CB92BA72F3D8DD7ULL;
    const std::uint64_t h2 = detail::splitmix64(s);
    const std::uint64_t k = h0 ^ h2;
    const std::uint64_t c = h1 + h2;
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    prefix_ = {static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  }

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t sample_index() const { return index_; }
  ProcessTag tag() const { return tag_; }

  /// Number of normals drawn so far.
  std::uint64_t draws() const { return count_; }

  /// Normal number i of this stream, independent of stream position.
  double normal_at(std::uint64_t i) const
  {
    const std::uint64_t block = i >> 1;
    if (block != cached_block_) {
      const auto r = detail::philox4x32({static_cast<std::uint32_t>(block),
                                         static_cast<std::uint32_t>(block >> 32), prefix_[0],
                                         prefix_[1]},
                                        key_);
      const std::uint64_t a = (static_cast<std::uint64_t>(r[1]) << 32) | r[0];
      const std::uint64_t b = (static_cast<std::uint64_t>(r[3]) << 32) | r[2];
      constexpr double two53 = 1.0 / 9007199254740992.0;
      const double u1 = (static_cast<double>(a >> 11) + 1.0) * two53;  // (0, 1]
      const double u2 = static_cast<double>(b >> 11) * two53;          // [0, 1)
      const double rad = std::sqrt(-2.0 * std::log(u1));
      const double theta = 2.0 * std::numbers::pi * u2;
      cached_[0] = rad * std::cos(theta);
      cached_[1] = rad * std::sin(theta);
      cached_block_ = block;
    }
    return cached_[i & 1];
  }

  double normal() { return normal_at(count_++); }

private:
  std::uint64_t seed_;
  std::uint64_t index_;
  ProcessTag tag_;
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 2> prefix_{};
  std::uint64_t count_ = 0;
  mutable std::uint64_t cached_block_ = ~std::uint64_t{0};
  mutable std::array<double, 2> cached_{};
};

/// Increment over a step h of W_t = sum sqrt(lambda_k) B_{t,k} e_k.
/// Consumes exactly n draws.
inline SpectralField wiener_increment(NoiseStream& stream, const CovarianceSpec& q, double h,
                                      std::size_t n, double length)
{
  if (!(h > 0.0)) throw InvalidArgument("wiener_increment: step must be positive");
  SpectralField dw(n, length);
  for (std::size_t k = 1; k <= n; ++k) dw[k - 1] = std::sqrt(q.lambda(k) * h) * stream.normal();
  return dw;
}

enum class ConvolutionKind {
  Slow,  ///< sigma int S_{(t-s)/scale} dW_s
  Fast,  ///< sigma/sqrt(scale) int S_{(t-s)/scale} dW_s (noise of the epsilon-system)
};

/// Variance of one mode of the stochastic convolution over a step h.
/// Slow: sigma^2 lambda scale (1 - e^{-2 alpha h/scale}) / (2 alpha); Fast drops the
/// leading scale factor.
inline double stoch_conv_variance(double alpha, double lambda, double sigma, double h,
                                  double scale, ConvolutionKind kind)
{
  if (!(h > 0.0)) throw InvalidArgument("stoch_conv_variance: step must be positive");
  if (!(scale > 0.0)) throw InvalidArgument("stoch_conv_variance: scale must be positive");
  const double z = 2.0 * alpha * h / scale;
  // scale (1 - e^{-z}) / (2 alpha) = h (1 - e^{-z}) / z
  double v = sigma * sigma * lambda * h * phi1(z);
  if (kind == ConvolutionKind::Fast) v /= scale;
  return v;
}

/// Per-mode standard deviations of the stochastic-convolution increment.
inline std::vector<double> stoch_conv_stddevs(const CovarianceSpec& q, double sigma, double h,
                                              double scale, ConvolutionKind kind, std::size_t n,
                                              double length)
{
  std::vector<double> sd(n);
  for (std::size_t k = 1; k <= n; ++k)
    sd[k - 1] =
        std::sqrt(stoch_conv_variance(eigenvalue(k, length), q.lambda(k), sigma, h, scale, kind));
  return sd;
}

/// One-step increment of the stochastic convolution with exact per-mode
/// variance. Consumes exactly n draws, also for zero variances.
inline SpectralField stoch_conv_increment(NoiseStream& stream, const CovarianceSpec& q,
                                          double sigma, double h, double scale,
                                          ConvolutionKind kind, std::size_t n, double length)
{
  const auto sd = stoch_conv_stddevs(q, sigma, h, scale, kind, n, length);
  SpectralField out(n, length);
  for (std::size_t i = 0; i < n; ++i) out[i] = sd[i] * stream.normal();
  return out;
}

}  // namespace avgspde
