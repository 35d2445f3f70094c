#pragma once

#include <cmath>
#include <cstdint>

namespace spancca {

/// Purpose tag baked into a stream's key so that distinct consumers of the
/// same user seed never share a sequence. Values are part of the on-disk
/// reproducibility contract: changing them changes every seeded result.
enum class RngDomain : std::uint64_t {
  sketch = 1,    // Gaussian test matrix of the randomized SVD
  rounds = 2,    // per-round sphere samples, keyed by round index
  residual = 3,  // start vector of the residual power iteration
  generic = 4,
};

/// Counter-based random stream: the state is a pure function of
/// (seed, domain, index), so any round of a Monte-Carlo search can be
/// regenerated independently of thread scheduling or worker count.
///
/// The generator is SplitMix64 over a hashed key. Statistical quality is
/// ample for Monte-Carlo sampling; it is not a cryptographic generator.
class RngStream {
 public:
  RngStream(std::uint64_t seed, RngDomain domain, std::uint64_t index) noexcept {
    state_ = mix(seed + kGamma * (static_cast<std::uint64_t>(domain) + 1));
    state_ = mix(state_ ^ (index + kGamma));
  }

  std::uint64_t next_u64() noexcept {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform double in the open interval (0, 1).
  double next_unit() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via a 128-layer ziggurat (exact, rejection-based; the
  /// rare off-layer cases fall back to the analytic wedge and tail sampling).
  double next_normal() noexcept {
    const Ziggurat& z = ziggurat();
    for (;;) {
      const std::uint64_t u = next_u64();
      const std::int64_t h = static_cast<std::int64_t>(u);
      const unsigned layer = static_cast<unsigned>(u & 127u);
      const double x = static_cast<double>(h) * z.w[layer];
      const std::uint64_t mag = h >= 0 ? u : ~u + 1;  // |h| without overflow
      if (mag < z.k[layer]) return x;  // inside the layer rectangle
      if (layer == 0) {
        // tail beyond R
        double xx, yy;
        do {
          xx = -std::log(next_unit()) / Ziggurat::kR;
          yy = -std::log(next_unit());
        } while (yy + yy < xx * xx);
        return h > 0 ? Ziggurat::kR + xx : -(Ziggurat::kR + xx);
      }
      if (z.f[layer] + next_unit() * (z.f[layer - 1] - z.f[layer]) <
          std::exp(-0.5 * x * x)) {
        return x;  // wedge acceptance
      }
    }
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  struct Ziggurat {
    static constexpr double kR = 3.442619855899;        // rightmost layer edge
    static constexpr double kV = 9.91256303526217e-3;   // layer area
    double w[128];
    double f[128];
    std::uint64_t k[128];

    Ziggurat() noexcept {
      const double m = 9223372036854775808.0;  // 2^63
      double dn = kR, tn = kR;
      const double q = kV / std::exp(-0.5 * dn * dn);
      k[0] = static_cast<std::uint64_t>((dn / q) * m);
      k[1] = 0;
      w[0] = q / m;
      w[127] = dn / m;
      f[0] = 1.0;
      f[127] = std::exp(-0.5 * dn * dn);
      for (int i = 126; i >= 1; --i) {
        dn = std::sqrt(-2.0 * std::log(kV / dn + std::exp(-0.5 * dn * dn)));
        k[i + 1] = static_cast<std::uint64_t>((dn / tn) * m);
        tn = dn;
        f[i] = std::exp(-0.5 * dn * dn);
        w[i] = dn / m;
      }
    }
  };

  static const Ziggurat& ziggurat() noexcept {
    static const Ziggurat tables;
    return tables;
  }

  static std::uint64_t mix(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
};

}  // namespace spancca
