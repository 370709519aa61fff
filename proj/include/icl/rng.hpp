#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace icl {

// ================================================================
// Splittable counter-based random streams.
//
// A stream is identified by (master_seed, stream_index); the same pair
// always produces the same draw sequence, regardless of how many other
// streams exist or which thread consumes it. Internally each stream is
// a SplitMix64 walk whose start state is a hash of the pair, so streams
// can be created in O(1) without coordination.
// ================================================================

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Order-free combine for deriving sub-seeds (per sweep row, per SGD step).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed + kGolden * (index + 1));
}

namespace detail {

// Ziggurat tables for the standard normal (128 layers, Marsaglia & Tsang).
struct ZigguratTables {
  std::array<std::uint32_t, 128> kn;
  std::array<double, 128> wn;
  std::array<double, 128> fn;

  ZigguratTables() {
    const double m1 = 2147483648.0;  // 2^31
    double dn = 3.442619855899, tn = dn;
    const double vn = 9.91256303526217e-3;

    double q = vn / std::exp(-0.5 * dn * dn);
    kn[0] = static_cast<std::uint32_t>((dn / q) * m1);
    kn[1] = 0;
    wn[0] = q / m1;
    wn[127] = dn / m1;
    fn[0] = 1.0;
    fn[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
      kn[i + 1] = static_cast<std::uint32_t>((dn / tn) * m1);
      tn = dn;
      fn[i] = std::exp(-0.5 * dn * dn);
      wn[i] = dn / m1;
    }
  }
};

inline const ZigguratTables& ziggurat() {
  static const ZigguratTables tables;
  return tables;
}

}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
      : master_seed_(master_seed),
        stream_index_(stream_index),
        state_(mix64(master_seed + kGolden) ^
               mix64(stream_index ^ 0xD2B74407B1CE6E93ull)) {}

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_index() const { return stream_index_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += kGolden);
    return mix64(z);
  }

  // Uniform on (0,1); never returns exactly 0.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the 128-layer ziggurat. The fast path costs one
  // 64-bit draw, one table lookup and one multiply.
  double normal() {
    const auto& t = detail::ziggurat();
    for (;;) {
      const std::uint64_t bits = next_u64();
      const auto hz = static_cast<std::int32_t>(bits & 0xFFFFFFFFu);
      const unsigned iz = static_cast<unsigned>(bits >> 32) & 127u;
      const auto mag =
          static_cast<std::uint32_t>(hz < 0 ? -static_cast<std::int64_t>(hz)
                                            : static_cast<std::int64_t>(hz));
      if (mag < t.kn[iz]) return hz * t.wn[iz];

      if (iz == 0) {
        // Tail beyond r = 3.4426...: Marsaglia's exponential wedge.
        const double r = 3.442619855899;
        double x, y;
        do {
          x = -std::log(uniform()) / r;
          y = -std::log(uniform());
        } while (y + y < x * x);
        return hz < 0 ? -(r + x) : (r + x);
      }

      const double x = hz * t.wn[iz];
      if (t.fn[iz] + uniform() * (t.fn[iz - 1] - t.fn[iz]) <
          std::exp(-0.5 * x * x)) {
        return x;
      }
      // else: fall through and redraw
    }
  }

  void fill_normal(double* dst, long n) {
    for (long i = 0; i < n; ++i) dst[i] = normal();
  }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  std::uint64_t state_;
};

}  // namespace icl
