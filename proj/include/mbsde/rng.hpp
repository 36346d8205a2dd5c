#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mbsde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Stateless: the same (key, counter) always yields the same block, so each
/// path can address its own substream without any shared state.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  [[nodiscard]] Block operator()(Block ctr) const {
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  std::array<std::uint32_t, 2> key_;
};

/// Substream identifiers. Increments and bridge-correction uniforms never
/// share counters.
enum class Stream : std::uint32_t { Increments = 0, Bridge = 1 };

/// Uniform in the open interval (0, 1) from 53 random bits.
inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Addresses the random numbers of one path. Counter layout:
/// {index, path_lo, path_hi, stream}.
class PathStream {
 public:
  PathStream(const Philox4x32& gen, std::uint64_t path) : gen_(&gen), path_(path) {}

  /// k-th standard normal of the increment stream (Box–Muller, two per block).
  [[nodiscard]] double normal(std::uint64_t k) {
    const std::uint64_t blk = k >> 1;
    if (blk != cached_block_) {
      const auto b = draw(Stream::Increments, blk);
      const double u1 = to_unit_open(b[0], b[1]);
      const double u2 = to_unit_open(b[2], b[3]);
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double phase = 2.0 * std::numbers::pi * u2;
      cached_pair_ = {r * std::cos(phase), r * std::sin(phase)};
      cached_block_ = blk;
    }
    return cached_pair_[k & 1u];
  }

  /// Uniform for the bridge test of interval k; `sub` separates repeated
  /// tests inside one interval (one per barrier segment).
  [[nodiscard]] double bridge_uniform(std::uint64_t k, std::uint32_t sub) const {
    const auto b = draw(Stream::Bridge, (k << 4) | (sub & 0xFu));
    return to_unit_open(b[0], b[1]);
  }

  [[nodiscard]] std::uint64_t path() const { return path_; }

 private:
  [[nodiscard]] Philox4x32::Block draw(Stream s, std::uint64_t index) const {
    // index uses 32 bits of counter word 0 plus the top of word 3.
    const auto hi = static_cast<std::uint32_t>(index >> 32);
    return (*gen_)({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(path_),
                    static_cast<std::uint32_t>(path_ >> 32),
                    (static_cast<std::uint32_t>(s) & 0xFFu) | (hi << 8)});
  }

  const Philox4x32* gen_;
  std::uint64_t path_;
  std::uint64_t cached_block_ = ~std::uint64_t{0};
  std::array<double, 2> cached_pair_{};
};

}  // namespace mbsde
