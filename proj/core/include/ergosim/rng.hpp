#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace ergosim {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Pure function of (key, counter); used to give every replicate its own
/// reproducible stream regardless of scheduling order.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return ctr;
  }
};

/// First argument of derive_stream_id for each consumer of randomness.
namespace stream_purpose {
inline constexpr std::uint64_t replicate = 1;
inline constexpr std::uint64_t autocorrelation = 2;
inline constexpr std::uint64_t reference = 3;
inline constexpr std::uint64_t synthetic = 4;
}  // namespace stream_purpose

/// Mixes an arbitrary tuple of integers into a 64-bit stream identifier.
std::uint64_t derive_stream_id(std::uint64_t purpose, std::uint64_t a, std::uint64_t b = 0);

/// A single reproducible random stream: key = master seed, upper counter
/// words = stream id, lower counter words = block index.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(master_seed),
             static_cast<std::uint32_t>(master_seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream_id),
                static_cast<std::uint32_t>(stream_id >> 32)} {}

  std::uint64_t next_u64() {
    if (pos_ >= 2) refill();
    const std::uint64_t v = (std::uint64_t{buf_[2 * pos_]} << 32) | buf_[2 * pos_ + 1];
    ++pos_;
    return v;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; values are produced in pairs.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t blocks_used() const { return block_; }

 private:
  void refill() {
    buf_ = Philox4x32::generate(
        {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
         stream_[0], stream_[1]},
        key_);
    ++block_;
    pos_ = 0;
  }

  Philox4x32::Key key_;
  std::array<std::uint32_t, 2> stream_;
  Philox4x32::Counter buf_{};
  std::uint64_t block_ = 0;
  int pos_ = 2;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ergosim
