#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "rmlp/special_functions.hpp"

namespace rmlp {

using u64 = std::uint64_t;
__extension__ using u128 = unsigned __int128;

/// Philox4x64-10 block function (Salmon et al. 2011).
inline std::array<u64, 4> philox4x64(std::array<u64, 4> ctr, std::array<u64, 2> key) {
  constexpr u64 m0 = 0xD2E7470EE14C6C93ULL;
  constexpr u64 m1 = 0xCA5A826395121157ULL;
  constexpr u64 w0 = 0x9E3779B97F4A7C15ULL;
  constexpr u64 w1 = 0xBB67AE8584CAA73BULL;
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += w0;
      key[1] += w1;
    }
    const u128 p0 = static_cast<u128>(m0) * ctr[0];
    const u128 p1 = static_cast<u128>(m1) * ctr[2];
    const u64 hi0 = static_cast<u64>(p0 >> 64), lo0 = static_cast<u64>(p0);
    const u64 hi1 = static_cast<u64>(p1 >> 64), lo1 = static_cast<u64>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// 128-bit stream key. A key stands for an index tuple theta; child() appends
/// three integers to the tuple by hashing them into a fresh key.
struct RngKey {
  u64 k0 = 0;
  u64 k1 = 0;

  static RngKey root(u64 seed, u64 replicate = 0);
  RngKey child(std::int64_t a, std::int64_t b, std::int64_t c) const;

  friend bool operator==(const RngKey&, const RngKey&) = default;
};

inline constexpr u64 kDeriveTag = 0x6b65792d64657276ULL;
inline constexpr u64 kRootTag = 0x726f6f742d6b6579ULL;

inline RngKey RngKey::root(u64 seed, u64 replicate) {
  const auto out = philox4x64({seed, replicate, 0, kRootTag},
                              {0x243F6A8885A308D3ULL, 0x13198A2E03707344ULL});
  return {out[0], out[1]};
}

inline RngKey RngKey::child(std::int64_t a, std::int64_t b, std::int64_t c) const {
  const auto out = philox4x64(
      {static_cast<u64>(a), static_cast<u64>(b), static_cast<u64>(c), kDeriveTag}, {k0, k1});
  return {out[0], out[1]};
}

/// Stream addressed by (key, lane). The lane's generator state is the Philox
/// block at counter (lane, 0, 0, 0) under `key`; draws then follow the
/// xoshiro256++ sequence from that state. Lanes give independent
/// sub-streams of one key without extra key derivations.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(RngKey key, u64 lane = 0) : key_(key), lane_(lane) {
    s_ = philox4x64({lane, 0, 0, 0}, {key.k0, key.k1});
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  u64 next_u64() {
    const u64 out = rotl(s_[0] + s_[3], 23) + s_[0];
    const u64 t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    ++count_;
    return out;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_quantile(uniform()); }

  double exponential() { return -std::log(uniform()); }

  RngKey key() const { return key_; }
  u64 lane() const { return lane_; }
  /// Number of 64-bit words consumed so far.
  u64 counter() const { return count_; }

 private:
  static u64 rotl(u64 x, int k) { return (x << k) | (x >> (64 - k)); }

  RngKey key_{};
  u64 lane_ = 0;
  std::array<u64, 4> s_{1, 0, 0, 0};
  u64 count_ = 0;
};

}  // namespace rmlp
