#include "ionramsey/rng.hpp"

#include <cmath>

#include "ionramsey/numerics.hpp"

namespace ionramsey {

namespace {

constexpr std::uint64_t philox_m0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t philox_m1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t philox_w0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t philox_w1 = 0xBB67AE8584CAA73BULL;

inline std::uint64_t mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t* hi) noexcept {
  unsigned __int128 product = static_cast<unsigned __int128>(a) * b;
  *hi = static_cast<std::uint64_t>(product >> 64);
  return static_cast<std::uint64_t>(product);
}

inline std::array<std::uint64_t, 4> philox_round(const std::array<std::uint64_t, 4>& ctr,
                                                 const std::array<std::uint64_t, 2>& key) noexcept {
  std::uint64_t hi0, hi1;
  const std::uint64_t lo0 = mulhilo(philox_m0, ctr[0], &hi0);
  const std::uint64_t lo1 = mulhilo(philox_m1, ctr[2], &hi1);
  return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline std::uint64_t splitmix(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::array<std::uint64_t, 4> Philox::block(const std::array<std::uint64_t, 4>& counter,
                                           const std::array<std::uint64_t, 2>& key) noexcept {
  std::array<std::uint64_t, 4> ctr = counter;
  std::array<std::uint64_t, 2> k = key;
  ctr = philox_round(ctr, k);
  for (int round = 1; round < 10; ++round) {
    k[0] += philox_w0;
    k[1] += philox_w1;
    ctr = philox_round(ctr, k);
  }
  return ctr;
}

Philox::Philox(std::uint64_t key, std::uint64_t stream) noexcept
    : counter_{0, 0, 0, 0},
      key_{key, stream},
      buffer_{},
      index_(4),
      have_normal_(false),
      cached_normal_(0.0) {}

void Philox::refill() noexcept {
  buffer_ = block(counter_, key_);
  index_ = 0;
  // 256-bit little-endian counter increment.
  for (int i = 0; i < 4; ++i) {
    if (++counter_[i] != 0) break;
  }
}

std::uint64_t Philox::next_u64() noexcept {
  if (index_ >= 4) refill();
  return buffer_[index_++];
}

double Philox::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox::normal() noexcept {
  if (have_normal_) {
    have_normal_ = false;
    return cached_normal_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * pi * u2;
  cached_normal_ = r * std::sin(a);
  have_normal_ = true;
  return r * std::cos(a);
}

double Philox::exponential(double rate) noexcept {
  return -std::log(1.0 - uniform()) / rate;
}

bool Philox::bernoulli(double p) noexcept { return uniform() < p; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) noexcept {
  std::uint64_t h = splitmix(seed ^ 0x6A09E667F3BCC909ULL);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  h = splitmix(h ^ c);
  return h;
}

}  // namespace ionramsey
