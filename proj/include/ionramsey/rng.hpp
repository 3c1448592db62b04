#pragma once

#include <array>
#include <cstdint>

namespace ionramsey {

// Philox 4x64 with 10 rounds: a counter-based generator whose output is a
// pure function of (key, counter). Streams for shots, blocks and trajectories
// are derived from a master seed with derive_seed, so any unit of work can be
// recomputed in isolation and results never depend on scheduling order.
class Philox {
 public:
  explicit Philox(std::uint64_t key, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;

  // Uniform on [0, 1) with 53 significant bits.
  double uniform() noexcept;

  // Standard normal via Box-Muller (pairs cached per instance).
  double normal() noexcept;

  // Exponential waiting time with the given rate (> 0).
  double exponential(double rate) noexcept;

  // True with probability p.
  bool bernoulli(double p) noexcept;

  // The raw 4-lane block function, exposed for known-answer tests.
  static std::array<std::uint64_t, 4> block(const std::array<std::uint64_t, 4>& counter,
                                            const std::array<std::uint64_t, 2>& key) noexcept;

 private:
  void refill() noexcept;

  std::array<std::uint64_t, 4> counter_;
  std::array<std::uint64_t, 2> key_;
  std::array<std::uint64_t, 4> buffer_;
  int index_;
  bool have_normal_;
  double cached_normal_;
};

// SplitMix64-style hash combining a seed with up to three stream labels.
// Used to hand every shot / block / trajectory its own Philox key.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0) noexcept;

}  // namespace ionramsey
