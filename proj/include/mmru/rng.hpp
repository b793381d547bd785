#pragma once

#include <cstdint>
#include <random>

namespace mmru {

// Replication-addressable random stream.
//
// The engine is a 64-bit Mersenne Twister whose state is expanded from
// (seed, stream_id) through std::seed_seq. Both the engine and seed_seq are
// fully specified by the standard, so a given pair reproduces the same
// sequence on every conforming implementation. Distinct stream ids give
// unrelated 19937-bit states; overlap between streams is negligible for the
// sequence lengths used here.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x6d6d7275u};
    engine_.seed(seq);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits. std::uniform_real_distribution is
  // implementation-defined, so it is avoided for reproducibility.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace mmru
