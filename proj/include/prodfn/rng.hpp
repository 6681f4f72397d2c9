#pragma once

#include <cstdint>
#include <random>

namespace prodfn {

// SplitMix64 finalizer; used to key independent streams off (seed, stream id).
std::uint64_t mix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

// A deterministic normal stream keyed by (seed, stream, substream). Streams with
// distinct keys are statistically independent and do not depend on which thread
// draws from them.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0)
      : engine_(derive_seed(seed, stream, substream)) {}

  double operator()() { return normal_(engine_); }
  double operator()(double mean, double variance);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace prodfn
