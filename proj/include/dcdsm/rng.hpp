#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "dcdsm/tensor.hpp"

namespace dcdsm {

/// Counter-based Philox4x32-10 stream.
///
/// The output is a pure function of (seed, stream_id, counter), so streams can
/// be forked by name or index without sharing state. Every draw consumes one
/// 128-bit block; Gaussian variates come from Box-Muller on the two 53-bit
/// uniforms of a block.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0)
      : seed_(seed), stream_id_(stream_id), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Independent child stream; the parent's counter is not consulted.
  RngStream child(std::uint64_t index) const;
  RngStream child(std::string_view name) const;

  std::array<std::uint32_t, 4> next_block();
  /// Uniform in the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  /// Fills `count` standard normals, two per block.
  void fill_normal(std::span<double> out);

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
};

/// i.i.d. standard normal tensor.
Tensor randn(RngStream& rng, const Shape& shape);
/// i.i.d. uniform tensor on (lo, hi).
Tensor rand_uniform(RngStream& rng, const Shape& shape, double lo, double hi);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dcdsm
