#include "dcdsm/rng.hpp"

#include <cmath>
#include <numbers>

#include "dcdsm/error.hpp"

namespace dcdsm {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

RngStream RngStream::child(std::uint64_t index) const {
  return RngStream(seed_, splitmix64(splitmix64(stream_id_) ^ (index * 0xD6E8FEB86659FD93ull + 1)));
}

RngStream RngStream::child(std::string_view name) const { return child(fnv1a64(name)); }

std::array<std::uint32_t, 4> RngStream::next_block() {
  const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                         static_cast<std::uint32_t>(stream_id_),
                                         static_cast<std::uint32_t>(stream_id_ >> 32)};
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  ++counter_;
  return philox4x32_10(ctr, key);
}

double RngStream::uniform() {
  const auto b = next_block();
  return to_open_unit(b[0], b[1]);
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_int: n must be positive");
  // Lemire-style rejection on 64-bit draws keeps the result exactly uniform.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n + 1) % n;
  for (;;) {
    const auto b = next_block();
    const std::uint64_t x = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
    if (x <= limit) return x % n;
  }
}

double RngStream::normal() {
  const auto b = next_block();
  const double u1 = to_open_unit(b[0], b[1]);
  const double u2 = to_open_unit(b[2], b[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void RngStream::fill_normal(std::span<double> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    const auto b = next_block();
    const double u1 = to_open_unit(b[0], b[1]);
    const double u2 = to_open_unit(b[2], b[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    out[i++] = r * std::cos(th);
    if (i < out.size()) out[i++] = r * std::sin(th);
  }
}

Tensor randn(RngStream& rng, const Shape& shape) {
  Tensor t(shape);
  rng.fill_normal(t.data());
  return t;
}

Tensor rand_uniform(RngStream& rng, const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace dcdsm
