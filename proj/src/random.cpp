#include "rcn/random.hpp"

#include <cmath>

namespace rcn {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = ~0ull - ~0ull % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix64(state_ ^ mix64(stream + 0x9E3779B97F4A7C15ull)));
}

Rng Rng::split(const std::string& label) const { return split(fnv1a(label)); }

}  // namespace rcn
