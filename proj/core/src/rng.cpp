#include "ergosim/rng.hpp"

namespace ergosim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_stream_id(std::uint64_t purpose, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(purpose) ^ a) ^ b);
}

}  // namespace ergosim
