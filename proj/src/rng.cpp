#include "dropcap/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dropcap {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; full avalanche on 64 bits.
std::uint64_t mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
  key_ = mix(mix(seed + kGolden) ^ mix(stream + 0x7F4A7C159E3779B9ULL));
}

SeededRng SeededRng::derived(std::uint64_t substream) const {
  return SeededRng(seed_, mix(stream_ * kGolden + substream + 1));
}

std::uint64_t SeededRng::next_u64() {
  ++counter_;
  return mix(key_ + counter_ * kGolden);
}

double SeededRng::uniform01() {
  // 53-bit mantissa, shifted off zero so log() is safe.
  return (static_cast<double>(next_u64() >> 11) + 0.5) *
         (1.0 / 9007199254740992.0);
}

double SeededRng::gaussian() {
  double u1 = uniform01();
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

bool SeededRng::bernoulli(double p_true) {
  if (p_true < 0.0 || p_true > 1.0)
    throw std::invalid_argument("bernoulli: probability outside [0,1]");
  // uniform01 lies strictly inside (0,1), so p=0 is never hit and p=1 always is
  return uniform01() < p_true;
}

int SeededRng::rademacher() { return (next_u64() >> 63) ? 1 : -1; }

int SeededRng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  // multiply-shift; bias is < 2^-64 * n, negligible for desk-scale n
  unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<int>(wide >> 64);
}

}  // namespace dropcap
