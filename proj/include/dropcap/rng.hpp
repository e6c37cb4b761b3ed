#pragma once

#include <cstdint>

namespace dropcap {

// Counter-based pseudo-random generator.  Draw k is a hash of
// (seed, stream, k), so a stream can be replayed from scratch and child
// streams for trial t can be derived without consuming parent state.
// Monte-Carlo estimators key one child stream per trial, which makes their
// output independent of evaluation order.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  // Independent child stream; deterministic in (seed, stream, substream).
  SeededRng derived(std::uint64_t substream) const;

  std::uint64_t next_u64();
  double uniform01();          // open interval (0, 1)
  double gaussian();           // standard normal, Box-Muller
  bool bernoulli(double p_true);
  int rademacher();            // +1 or -1, fair
  int uniform_int(int n);      // uniform on [0, n)

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dropcap
