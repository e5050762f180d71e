// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

namespace fedld {

/// Counter-based random stream (Philox4x32-10).
///
/// A stream is identified by (seed, stream_id). Distinct stream ids occupy
/// disjoint counter ranges under the same seed, so streams never overlap and
/// (seed, stream_id, consumption history) fully determines every output.
/// Copying a stream replays it; the chain simulator relies on this for
/// bit-exact reproducibility.
class RandomStream {
 public:
  RandomStream() : RandomStream(0, 0) {}
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  /// Standard normal via Box-Muller; the second draw of each pair is cached.
  double gaussian();

  /// Uniform over {0, ..., n-1}; n >= 1.
  int uniform_index(int n);

  /// Beta(a, b) draw by inverse CDF (deterministic, one uniform consumed).
  double beta(double a, double b);

  /// Stream for an independent sub-task (chain replica, shard fit). Same
  /// seed, distinct id; ids are allocated by the caller's convention.
  RandomStream substream(std::uint64_t id) const {
    return RandomStream(seed_, id);
  }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;  // exhausted; refill on first draw
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

}  // namespace fedld
