#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace lail {

/// 64-bit FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

/// SplitMix64 finalizer; a bijective avalanche mix of one word.
std::uint64_t mix64(std::uint64_t x);

/// Lowercase 16-digit hex rendering of a 64-bit value.
std::string hex64(std::uint64_t value);

/// Seed for a named substream of a top-level seed ("train", "select.random", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

/// Counter-based random stream: the i-th draw is a pure function of (key, i).
///
/// Streams are cheap to construct, so callers key one per unit of work
/// (e.g. seed + epoch + anchor id) and results never depend on the order in
/// which units are processed.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : key_(mix64(key)) {}

  /// Key built from a seed and any number of integer or string parts.
  static RandomStream keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

  std::uint64_t next();

  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1).
  double uniform();

  /// Standard normal draw (Box-Muller, one value per two uniforms).
  double normal();

  /// `count` distinct indices drawn uniformly from [0, n) in draw order.
  /// Requires count <= n.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

  /// Uniform random permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lail
