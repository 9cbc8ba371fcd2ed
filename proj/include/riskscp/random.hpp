#pragma once

#include <array>
#include <cstdint>

namespace riskscp {

/// Seed plus stream id. Optimization and validation draws use different streams
/// of the same seed so their counter ranges never overlap.
struct RandomSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  friend bool operator==(const RandomSeed&, const RandomSeed&) = default;
};

inline constexpr std::uint64_t kOptimizationStream = 0;
inline constexpr std::uint64_t kValidationStream = 1;

/// Philox4x32-10 block function. Stateless: the output is
/// a pure function of (counter, key).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter counter, Key key) noexcept;
};

/// What a draw is used for. Part of the counter, so sources never share draws.
enum class DrawSource : std::uint32_t {
  kInitialState = 0,
  kParameters = 1,
  kBrownian = 2,
  kRandomField = 3,
};

/// Addressable random draws: every value is identified by
/// (source, scenario, step, index) and can be generated in any order.
///
/// Counter layout: word 0 = index / 2, word 1 = scenario, word 2 = source in the
/// top 4 bits and step in the low 28 bits, word 3 = low half of the stream id.
/// The key is the seed with the high half of the stream id folded into word 1.
class CounterRng {
 public:
  static constexpr std::uint32_t kMaxStep = (1u << 28) - 1;

  explicit CounterRng(RandomSeed seed) noexcept;

  /// Uniform draw in the open interval (0, 1) with 53 random bits.
  double uniform(DrawSource source, std::uint32_t scenario, std::uint32_t step,
                 std::uint32_t index) const;

  /// Standard normal draw by inverse-CDF transform of `uniform`.
  double normal(DrawSource source, std::uint32_t scenario, std::uint32_t step,
                std::uint32_t index) const;

  RandomSeed seed() const noexcept { return seed_; }

 private:
  RandomSeed seed_;
  Philox4x32::Key key_;
};

}  // namespace riskscp
