#include "riskscp/random.hpp"

#include <stdexcept>

#include "riskscp/normal.hpp"

namespace riskscp {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

CounterRng::CounterRng(RandomSeed seed) noexcept
    : seed_(seed),
      key_{static_cast<std::uint32_t>(seed.seed),
           static_cast<std::uint32_t>(seed.seed >> 32) ^
               static_cast<std::uint32_t>(seed.stream_id >> 32)} {}

double CounterRng::uniform(DrawSource source, std::uint32_t scenario, std::uint32_t step,
                           std::uint32_t index) const {
  if (step > kMaxStep) throw std::out_of_range("CounterRng: step index exceeds 28 bits");
  const Philox4x32::Counter ctr{
      index / 2, scenario, (static_cast<std::uint32_t>(source) << 28) | step,
      static_cast<std::uint32_t>(seed_.stream_id)};
  const auto out = Philox4x32::generate(ctr, key_);
  const std::size_t half = 2 * (index % 2);
  const std::uint64_t bits =
      ((static_cast<std::uint64_t>(out[half]) << 32) | out[half + 1]) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(DrawSource source, std::uint32_t scenario, std::uint32_t step,
                          std::uint32_t index) const {
  return normal_quantile(uniform(source, scenario, step, index));
}

}  // namespace riskscp
