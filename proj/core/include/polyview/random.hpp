#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace polyview {

// Philox4x32-10 (Salmon et al., SC'11). A keyed bijection on 128-bit
// counters; the output for a given (key, counter) never depends on how many
// other draws happened before it.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter Encrypt(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

// Uniform random bit generator over one Philox stream. The key is the seed;
// the upper 64 counter bits hold the stream index and the lower 64 bits the
// block position, so (seed, stream) pins every draw.
class RandomStream {
 public:
  using result_type = std::uint32_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    if (lane_ == 4) Refill();
    return buffer_[lane_++];
  }

  std::uint64_t seed() const {
    return std::uint64_t{key_[0]} | (std::uint64_t{key_[1]} << 32);
  }
  std::uint64_t stream() const { return stream_; }

 private:
  void Refill() {
    const Philox4x32::Counter ctr{
        static_cast<std::uint32_t>(block_),
        static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = Philox4x32::Encrypt(ctr, key_);
    ++block_;
    lane_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Philox4x32::Counter buffer_{};
  int lane_ = 4;
};

// Stream-index namespaces used by the experiment runner. Keeping them
// disjoint means changing the eval protocol never perturbs training draws.
namespace streams {
inline constexpr std::uint64_t kInit = 0;
inline constexpr std::uint64_t kTrainBase = std::uint64_t{1} << 40;
inline constexpr std::uint64_t kEvalBase = std::uint64_t{2} << 40;
inline constexpr std::uint64_t kStudyBase = std::uint64_t{3} << 40;
inline constexpr std::uint64_t kProbeBase = std::uint64_t{4} << 40;

inline std::uint64_t Train(std::uint64_t epoch) { return kTrainBase + epoch; }
inline std::uint64_t Eval(std::uint64_t epoch, std::uint64_t batch) {
  return kEvalBase + (epoch << 16) + batch;
}
inline std::uint64_t Study(std::uint64_t batch) { return kStudyBase + batch; }
inline std::uint64_t Probe(std::uint64_t m) { return kProbeBase + m; }
}  // namespace streams

}  // namespace polyview
