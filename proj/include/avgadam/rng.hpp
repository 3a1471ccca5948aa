#ifndef AVGADAM_RNG_HPP
#define AVGADAM_RNG_HPP

#include <cstdint>
#include <random>

namespace avgadam {

using Engine = std::mt19937_64;

/// Named sub-streams of one master seed. The key values are part of the
/// reproducibility contract: changing them changes every recorded run.
enum class Stream : std::uint32_t {
  init = 0x494e4954u,  // "INIT"
  data = 0x44415441u,  // "DATA"
  test = 0x54455354u,  // "TEST"
};

inline Engine make_stream(std::uint64_t master_seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Engine(seq);
}

}  // namespace avgadam

#endif  // AVGADAM_RNG_HPP
