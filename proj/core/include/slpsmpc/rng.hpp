#pragma once

#include <array>
#include <cstdint>

#include "slpsmpc/matrix.hpp"

namespace slpsmpc {

/// Philox-4x32-10 counter-based generator. Stateless: every block of four
/// 32-bit words is a pure function of (key, counter), so disturbance streams
/// keyed by (seed, rollout, step) are identical for any worker count.
struct Philox4x32 {
  static std::array<uint32_t, 4> block(uint64_t key, const std::array<uint32_t, 4>& counter);
};

/// Two standard normal deviates from one Philox block via Box-Muller.
std::array<double, 2> philox_normal_pair(uint64_t key, const std::array<uint32_t, 4>& counter);

/// The i.i.d. standard normal vector for a given (seed, rollout, step) cell.
Vector standard_normal_draw(uint64_t seed, uint64_t rollout, uint64_t step, int dim);

}  // namespace slpsmpc
