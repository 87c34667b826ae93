#include "slpsmpc/rng.hpp"

#include <cmath>

namespace slpsmpc {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

inline void philox_round(std::array<uint32_t, 4>& ctr, uint32_t k0, uint32_t k1) {
  const uint64_t p0 = uint64_t(kPhiloxM0) * ctr[0];
  const uint64_t p1 = uint64_t(kPhiloxM1) * ctr[2];
  const uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
  const uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
  ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

inline double u01(uint32_t hi, uint32_t lo) {
  // 53 random bits mapped into (0, 1]; never 0, so log() below is safe.
  const uint64_t x = ((uint64_t(hi) << 32) | lo) >> 11;
  return (double(x) + 1.0) * (1.0 / 9007199254740992.0);
}

}  // namespace

std::array<uint32_t, 4> Philox4x32::block(uint64_t key, const std::array<uint32_t, 4>& counter) {
  std::array<uint32_t, 4> ctr = counter;
  uint32_t k0 = uint32_t(key), k1 = uint32_t(key >> 32);
  for (int round = 0; round < 10; ++round) {
    philox_round(ctr, k0, k1);
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

std::array<double, 2> philox_normal_pair(uint64_t key, const std::array<uint32_t, 4>& counter) {
  const auto words = Philox4x32::block(key, counter);
  const double u1 = u01(words[0], words[1]);
  const double u2 = u01(words[2], words[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

Vector standard_normal_draw(uint64_t seed, uint64_t rollout, uint64_t step, int dim) {
  Vector g(dim);
  for (int pair = 0; 2 * pair < dim; ++pair) {
    const std::array<uint32_t, 4> counter = {uint32_t(rollout), uint32_t(rollout >> 32),
                                             uint32_t(step), uint32_t(pair)};
    const auto duo = philox_normal_pair(seed, counter);
    g[2 * pair] = duo[0];
    if (2 * pair + 1 < dim) g[2 * pair + 1] = duo[1];
  }
  return g;
}

}  // namespace slpsmpc
