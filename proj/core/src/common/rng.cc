#include "flpl/common/rng.h"

namespace flpl {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t DeriveSeed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t h = SplitMix64(seed);
  h = SplitMix64(h ^ (a + 0x632be59bd9b4e019ULL));
  h = SplitMix64(h ^ (b + 0x8cb92ba72f3d8dd7ULL));
  h = SplitMix64(h ^ (c + 0x4f1bbcdcbfa53e0bULL));
  return h;
}

}  // namespace flpl
