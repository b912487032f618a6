#pragma once

#include <cstdint>
#include <cstring>
#include <span>

namespace flpl {

// FNV-1a over raw bytes.
inline uint64_t Fnv1a64(std::span<const uint8_t> bytes,
                        uint64_t h = 0xcbf29ce484222325ULL) {
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hash of the exact bit patterns of a double vector.
inline uint64_t HashDoubles(std::span<const double> values) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    uint8_t buf[sizeof(double)];
    std::memcpy(buf, &v, sizeof(double));
    h = Fnv1a64(buf, h);
  }
  return h;
}

}  // namespace flpl
