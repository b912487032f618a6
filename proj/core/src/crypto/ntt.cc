#include "flpl/crypto/ntt.h"

#include <gmpxx.h>

#include <algorithm>
#include <bit>
#include <string>

#include "flpl/crypto/bigint.h"

namespace flpl::crypto {
namespace {

uint32_t BitReverse(uint32_t x, int bits) {
  uint32_t r = 0;
  for (int i = 0; i < bits; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

}  // namespace

uint64_t MulMod(uint64_t a, uint64_t b, uint64_t p) {
  return static_cast<uint64_t>(static_cast<unsigned __int128>(a) * b % p);
}

uint64_t PowMod(uint64_t base, uint64_t exp, uint64_t p) {
  uint64_t r = 1 % p;
  base %= p;
  while (exp) {
    if (exp & 1) r = MulMod(r, base, p);
    base = MulMod(base, base, p);
    exp >>= 1;
  }
  return r;
}

uint64_t InvMod(uint64_t a, uint64_t p) {
  if (a % p == 0) throw CryptoError("InvMod: zero has no inverse");
  return PowMod(a, p - 2, p);
}

uint64_t ShoupPrecompute(uint64_t w, uint64_t p) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(w) << 64) / p);
}

std::vector<uint64_t> FindNttPrimes(int n, std::span<const int> bit_sizes) {
  const uint64_t step = 2 * static_cast<uint64_t>(n);
  std::vector<uint64_t> primes;
  Rng rng(0x7717);
  for (int bits : bit_sizes) {
    if (bits < 20 || bits > 60) throw CryptoError("FindNttPrimes: prime size out of [20, 60]");
    const uint64_t hi = (uint64_t{1} << bits) - 1;
    const uint64_t lo = uint64_t{1} << (bits - 1);
    uint64_t p = hi / step * step + 1;
    if (p > hi) p -= step;
    bool found = false;
    for (; p > lo; p -= step) {
      if (std::find(primes.begin(), primes.end(), p) != primes.end()) continue;
      if (IsProbablePrime(mpz_class(static_cast<unsigned long>(p)), 40, rng)) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw CryptoError("FindNttPrimes: no " + std::to_string(bits) + "-bit prime for n=" +
                        std::to_string(n));
    }
    primes.push_back(p);
  }
  return primes;
}

NttTables::NttTables(int n, uint64_t p) : n_(n), p_(p) {
  if (n < 2 || !std::has_single_bit(static_cast<unsigned>(n))) {
    throw CryptoError("NttTables: n must be a power of two");
  }
  if (p >= (uint64_t{1} << 62) || (p - 1) % (2 * static_cast<uint64_t>(n)) != 0) {
    throw CryptoError("NttTables: modulus must be < 2^62 and = 1 mod 2n");
  }
  // psi has order exactly 2n iff psi^n = -1.
  psi_ = 0;
  for (uint64_t g = 2; g < p; ++g) {
    const uint64_t cand = PowMod(g, (p - 1) / (2 * static_cast<uint64_t>(n)), p);
    if (PowMod(cand, static_cast<uint64_t>(n), p) == p - 1) {
      psi_ = cand;
      break;
    }
  }
  if (psi_ == 0) throw CryptoError("NttTables: no primitive 2n-th root");
  const int log_n = std::countr_zero(static_cast<unsigned>(n));
  const uint64_t psi_inv = InvMod(psi_, p);
  psi_rev_.resize(n);
  psi_inv_rev_.resize(n);
  psi_rev_shoup_.resize(n);
  psi_inv_rev_shoup_.resize(n);
  uint64_t pw = 1, pw_inv = 1;
  for (int i = 0; i < n; ++i) {
    const uint32_t r = BitReverse(static_cast<uint32_t>(i), log_n);
    psi_rev_[r] = pw;
    psi_inv_rev_[r] = pw_inv;
    pw = MulMod(pw, psi_, p);
    pw_inv = MulMod(pw_inv, psi_inv, p);
  }
  for (int i = 0; i < n; ++i) {
    psi_rev_shoup_[i] = ShoupPrecompute(psi_rev_[i], p);
    psi_inv_rev_shoup_[i] = ShoupPrecompute(psi_inv_rev_[i], p);
  }
  n_inv_ = InvMod(static_cast<uint64_t>(n), p);
  n_inv_shoup_ = ShoupPrecompute(n_inv_, p);
}

void NttTables::Forward(std::span<uint64_t> a) const {
  const uint64_t p = p_;
  int t = n_;
  for (int m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (int i = 0; i < m; ++i) {
      const int j1 = 2 * i * t;
      const uint64_t s = psi_rev_[m + i], s_shoup = psi_rev_shoup_[m + i];
      uint64_t* x = a.data() + j1;
      uint64_t* y = x + t;
      for (int j = 0; j < t; ++j) {
        const uint64_t u = x[j];
        const uint64_t v = MulShoup(y[j], s, s_shoup, p);
        const uint64_t sum = u + v;
        x[j] = sum >= p ? sum - p : sum;
        y[j] = u >= v ? u - v : u + p - v;
      }
    }
  }
}

void NttTables::Inverse(std::span<uint64_t> a) const {
  const uint64_t p = p_;
  int t = 1;
  for (int m = n_; m > 1; m >>= 1) {
    const int h = m >> 1;
    int j1 = 0;
    for (int i = 0; i < h; ++i) {
      const uint64_t s = psi_inv_rev_[h + i], s_shoup = psi_inv_rev_shoup_[h + i];
      uint64_t* x = a.data() + j1;
      uint64_t* y = x + t;
      for (int j = 0; j < t; ++j) {
        const uint64_t u = x[j], v = y[j];
        const uint64_t sum = u + v;
        x[j] = sum >= p ? sum - p : sum;
        y[j] = MulShoup(u >= v ? u - v : u + p - v, s, s_shoup, p);
      }
      j1 += 2 * t;
    }
    t <<= 1;
  }
  for (uint64_t& v : a) v = MulShoup(v, n_inv_, n_inv_shoup_, p);
}

}  // namespace flpl::crypto
