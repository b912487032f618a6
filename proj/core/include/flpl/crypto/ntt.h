#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace flpl::crypto {

uint64_t MulMod(uint64_t a, uint64_t b, uint64_t p);
uint64_t PowMod(uint64_t base, uint64_t exp, uint64_t p);
// Inverse of a modulo a prime p.
uint64_t InvMod(uint64_t a, uint64_t p);

// floor(w * 2^64 / p), the precomputed companion of w for Shoup products.
uint64_t ShoupPrecompute(uint64_t w, uint64_t p);
// a * w mod p given w_shoup = ShoupPrecompute(w, p); requires p < 2^62.
inline uint64_t MulShoup(uint64_t a, uint64_t w, uint64_t w_shoup, uint64_t p) {
  const uint64_t q = static_cast<uint64_t>((static_cast<unsigned __int128>(a) * w_shoup) >> 64);
  const uint64_t r = a * w - q * p;
  return r >= p ? r - p : r;
}

// Distinct primes p = 1 (mod 2n), one per entry of `bit_sizes`, each with
// exactly that many bits. Searches downward from the top of each range.
std::vector<uint64_t> FindNttPrimes(int n, std::span<const int> bit_sizes);

// Negacyclic number-theoretic transform over Z_p[X]/(X^n + 1), n a power of
// two and p = 1 (mod 2n). Forward maps coefficients to evaluations at the odd
// powers of a primitive 2n-th root psi (in bit-reversed order); pointwise
// products in that domain are negacyclic convolutions.
class NttTables {
 public:
  NttTables(int n, uint64_t p);

  int n() const { return n_; }
  uint64_t modulus() const { return p_; }
  uint64_t psi() const { return psi_; }

  void Forward(std::span<uint64_t> a) const;
  void Inverse(std::span<uint64_t> a) const;

 private:
  int n_;
  uint64_t p_;
  uint64_t psi_;
  std::vector<uint64_t> psi_rev_, psi_rev_shoup_;
  std::vector<uint64_t> psi_inv_rev_, psi_inv_rev_shoup_;
  uint64_t n_inv_, n_inv_shoup_;
};

}  // namespace flpl::crypto
