#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <span>
#include <vector>

#include "flpl/crypto/bigint.h"

namespace flpl::crypto {

struct PaillierPublicKey {
  mpz_class n;
  mpz_class n_squared;

  int bits() const { return static_cast<int>(mpz_sizeinbase(n.get_mpz_t(), 2)); }
  bool operator==(const PaillierPublicKey& o) const { return n == o.n; }
};

struct PaillierSecretKey {
  mpz_class n;
  mpz_class n_squared;
  mpz_class phi;
  mpz_class phi_inv;  // phi^-1 mod n
};

struct PaillierCiphertext {
  mpz_class c;

  bool operator==(const PaillierCiphertext& o) const { return c == o.c; }
};

struct PaillierKeyPair {
  PaillierPublicKey pk;
  PaillierSecretKey sk;
};

// Key sizes accepted by PaillierKeygen. 16-bit keys exist only so that tests
// can enumerate Z_N and require `insecure`.
bool IsSupportedPaillierBits(int bits);

// Symmetric-equivalent security of an N of `bits` bits, following the NIST
// factoring-modulus table (1024 -> 80, 2048 -> 112, 3072 -> 128). Returns 0
// for sizes below 1024.
int PaillierSecurityBits(int bits);

// Generator g = 1 + N. Draws two distinct probable primes of bits/2 bits each
// (top two bits set, so N has exactly `bits` bits) with 40 Miller-Rabin rounds.
PaillierKeyPair PaillierKeygen(int bits, uint64_t seed, bool insecure = false);

// Builds a key pair from known primes; used for worked examples.
PaillierKeyPair PaillierKeysFromPrimes(const mpz_class& a, const mpz_class& b);

// c = (1 + m N) r^N mod N^2, with 0 <= m < N and gcd(r, N) = 1.
PaillierCiphertext PaillierEncryptWithNonce(const PaillierPublicKey& pk, const mpz_class& m,
                                            const mpz_class& r);
// Draws r uniformly from the units of Z_N using a generator seeded by `seed`.
PaillierCiphertext PaillierEncrypt(const PaillierPublicKey& pk, const mpz_class& m,
                                   uint64_t seed);

// m = L(c^phi mod N^2) * phi^-1 mod N with L(u) = (u - 1) / N.
mpz_class PaillierDecrypt(const PaillierSecretKey& sk, const PaillierCiphertext& c);

// Decrypts to (m1 + m2) mod N.
PaillierCiphertext PaillierAdd(const PaillierPublicKey& pk, const PaillierCiphertext& a,
                               const PaillierCiphertext& b);
// Decrypts to k m mod N; requires 0 <= k < N.
PaillierCiphertext PaillierScalarMul(const PaillierPublicKey& pk, const PaillierCiphertext& c,
                                     const mpz_class& k);

// Signed fixed point over Z_N: x maps to round(x 2^p) mod N, so negative
// values land in the upper half.
class FixedPointCodec {
 public:
  explicit FixedPointCodec(const mpz_class& n, int precision_bits = 40);

  int precision_bits() const { return precision_bits_; }
  const mpz_class& half_range() const { return half_range_; }

  // Throws CryptoError when |round(x 2^p)| >= floor(N / 2) or x is not finite.
  mpz_class Encode(double x) const;
  // Inverse of Encode. `divisor` undoes a known integer weight applied in the
  // encrypted domain (e.g. a FedAvg sum of sample counts).
  double Decode(const mpz_class& m, double divisor = 1.0) const;

  // Throws CryptoError if summing `count` encodings of magnitude up to
  // `max_abs`, each weighted by up to `max_weight`, could wrap past N / 2.
  void CheckHeadroom(double max_abs, double count, double max_weight = 1.0) const;

 private:
  mpz_class n_;
  mpz_class half_range_;
  int precision_bits_;
};

// Element-wise encryption; element i uses its own generator stream derived
// from (seed, i), so the result does not depend on `workers`.
std::vector<PaillierCiphertext> PaillierEncryptVector(const PaillierPublicKey& pk,
                                                      std::span<const double> values,
                                                      const FixedPointCodec& codec,
                                                      uint64_t seed, int workers = 1);
std::vector<double> PaillierDecryptVector(const PaillierSecretKey& sk,
                                          std::span<const PaillierCiphertext> cts,
                                          const FixedPointCodec& codec, double divisor = 1.0,
                                          int workers = 1);

// Length-prefixed big-endian encodings.
void AppendCiphertext(const PaillierCiphertext& c, std::vector<uint8_t>& out);
PaillierCiphertext ReadCiphertext(std::span<const uint8_t> in, size_t& offset);
std::vector<uint8_t> SerializePublicKey(const PaillierPublicKey& pk);
PaillierPublicKey DeserializePublicKey(std::span<const uint8_t> bytes);

}  // namespace flpl::crypto
