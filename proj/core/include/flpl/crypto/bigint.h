#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <span>
#include <vector>

#include "flpl/common/error.h"
#include "flpl/common/rng.h"

namespace flpl::crypto {

class CryptoError : public Error {
 public:
  using Error::Error;
};

// Uniform integer with `bits` random bits, i.e. in [0, 2^bits).
mpz_class RandomBits(Rng& rng, int bits);
// Uniform integer in [0, bound) by rejection; bound must be positive.
mpz_class RandomBelow(Rng& rng, const mpz_class& bound);

// Miller-Rabin with `rounds` random bases, after trial division by small
// primes. Error probability for a composite is at most 4^-rounds.
bool IsProbablePrime(const mpz_class& n, int rounds, Rng& rng);

// Big-endian magnitude bytes of a non-negative integer (empty for zero).
std::vector<uint8_t> ToBytes(const mpz_class& v);
mpz_class FromBytes(std::span<const uint8_t> bytes);

// Length-prefixed form: 4-byte big-endian byte count, then magnitude bytes.
void AppendLengthPrefixed(const mpz_class& v, std::vector<uint8_t>& out);
// Reads one length-prefixed integer at `offset` and advances it. Throws
// CryptoError on truncation.
mpz_class ReadLengthPrefixed(std::span<const uint8_t> in, size_t& offset);

}  // namespace flpl::crypto
