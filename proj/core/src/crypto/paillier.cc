#include "flpl/crypto/paillier.h"

#include <cmath>
#include <string>

#include "flpl/common/parallel.h"

namespace flpl::crypto {
namespace {

constexpr int kMillerRabinRounds = 40;

mpz_class RandomPrime(int bits, Rng& rng) {
  for (;;) {
    mpz_class p = RandomBits(rng, bits);
    mpz_setbit(p.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 1));
    mpz_setbit(p.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 2));
    mpz_setbit(p.get_mpz_t(), 0);
    if (IsProbablePrime(p, kMillerRabinRounds, rng)) return p;
  }
}

void RequireCiphertext(const mpz_class& n_squared, const mpz_class& n, const mpz_class& c,
                       const char* op) {
  if (c <= 0 || c >= n_squared) throw CryptoError(std::string(op) + ": ciphertext out of range");
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), c.get_mpz_t(), n.get_mpz_t());
  if (g != 1) throw CryptoError(std::string(op) + ": ciphertext is not a unit mod N^2");
}

}  // namespace

bool IsSupportedPaillierBits(int bits) {
  return bits == 16 || bits == 512 || bits == 1024 || bits == 2048 || bits == 3072;
}

int PaillierSecurityBits(int bits) {
  if (bits >= 3072) return 128;
  if (bits >= 2048) return 112;
  if (bits >= 1024) return 80;
  return 0;
}

PaillierKeyPair PaillierKeygen(int bits, uint64_t seed, bool insecure) {
  if (!IsSupportedPaillierBits(bits)) {
    throw CryptoError("PaillierKeygen: unsupported key size " + std::to_string(bits) +
                      " (expected 512, 1024, 2048 or 3072)");
  }
  if (bits == 16 && !insecure) {
    throw CryptoError("PaillierKeygen: 16-bit keys are test-only and need the insecure flag");
  }
  Rng rng(DeriveSeed(seed, 0x9a11));
  const mpz_class a = RandomPrime(bits / 2, rng);
  mpz_class b;
  do {
    b = RandomPrime(bits / 2, rng);
  } while (b == a);
  return PaillierKeysFromPrimes(a, b);
}

PaillierKeyPair PaillierKeysFromPrimes(const mpz_class& a, const mpz_class& b) {
  PaillierKeyPair kp;
  kp.sk.n = a * b;
  kp.sk.n_squared = kp.sk.n * kp.sk.n;
  kp.sk.phi = (a - 1) * (b - 1);
  if (mpz_invert(kp.sk.phi_inv.get_mpz_t(), kp.sk.phi.get_mpz_t(), kp.sk.n.get_mpz_t()) == 0) {
    throw CryptoError("PaillierKeysFromPrimes: gcd(phi, N) != 1");
  }
  kp.pk.n = kp.sk.n;
  kp.pk.n_squared = kp.sk.n_squared;
  return kp;
}

PaillierCiphertext PaillierEncryptWithNonce(const PaillierPublicKey& pk, const mpz_class& m,
                                            const mpz_class& r) {
  if (m < 0 || m >= pk.n) throw CryptoError("PaillierEncrypt: plaintext out of range [0, N)");
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
  if (r <= 0 || r >= pk.n || g != 1) throw CryptoError("PaillierEncrypt: invalid nonce");
  PaillierCiphertext out;
  mpz_powm(out.c.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n_squared.get_mpz_t());
  // (1 + N)^m = 1 + m N (mod N^2).
  const mpz_class gm = (1 + m * pk.n) % pk.n_squared;
  out.c = (out.c * gm) % pk.n_squared;
  return out;
}

PaillierCiphertext PaillierEncrypt(const PaillierPublicKey& pk, const mpz_class& m,
                                   uint64_t seed) {
  Rng rng(seed);
  mpz_class r, g;
  for (;;) {
    r = RandomBelow(rng, pk.n);
    if (r == 0) continue;
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
    if (g == 1) break;
  }
  return PaillierEncryptWithNonce(pk, m, r);
}

mpz_class PaillierDecrypt(const PaillierSecretKey& sk, const PaillierCiphertext& c) {
  RequireCiphertext(sk.n_squared, sk.n, c.c, "PaillierDecrypt");
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.c.get_mpz_t(), sk.phi.get_mpz_t(), sk.n_squared.get_mpz_t());
  mpz_class l;
  mpz_fdiv_q(l.get_mpz_t(), mpz_class(u - 1).get_mpz_t(), sk.n.get_mpz_t());
  return (l * sk.phi_inv) % sk.n;
}

PaillierCiphertext PaillierAdd(const PaillierPublicKey& pk, const PaillierCiphertext& a,
                               const PaillierCiphertext& b) {
  return PaillierCiphertext{(a.c * b.c) % pk.n_squared};
}

PaillierCiphertext PaillierScalarMul(const PaillierPublicKey& pk, const PaillierCiphertext& c,
                                     const mpz_class& k) {
  if (k < 0 || k >= pk.n) throw CryptoError("PaillierScalarMul: scalar out of range [0, N)");
  PaillierCiphertext out;
  mpz_powm(out.c.get_mpz_t(), c.c.get_mpz_t(), k.get_mpz_t(), pk.n_squared.get_mpz_t());
  return out;
}

FixedPointCodec::FixedPointCodec(const mpz_class& n, int precision_bits)
    : n_(n), half_range_(n / 2), precision_bits_(precision_bits) {
  if (precision_bits < 0 || precision_bits > 1000) {
    throw CryptoError("FixedPointCodec: precision bits out of range");
  }
}

mpz_class FixedPointCodec::Encode(double x) const {
  if (!std::isfinite(x)) throw CryptoError("FixedPointCodec: value is not finite");
  // Scaling by a power of two is exact; rounding happens once.
  const double scaled = std::nearbyint(std::ldexp(x, precision_bits_));
  mpz_class m(scaled);
  if (abs(m) >= half_range_) {
    throw CryptoError("FixedPointCodec: " + std::to_string(x) + " overflows the plaintext range");
  }
  if (m < 0) m += n_;
  return m;
}

double FixedPointCodec::Decode(const mpz_class& m, double divisor) const {
  mpz_class v = m % n_;
  if (v < 0) v += n_;
  if (v > half_range_) v -= n_;
  long exp = 0;
  const double mant = mpz_get_d_2exp(&exp, v.get_mpz_t());
  return std::ldexp(mant, static_cast<int>(exp) - precision_bits_) / divisor;
}

void FixedPointCodec::CheckHeadroom(double max_abs, double count, double max_weight) const {
  const double worst = std::ldexp(max_abs * count * max_weight, precision_bits_);
  const double limit = mpz_get_d(half_range_.get_mpz_t());
  if (!(worst < limit)) {
    throw CryptoError("FixedPointCodec: sum of " + std::to_string(count) +
                      " values could overflow the plaintext range");
  }
}

std::vector<PaillierCiphertext> PaillierEncryptVector(const PaillierPublicKey& pk,
                                                      std::span<const double> values,
                                                      const FixedPointCodec& codec,
                                                      uint64_t seed, int workers) {
  std::vector<PaillierCiphertext> out(values.size());
  ParallelFor(values.size(), workers, [&](size_t i) {
    try {
      out[i] = PaillierEncrypt(pk, codec.Encode(values[i]), DeriveSeed(seed, 0xe4c, i));
    } catch (const CryptoError& e) {
      throw CryptoError("element " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

std::vector<double> PaillierDecryptVector(const PaillierSecretKey& sk,
                                          std::span<const PaillierCiphertext> cts,
                                          const FixedPointCodec& codec, double divisor,
                                          int workers) {
  std::vector<double> out(cts.size());
  ParallelFor(cts.size(), workers,
              [&](size_t i) { out[i] = codec.Decode(PaillierDecrypt(sk, cts[i]), divisor); });
  return out;
}

void AppendCiphertext(const PaillierCiphertext& c, std::vector<uint8_t>& out) {
  AppendLengthPrefixed(c.c, out);
}

PaillierCiphertext ReadCiphertext(std::span<const uint8_t> in, size_t& offset) {
  return PaillierCiphertext{ReadLengthPrefixed(in, offset)};
}

std::vector<uint8_t> SerializePublicKey(const PaillierPublicKey& pk) {
  std::vector<uint8_t> out;
  AppendLengthPrefixed(pk.n, out);
  return out;
}

PaillierPublicKey DeserializePublicKey(std::span<const uint8_t> bytes) {
  size_t offset = 0;
  PaillierPublicKey pk;
  pk.n = ReadLengthPrefixed(bytes, offset);
  if (offset != bytes.size()) throw CryptoError("public key: trailing bytes");
  if (pk.n < 15 || mpz_even_p(pk.n.get_mpz_t())) throw CryptoError("public key: invalid modulus");
  pk.n_squared = pk.n * pk.n;
  return pk;
}

}  // namespace flpl::crypto
