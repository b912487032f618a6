#pragma once

#include <gmpxx.h>

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "flpl/crypto/bigint.h"
#include "flpl/crypto/ntt.h"

namespace flpl::crypto {

// Largest log2(q) giving 128-bit security for a ternary secret, per the
// community homomorphic-encryption security standard; 0 for other degrees.
int CkksMaxLog2Q(int poly_degree);

struct CkksParams {
  int poly_degree = 8192;
  int log2q = 200;
  int scale_bits = 40;  // scale = 2^scale_bits
  // Permits N = 1024 and log2 q beyond the security table. Tests only.
  bool insecure = false;
};

// Addition-only CKKS over Z_q[X]/(X^N + 1). The modulus q is a product of
// NTT-friendly primes whose bit sizes add up to log2q; polynomials are held
// as residues modulo each prime, but every operation is defined modulo q.
class CkksContext {
 public:
  explicit CkksContext(const CkksParams& params);

  const CkksParams& params() const { return params_; }
  int poly_degree() const { return params_.poly_degree; }
  int slots() const { return params_.poly_degree / 2; }
  int log2q() const { return params_.log2q; }
  int scale_bits() const { return params_.scale_bits; }
  const mpz_class& modulus() const { return q_; }
  std::span<const uint64_t> primes() const { return primes_; }
  const NttTables& ntt(size_t i) const { return ntt_[i]; }
  // Identifies (N, primes) so that objects from different contexts are
  // never mixed.
  uint64_t tag() const { return tag_; }

  // Residue vector (primes x N) of a polynomial with small signed coefficients.
  std::vector<uint64_t> FromSigned(std::span<const int64_t> coeffs) const;
  // Centered representatives in (-q/2, q/2] of each coefficient.
  std::vector<mpz_class> ToCentered(std::span<const uint64_t> residues) const;
  // Same, converted to double and multiplied by 2^-shift.
  std::vector<double> ToCenteredDouble(std::span<const uint64_t> residues, int shift) const;

  // Special FFT over the N/2 slots: Forward evaluates a coefficient-packed
  // vector at the primitive 2N-th roots zeta^(5^j); Inverse undoes it.
  void FftForward(std::vector<std::complex<double>>& vals) const;
  void FftInverse(std::vector<std::complex<double>>& vals) const;

 private:
  CkksParams params_;
  std::vector<uint64_t> primes_;
  std::vector<NttTables> ntt_;
  mpz_class q_, half_q_;
  std::vector<mpz_class> crt_basis_;   // q / p_i
  std::vector<uint64_t> crt_inverse_;  // (q / p_i)^-1 mod p_i
  std::vector<uint64_t> rot_group_;
  std::vector<std::complex<double>> ksi_pows_;
  uint64_t tag_;
};

// Residues are stored prime-major: entry i * N + j is coefficient j mod p_i.
struct CkksPlaintext {
  uint64_t tag = 0;
  int scale_bits = 0;
  std::vector<uint64_t> residues;
};

struct CkksCiphertext {
  uint64_t tag = 0;
  int scale_bits = 0;
  std::vector<uint64_t> c0, c1;

  bool operator==(const CkksCiphertext&) const = default;
};

struct CkksSecretKey {
  uint64_t tag = 0;
  std::vector<int64_t> s;        // ternary coefficients
  std::vector<uint64_t> s_ntt;   // residues in the NTT domain
};

struct CkksPublicKey {
  uint64_t tag = 0;
  std::vector<uint64_t> b_ntt, a_ntt;  // b = -a s + e, NTT domain
};

struct CkksKeys {
  CkksSecretKey secret;
  CkksPublicKey public_key;
};

// Hamming weight of the sparse ternary secret and encryption randomness.
inline constexpr int kCkksSecretWeight = 192;
inline constexpr double kCkksErrorStddev = 3.2;

// Packs up to N/2 reals into slots (zero-padded) and scales by 2^scale_bits
// of the context. Throws CryptoError if a coefficient would reach
// 2^(log2q - 10), which leaves no room for aggregation.
CkksPlaintext CkksEncode(const CkksContext& ctx, std::span<const double> values);
// Returns N/2 reals, divided by the plaintext's carried scale.
std::vector<double> CkksDecode(const CkksContext& ctx, const CkksPlaintext& pt);

CkksKeys CkksKeygen(const CkksContext& ctx, uint64_t seed);
// (c0, c1) = (b u + e0 + m, a u + e1).
CkksCiphertext CkksEncrypt(const CkksContext& ctx, const CkksPublicKey& pk,
                           const CkksPlaintext& pt, uint64_t seed);
// m = c0 + c1 s mod q.
CkksPlaintext CkksDecrypt(const CkksContext& ctx, const CkksSecretKey& sk,
                          const CkksCiphertext& ct);

CkksCiphertext CkksAdd(const CkksContext& ctx, const CkksCiphertext& a, const CkksCiphertext& b);
void CkksAddInPlace(const CkksContext& ctx, CkksCiphertext& acc, const CkksCiphertext& b);
CkksCiphertext CkksAddPlain(const CkksContext& ctx, const CkksCiphertext& ct,
                            const CkksPlaintext& pt);
// Multiplies by round(k 2^scale_bits); the carried scale exponent grows by the
// context's scale_bits (scale squared for a fresh ciphertext). Throws when
// the new scale would leave less than 8 bits of headroom below q/2.
CkksCiphertext CkksMulPlainScalar(const CkksContext& ctx, const CkksCiphertext& ct, double k);

// Header (N: 4 bytes, log2q: 2 bytes, scale exponent: 2 bytes, big-endian)
// followed by c0 and c1, each coefficient as ceil(log2q / 8) big-endian bytes.
std::vector<uint8_t> CkksSerialize(const CkksContext& ctx, const CkksCiphertext& ct);
CkksCiphertext CkksDeserialize(const CkksContext& ctx, std::span<const uint8_t> bytes);
size_t CkksSerializedSize(const CkksContext& ctx);

// Vectors of any length are split into ceil(n / slots) ciphertexts. Chunk i
// uses a stream derived from (seed, i), so results do not depend on workers.
std::vector<CkksCiphertext> CkksEncryptVector(const CkksContext& ctx, const CkksPublicKey& pk,
                                              std::span<const double> values, uint64_t seed,
                                              int workers = 1);
std::vector<double> CkksDecryptVector(const CkksContext& ctx, const CkksSecretKey& sk,
                                      std::span<const CkksCiphertext> cts, size_t length);

}  // namespace flpl::crypto
