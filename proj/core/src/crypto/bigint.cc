#include "flpl/crypto/bigint.h"

#include <array>

namespace flpl::crypto {
namespace {

constexpr std::array<unsigned, 54> kSmallPrimes = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,
    47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107,
    109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181,
    191, 193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251};

}  // namespace

mpz_class RandomBits(Rng& rng, int bits) {
  if (bits <= 0) return 0;
  const size_t words = (static_cast<size_t>(bits) + 63) / 64;
  std::vector<uint64_t> buf(words);
  for (uint64_t& w : buf) w = rng.NextU64();
  mpz_class v;
  mpz_import(v.get_mpz_t(), words, -1, sizeof(uint64_t), 0, 0, buf.data());
  const int excess = static_cast<int>(words * 64) - bits;
  if (excess > 0) mpz_fdiv_r_2exp(v.get_mpz_t(), v.get_mpz_t(), static_cast<mp_bitcnt_t>(bits));
  return v;
}

mpz_class RandomBelow(Rng& rng, const mpz_class& bound) {
  if (bound <= 0) throw CryptoError("RandomBelow: bound must be positive");
  const int bits = static_cast<int>(mpz_sizeinbase(bound.get_mpz_t(), 2));
  for (;;) {
    mpz_class v = RandomBits(rng, bits);
    if (v < bound) return v;
  }
}

bool IsProbablePrime(const mpz_class& n, int rounds, Rng& rng) {
  if (n < 2) return false;
  for (unsigned p : kSmallPrimes) {
    if (n == p) return true;
    if (mpz_divisible_ui_p(n.get_mpz_t(), p)) return false;
  }
  // n - 1 = d * 2^s with d odd.
  const mpz_class n_minus_1 = n - 1;
  mpz_class d = n_minus_1;
  const mp_bitcnt_t s = mpz_scan1(d.get_mpz_t(), 0);
  mpz_fdiv_q_2exp(d.get_mpz_t(), d.get_mpz_t(), s);
  const mpz_class base_range = n - 3;  // bases in [2, n - 2]
  mpz_class x;
  for (int round = 0; round < rounds; ++round) {
    const mpz_class a = RandomBelow(rng, base_range) + 2;
    mpz_powm(x.get_mpz_t(), a.get_mpz_t(), d.get_mpz_t(), n.get_mpz_t());
    if (x == 1 || x == n_minus_1) continue;
    bool witness = true;
    for (mp_bitcnt_t r = 1; r < s; ++r) {
      x = (x * x) % n;
      if (x == n_minus_1) {
        witness = false;
        break;
      }
      if (x == 1) break;
    }
    if (witness) return false;
  }
  return true;
}

std::vector<uint8_t> ToBytes(const mpz_class& v) {
  if (v < 0) throw CryptoError("ToBytes: negative integer");
  if (v == 0) return {};
  const size_t len = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  std::vector<uint8_t> out(len);
  size_t written = 0;
  mpz_export(out.data(), &written, 1, 1, 1, 0, v.get_mpz_t());
  out.resize(written);
  return out;
}

mpz_class FromBytes(std::span<const uint8_t> bytes) {
  mpz_class v;
  if (!bytes.empty()) mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return v;
}

void AppendLengthPrefixed(const mpz_class& v, std::vector<uint8_t>& out) {
  const std::vector<uint8_t> mag = ToBytes(v);
  const auto len = static_cast<uint32_t>(mag.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<uint8_t>(len >> shift));
  out.insert(out.end(), mag.begin(), mag.end());
}

mpz_class ReadLengthPrefixed(std::span<const uint8_t> in, size_t& offset) {
  if (in.size() < offset + 4) throw CryptoError("big integer: truncated length prefix");
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | in[offset + i];
  if (in.size() - offset - 4 < len) throw CryptoError("big integer: truncated magnitude");
  mpz_class v = FromBytes(in.subspan(offset + 4, len));
  offset += 4 + len;
  return v;
}

}  // namespace flpl::crypto
