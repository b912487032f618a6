#include "flpl/crypto/ckks.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "flpl/common/hash.h"
#include "flpl/common/parallel.h"

namespace flpl::crypto {
namespace {

void BitReverseInPlace(std::vector<std::complex<double>>& v) {
  const size_t n = v.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }
}

void RequireTag(const CkksContext& ctx, uint64_t tag, const char* op) {
  if (tag != ctx.tag()) throw CryptoError(std::string(op) + ": object belongs to another context");
}

// Residue of a signed 64-bit integer modulo p.
uint64_t ReduceSigned(int64_t v, uint64_t p) {
  if (v >= 0) return static_cast<uint64_t>(v) % p;
  const uint64_t r = static_cast<uint64_t>(-(v + 1)) % p;  // avoids overflow at INT64_MIN
  return p - 1 - r;
}

// Sparse ternary polynomial with exactly `weight` nonzero +-1 coefficients.
std::vector<int64_t> SampleSparseTernary(int n, int weight, Rng& rng) {
  std::vector<int64_t> out(static_cast<size_t>(n), 0);
  const int h = std::min(weight, n);
  for (int placed = 0; placed < h;) {
    const auto pos = rng.UniformInt(static_cast<uint64_t>(n));
    if (out[pos] != 0) continue;
    out[pos] = (rng.NextU64() & 1) ? 1 : -1;
    ++placed;
  }
  return out;
}

// Rounded Gaussian, clipped at six standard deviations.
std::vector<int64_t> SampleError(int n, Rng& rng) {
  std::vector<int64_t> out(static_cast<size_t>(n));
  std::normal_distribution<double> dist(0.0, kCkksErrorStddev);
  const double bound = 6.0 * kCkksErrorStddev;
  for (int64_t& v : out) {
    double x;
    do {
      x = dist(rng.engine());
    } while (std::abs(x) > bound);
    v = static_cast<int64_t>(std::llround(x));
  }
  return out;
}

void ForwardAll(const CkksContext& ctx, std::vector<uint64_t>& poly) {
  const size_t n = static_cast<size_t>(ctx.poly_degree());
  for (size_t i = 0; i < ctx.primes().size(); ++i) {
    ctx.ntt(i).Forward(std::span<uint64_t>(poly.data() + i * n, n));
  }
}

void InverseAll(const CkksContext& ctx, std::vector<uint64_t>& poly) {
  const size_t n = static_cast<size_t>(ctx.poly_degree());
  for (size_t i = 0; i < ctx.primes().size(); ++i) {
    ctx.ntt(i).Inverse(std::span<uint64_t>(poly.data() + i * n, n));
  }
}

// out = a * b pointwise (both in the NTT domain).
std::vector<uint64_t> PointwiseMul(const CkksContext& ctx, std::span<const uint64_t> a,
                                   std::span<const uint64_t> b) {
  const size_t n = static_cast<size_t>(ctx.poly_degree());
  std::vector<uint64_t> out(a.size());
  for (size_t i = 0; i < ctx.primes().size(); ++i) {
    const uint64_t p = ctx.primes()[i];
    for (size_t j = i * n; j < (i + 1) * n; ++j) out[j] = MulMod(a[j], b[j], p);
  }
  return out;
}

void AddResidues(const CkksContext& ctx, std::vector<uint64_t>& acc, std::span<const uint64_t> b) {
  const size_t n = static_cast<size_t>(ctx.poly_degree());
  for (size_t i = 0; i < ctx.primes().size(); ++i) {
    const uint64_t p = ctx.primes()[i];
    for (size_t j = i * n; j < (i + 1) * n; ++j) {
      const uint64_t s = acc[j] + b[j];
      acc[j] = s >= p ? s - p : s;
    }
  }
}

void AppendBigEndian(uint64_t v, int bytes, std::vector<uint8_t>& out) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

}  // namespace

int CkksMaxLog2Q(int poly_degree) {
  switch (poly_degree) {
    case 4096:
      return 109;
    case 8192:
      return 218;
    case 16384:
      return 438;
    case 32768:
      return 881;
    default:
      return 0;
  }
}

CkksContext::CkksContext(const CkksParams& params) : params_(params) {
  const int n = params.poly_degree;
  const bool known = n == 1024 || CkksMaxLog2Q(n) > 0;
  if (!known) {
    throw CryptoError("CkksContext: poly degree must be one of 1024, 4096, 8192, 16384, 32768; got " +
                      std::to_string(n));
  }
  if (n == 1024 && !params.insecure) {
    throw CryptoError("CkksContext: N=1024 is test-only and needs the insecure flag");
  }
  if (n != 1024 && params.log2q > CkksMaxLog2Q(n) && !params.insecure) {
    throw CryptoError("CkksContext: log2 q = " + std::to_string(params.log2q) + " exceeds the " +
                      std::to_string(CkksMaxLog2Q(n)) + "-bit limit for 128-bit security at N=" +
                      std::to_string(n));
  }
  if (params.log2q < 30 || params.log2q > 1200) {
    throw CryptoError("CkksContext: log2 q must lie in [30, 1200]");
  }
  if (params.scale_bits < 1 || params.scale_bits > params.log2q - 12) {
    throw CryptoError("CkksContext: scale bits must lie in [1, log2q - 12]");
  }
  // Split log2q into as few primes of at most 60 bits as possible.
  const int count = (params.log2q + 59) / 60;
  std::vector<int> sizes(static_cast<size_t>(count), params.log2q / count);
  for (int i = 0; i < params.log2q % count; ++i) sizes[i] += 1;
  primes_ = FindNttPrimes(n, sizes);
  for (uint64_t p : primes_) ntt_.emplace_back(n, p);

  q_ = 1;
  for (uint64_t p : primes_) q_ *= mpz_class(static_cast<unsigned long>(p));
  half_q_ = q_ / 2;
  for (uint64_t p : primes_) {
    const mpz_class qi = q_ / mpz_class(static_cast<unsigned long>(p));
    crt_basis_.push_back(qi);
    crt_inverse_.push_back(InvMod(mpz_fdiv_ui(qi.get_mpz_t(), p), p));
  }

  const int slots = n / 2;
  const uint64_t m = 2 * static_cast<uint64_t>(n);
  rot_group_.resize(slots);
  uint64_t five = 1;
  for (int j = 0; j < slots; ++j) {
    rot_group_[j] = five;
    five = five * 5 % m;
  }
  ksi_pows_.resize(m + 1);
  for (uint64_t j = 0; j < m; ++j) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
    ksi_pows_[j] = {std::cos(angle), std::sin(angle)};
  }
  ksi_pows_[m] = ksi_pows_[0];

  std::vector<uint8_t> id;
  AppendBigEndian(static_cast<uint64_t>(n), 4, id);
  for (uint64_t p : primes_) AppendBigEndian(p, 8, id);
  tag_ = Fnv1a64(id);
}

std::vector<uint64_t> CkksContext::FromSigned(std::span<const int64_t> coeffs) const {
  const size_t n = static_cast<size_t>(poly_degree());
  std::vector<uint64_t> out(primes_.size() * n);
  for (size_t i = 0; i < primes_.size(); ++i) {
    for (size_t j = 0; j < n; ++j) out[i * n + j] = ReduceSigned(coeffs[j], primes_[i]);
  }
  return out;
}

std::vector<mpz_class> CkksContext::ToCentered(std::span<const uint64_t> residues) const {
  const size_t n = static_cast<size_t>(poly_degree());
  std::vector<mpz_class> out(n);
  mpz_class acc;
  for (size_t j = 0; j < n; ++j) {
    acc = 0;
    for (size_t i = 0; i < primes_.size(); ++i) {
      const uint64_t t = MulMod(residues[i * n + j], crt_inverse_[i], primes_[i]);
      mpz_addmul_ui(acc.get_mpz_t(), crt_basis_[i].get_mpz_t(), static_cast<unsigned long>(t));
    }
    mpz_fdiv_r(acc.get_mpz_t(), acc.get_mpz_t(), q_.get_mpz_t());
    if (acc > half_q_) acc -= q_;
    out[j] = acc;
  }
  return out;
}

std::vector<double> CkksContext::ToCenteredDouble(std::span<const uint64_t> residues,
                                                  int shift) const {
  std::vector<mpz_class> big = ToCentered(residues);
  std::vector<double> out(big.size());
  for (size_t j = 0; j < big.size(); ++j) {
    long exp = 0;
    const double mant = mpz_get_d_2exp(&exp, big[j].get_mpz_t());
    out[j] = std::ldexp(mant, static_cast<int>(exp) - shift);
  }
  return out;
}

void CkksContext::FftForward(std::vector<std::complex<double>>& vals) const {
  const size_t size = vals.size();
  const uint64_t m = 2 * static_cast<uint64_t>(poly_degree());
  BitReverseInPlace(vals);
  for (size_t len = 2; len <= size; len <<= 1) {
    const size_t lenh = len >> 1, lenq = len << 2;
    for (size_t i = 0; i < size; i += len) {
      for (size_t j = 0; j < lenh; ++j) {
        const size_t idx = (rot_group_[j] % lenq) * m / lenq;
        const std::complex<double> u = vals[i + j];
        const std::complex<double> v = vals[i + j + lenh] * ksi_pows_[idx];
        vals[i + j] = u + v;
        vals[i + j + lenh] = u - v;
      }
    }
  }
}

void CkksContext::FftInverse(std::vector<std::complex<double>>& vals) const {
  const size_t size = vals.size();
  const uint64_t m = 2 * static_cast<uint64_t>(poly_degree());
  for (size_t len = size; len >= 2; len >>= 1) {
    const size_t lenh = len >> 1, lenq = len << 2;
    for (size_t i = 0; i < size; i += len) {
      for (size_t j = 0; j < lenh; ++j) {
        const size_t idx = (lenq - rot_group_[j] % lenq) * m / lenq;
        const std::complex<double> u = vals[i + j] + vals[i + j + lenh];
        const std::complex<double> v = (vals[i + j] - vals[i + j + lenh]) * ksi_pows_[idx];
        vals[i + j] = u;
        vals[i + j + lenh] = v;
      }
    }
  }
  BitReverseInPlace(vals);
  for (auto& v : vals) v /= static_cast<double>(size);
}

CkksPlaintext CkksEncode(const CkksContext& ctx, std::span<const double> values) {
  const size_t slots = static_cast<size_t>(ctx.slots());
  if (values.size() > slots) {
    throw CryptoError("CkksEncode: " + std::to_string(values.size()) + " values exceed " +
                      std::to_string(slots) + " slots");
  }
  std::vector<std::complex<double>> u(slots);
  for (size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw CryptoError("CkksEncode: value is not finite");
    u[i] = values[i];
  }
  ctx.FftInverse(u);
  const size_t n = static_cast<size_t>(ctx.poly_degree());
  std::vector<double> coeffs(n);
  for (size_t i = 0; i < slots; ++i) {
    coeffs[i] = std::nearbyint(std::ldexp(u[i].real(), ctx.scale_bits()));
    coeffs[i + slots] = std::nearbyint(std::ldexp(u[i].imag(), ctx.scale_bits()));
  }
  const double limit = std::ldexp(1.0, ctx.log2q() - 10);
  for (double c : coeffs) {
    if (!(std::abs(c) < limit)) throw CryptoError("CkksEncode: value too large for the modulus");
  }
  CkksPlaintext pt;
  pt.tag = ctx.tag();
  pt.scale_bits = ctx.scale_bits();
  pt.residues.resize(ctx.primes().size() * n);
  const double small = std::ldexp(1.0, 62);
  for (size_t j = 0; j < n; ++j) {
    if (std::abs(coeffs[j]) < small) {
      const auto v = static_cast<int64_t>(coeffs[j]);
      for (size_t i = 0; i < ctx.primes().size(); ++i) {
        pt.residues[i * n + j] = ReduceSigned(v, ctx.primes()[i]);
      }
    } else {
      const mpz_class big(coeffs[j]);
      for (size_t i = 0; i < ctx.primes().size(); ++i) {
        const uint64_t p = ctx.primes()[i];
        mpz_class r;
        mpz_fdiv_r_ui(r.get_mpz_t(), big.get_mpz_t(), static_cast<unsigned long>(p));
        pt.residues[i * n + j] = r.get_ui();
      }
    }
  }
  return pt;
}

std::vector<double> CkksDecode(const CkksContext& ctx, const CkksPlaintext& pt) {
  RequireTag(ctx, pt.tag, "CkksDecode");
  const size_t slots = static_cast<size_t>(ctx.slots());
  std::vector<double> coeffs = ctx.ToCenteredDouble(pt.residues, pt.scale_bits);
  std::vector<std::complex<double>> u(slots);
  for (size_t i = 0; i < slots; ++i) u[i] = {coeffs[i], coeffs[i + slots]};
  ctx.FftForward(u);
  std::vector<double> out(slots);
  for (size_t i = 0; i < slots; ++i) out[i] = u[i].real();
  return out;
}

CkksKeys CkksKeygen(const CkksContext& ctx, uint64_t seed) {
  const int n = ctx.poly_degree();
  const size_t sz = ctx.primes().size() * static_cast<size_t>(n);
  Rng rng(DeriveSeed(seed, 0xcc05));
  CkksKeys keys;
  keys.secret.tag = keys.public_key.tag = ctx.tag();
  keys.secret.s = SampleSparseTernary(n, kCkksSecretWeight, rng);
  keys.secret.s_ntt = ctx.FromSigned(keys.secret.s);
  ForwardAll(ctx, keys.secret.s_ntt);

  // a uniform modulo q is uniform modulo each prime independently. It is
  // sampled directly in the NTT domain, where it is equally uniform.
  std::vector<uint64_t> a(sz);
  for (size_t i = 0; i < ctx.primes().size(); ++i) {
    for (int j = 0; j < n; ++j) a[i * n + j] = rng.UniformInt(ctx.primes()[i]);
  }
  std::vector<uint64_t> e = ctx.FromSigned(SampleError(n, rng));
  ForwardAll(ctx, e);
  std::vector<uint64_t> as = PointwiseMul(ctx, a, keys.secret.s_ntt);
  std::vector<uint64_t> b(sz);
  for (size_t i = 0; i < ctx.primes().size(); ++i) {
    const uint64_t p = ctx.primes()[i];
    for (int j = 0; j < n; ++j) {
      const size_t k = i * n + j;
      const uint64_t neg = as[k] == 0 ? 0 : p - as[k];
      const uint64_t s = neg + e[k];
      b[k] = s >= p ? s - p : s;
    }
  }
  keys.public_key.a_ntt = std::move(a);
  keys.public_key.b_ntt = std::move(b);
  return keys;
}

CkksCiphertext CkksEncrypt(const CkksContext& ctx, const CkksPublicKey& pk,
                           const CkksPlaintext& pt, uint64_t seed) {
  RequireTag(ctx, pk.tag, "CkksEncrypt");
  RequireTag(ctx, pt.tag, "CkksEncrypt");
  const int n = ctx.poly_degree();
  Rng rng(seed);
  std::vector<uint64_t> u = ctx.FromSigned(SampleSparseTernary(n, kCkksSecretWeight, rng));
  ForwardAll(ctx, u);
  CkksCiphertext ct;
  ct.tag = ctx.tag();
  ct.scale_bits = pt.scale_bits;
  ct.c0 = PointwiseMul(ctx, pk.b_ntt, u);
  ct.c1 = PointwiseMul(ctx, pk.a_ntt, u);
  InverseAll(ctx, ct.c0);
  InverseAll(ctx, ct.c1);
  AddResidues(ctx, ct.c0, ctx.FromSigned(SampleError(n, rng)));
  AddResidues(ctx, ct.c0, pt.residues);
  AddResidues(ctx, ct.c1, ctx.FromSigned(SampleError(n, rng)));
  return ct;
}

CkksPlaintext CkksDecrypt(const CkksContext& ctx, const CkksSecretKey& sk,
                          const CkksCiphertext& ct) {
  RequireTag(ctx, sk.tag, "CkksDecrypt");
  RequireTag(ctx, ct.tag, "CkksDecrypt");
  std::vector<uint64_t> c1 = ct.c1;
  ForwardAll(ctx, c1);
  CkksPlaintext pt;
  pt.tag = ctx.tag();
  pt.scale_bits = ct.scale_bits;
  pt.residues = PointwiseMul(ctx, c1, sk.s_ntt);
  InverseAll(ctx, pt.residues);
  AddResidues(ctx, pt.residues, ct.c0);
  return pt;
}

void CkksAddInPlace(const CkksContext& ctx, CkksCiphertext& acc, const CkksCiphertext& b) {
  RequireTag(ctx, acc.tag, "CkksAdd");
  RequireTag(ctx, b.tag, "CkksAdd");
  if (acc.scale_bits != b.scale_bits) {
    throw CryptoError("CkksAdd: scale mismatch 2^" + std::to_string(acc.scale_bits) + " vs 2^" +
                      std::to_string(b.scale_bits));
  }
  AddResidues(ctx, acc.c0, b.c0);
  AddResidues(ctx, acc.c1, b.c1);
}

CkksCiphertext CkksAdd(const CkksContext& ctx, const CkksCiphertext& a, const CkksCiphertext& b) {
  CkksCiphertext out = a;
  CkksAddInPlace(ctx, out, b);
  return out;
}

CkksCiphertext CkksAddPlain(const CkksContext& ctx, const CkksCiphertext& ct,
                            const CkksPlaintext& pt) {
  RequireTag(ctx, ct.tag, "CkksAddPlain");
  RequireTag(ctx, pt.tag, "CkksAddPlain");
  if (ct.scale_bits != pt.scale_bits) throw CryptoError("CkksAddPlain: scale mismatch");
  CkksCiphertext out = ct;
  AddResidues(ctx, out.c0, pt.residues);
  return out;
}

CkksCiphertext CkksMulPlainScalar(const CkksContext& ctx, const CkksCiphertext& ct, double k) {
  RequireTag(ctx, ct.tag, "CkksMulPlainScalar");
  if (!std::isfinite(k)) throw CryptoError("CkksMulPlainScalar: scalar is not finite");
  const int new_scale = ct.scale_bits + ctx.scale_bits();
  if (new_scale + 8 > ctx.log2q() - 1) {
    throw CryptoError("CkksMulPlainScalar: scale 2^" + std::to_string(new_scale) +
                      " leaves no headroom below q (log2 q = " + std::to_string(ctx.log2q()) + ")");
  }
  const double scaled = std::nearbyint(std::ldexp(k, ctx.scale_bits()));
  if (!(std::abs(scaled) < std::ldexp(1.0, 62))) {
    throw CryptoError("CkksMulPlainScalar: scalar too large");
  }
  const auto factor = static_cast<int64_t>(scaled);
  CkksCiphertext out = ct;
  out.scale_bits = new_scale;
  const size_t n = static_cast<size_t>(ctx.poly_degree());
  for (size_t i = 0; i < ctx.primes().size(); ++i) {
    const uint64_t p = ctx.primes()[i];
    const uint64_t f = ReduceSigned(factor, p);
    const uint64_t f_shoup = ShoupPrecompute(f, p);
    for (size_t j = i * n; j < (i + 1) * n; ++j) {
      out.c0[j] = MulShoup(out.c0[j], f, f_shoup, p);
      out.c1[j] = MulShoup(out.c1[j], f, f_shoup, p);
    }
  }
  return out;
}

size_t CkksSerializedSize(const CkksContext& ctx) {
  const size_t width = static_cast<size_t>((ctx.log2q() + 7) / 8);
  return 8 + 2 * width * static_cast<size_t>(ctx.poly_degree());
}

std::vector<uint8_t> CkksSerialize(const CkksContext& ctx, const CkksCiphertext& ct) {
  RequireTag(ctx, ct.tag, "CkksSerialize");
  const size_t width = static_cast<size_t>((ctx.log2q() + 7) / 8);
  std::vector<uint8_t> out;
  out.reserve(CkksSerializedSize(ctx));
  AppendBigEndian(static_cast<uint64_t>(ctx.poly_degree()), 4, out);
  AppendBigEndian(static_cast<uint64_t>(ctx.log2q()), 2, out);
  AppendBigEndian(static_cast<uint64_t>(ct.scale_bits), 2, out);
  for (const auto* poly : {&ct.c0, &ct.c1}) {
    for (mpz_class v : ctx.ToCentered(*poly)) {
      if (v < 0) v += ctx.modulus();
      std::vector<uint8_t> mag = ToBytes(v);
      out.insert(out.end(), width - mag.size(), 0);
      out.insert(out.end(), mag.begin(), mag.end());
    }
  }
  return out;
}

CkksCiphertext CkksDeserialize(const CkksContext& ctx, std::span<const uint8_t> bytes) {
  if (bytes.size() < 8) throw CryptoError("CkksDeserialize: truncated header");
  auto read = [&](size_t off, int len) {
    uint64_t v = 0;
    for (int i = 0; i < len; ++i) v = (v << 8) | bytes[off + i];
    return v;
  };
  if (read(0, 4) != static_cast<uint64_t>(ctx.poly_degree()) ||
      read(4, 2) != static_cast<uint64_t>(ctx.log2q())) {
    throw CryptoError("CkksDeserialize: header does not match the context");
  }
  if (bytes.size() != CkksSerializedSize(ctx)) {
    throw CryptoError("CkksDeserialize: expected " + std::to_string(CkksSerializedSize(ctx)) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  CkksCiphertext ct;
  ct.tag = ctx.tag();
  ct.scale_bits = static_cast<int>(read(6, 2));
  const size_t n = static_cast<size_t>(ctx.poly_degree());
  const size_t width = static_cast<size_t>((ctx.log2q() + 7) / 8);
  size_t off = 8;
  for (auto* poly : {&ct.c0, &ct.c1}) {
    poly->resize(ctx.primes().size() * n);
    for (size_t j = 0; j < n; ++j, off += width) {
      const mpz_class v = FromBytes(bytes.subspan(off, width));
      if (v >= ctx.modulus()) throw CryptoError("CkksDeserialize: coefficient not reduced mod q");
      for (size_t i = 0; i < ctx.primes().size(); ++i) {
        (*poly)[i * n + j] = mpz_fdiv_ui(v.get_mpz_t(), static_cast<unsigned long>(ctx.primes()[i]));
      }
    }
  }
  return ct;
}

std::vector<CkksCiphertext> CkksEncryptVector(const CkksContext& ctx, const CkksPublicKey& pk,
                                              std::span<const double> values, uint64_t seed,
                                              int workers) {
  const size_t slots = static_cast<size_t>(ctx.slots());
  const size_t chunks = (values.size() + slots - 1) / slots;
  std::vector<CkksCiphertext> out(chunks);
  ParallelFor(chunks, workers, [&](size_t c) {
    const size_t first = c * slots;
    const size_t len = std::min(slots, values.size() - first);
    out[c] = CkksEncrypt(ctx, pk, CkksEncode(ctx, values.subspan(first, len)),
                         DeriveSeed(seed, 0xc4a2, c));
  });
  return out;
}

std::vector<double> CkksDecryptVector(const CkksContext& ctx, const CkksSecretKey& sk,
                                      std::span<const CkksCiphertext> cts, size_t length) {
  const size_t slots = static_cast<size_t>(ctx.slots());
  if (length > cts.size() * slots) throw CryptoError("CkksDecryptVector: not enough ciphertexts");
  std::vector<double> out;
  out.reserve(length);
  for (const CkksCiphertext& ct : cts) {
    if (out.size() >= length) break;
    std::vector<double> v = CkksDecode(ctx, CkksDecrypt(ctx, sk, ct));
    const size_t take = std::min(slots, length - out.size());
    out.insert(out.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

}  // namespace flpl::crypto
