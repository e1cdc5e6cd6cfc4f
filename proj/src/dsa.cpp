#include "trapdoor/dsa.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <array>
#include <fstream>

#include "trapdoor/config.hpp"

namespace trapdoor::dsa {

namespace {

constexpr std::array<std::uint8_t, 4> kRecordMagic{0x53, 0x53, 0x4C, 0x52};
constexpr int kPrimeReps = 40;

bool is_probable_prime(const BigInt& n) { return mpz_probab_prime_p(n.get_mpz_t(), kPrimeReps) != 0; }

BigInt powm(const BigInt& base, const BigInt& exp, const BigInt& mod) {
  BigInt out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return out;
}

std::optional<BigInt> invert(const BigInt& a, const BigInt& mod) {
  BigInt out;
  if (mpz_invert(out.get_mpz_t(), a.get_mpz_t(), mod.get_mpz_t()) == 0) return std::nullopt;
  return out;
}

BigInt mod(const BigInt& a, const BigInt& m) {
  BigInt out;
  mpz_mod(out.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t());
  return out;
}

BigInt parse_decimal(const std::string& text, const std::string& what) {
  BigInt v;
  if (text.empty() || v.set_str(text, 10) != 0 || v < 0)
    throw Error(Errc::ConfigError, what + " is not a non-negative decimal integer");
  return v;
}

}  // namespace

void DomainParams::validate() const {
  if (q < 2 || p < 3) throw Error(Errc::InvariantViolation, "p and q must be primes");
  if (mod(p - 1, q) != 0) throw Error(Errc::InvariantViolation, "q divides p-1");
  if (g <= 1 || g >= p) throw Error(Errc::InvariantViolation, "1 < g < p");
  if (powm(g, q, p) != 1) throw Error(Errc::InvariantViolation, "g^q mod p == 1");
}

ParamSpec ParamSpec::parse(const std::string& text) {
  if (text == "toy") return toy_params();
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw Error(Errc::ConfigError, "DSA sizes must be 'toy' or 'L,N'");
  try {
    return standard(static_cast<unsigned>(std::stoul(text.substr(0, comma))),
                    static_cast<unsigned>(std::stoul(text.substr(comma + 1))));
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, "bad DSA sizes '" + text + "'");
  }
}

std::string to_string(KeyProvenance p) {
  return p == KeyProvenance::CovertReplaced ? "covert" : "system";
}

BigInt from_bytes(ByteView bytes) {
  BigInt v;
  if (!bytes.empty()) mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return v;
}

Bytes to_bytes(const BigInt& value, std::size_t width) {
  if (value < 0) throw Error(Errc::InvariantViolation, "negative integer");
  const std::size_t needed = value == 0 ? 0 : (mpz_sizeinbase(value.get_mpz_t(), 2) + 7) / 8;
  if (needed > width) throw Error(Errc::InvariantViolation, "integer wider than " + std::to_string(width) + " bytes");
  Bytes out(width, 0);
  std::size_t written = 0;
  if (needed > 0) mpz_export(out.data() + (width - needed), &written, 1, 1, 1, 0, value.get_mpz_t());
  return out;
}

BigInt random_bits(Rng& rng, std::size_t bits) {
  Bytes buf = rng.bytes((bits + 7) / 8);
  if (bits % 8 != 0 && !buf.empty()) buf[0] &= static_cast<std::uint8_t>((1u << (bits % 8)) - 1);
  return from_bytes(buf);
}

BigInt random_below(Rng& rng, const BigInt& bound) {
  const std::size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
  BigInt v;
  do {
    v = random_bits(rng, bits);
  } while (v >= bound);
  return v;
}

DomainParams generate_params(const ParamSpec& param_spec, Rng& rng) {
  if (param_spec.toy) return {23, 11, 4};

  const unsigned l = param_spec.l_bits;
  const unsigned n = param_spec.n_bits;
  const bool allowed = (l == 1024 && n == 160) || (l == 2048 && n == 224) || (l == 2048 && n == 256);
  if (!allowed) throw Error(Errc::ConfigError, "unsupported DSA sizes (" + std::to_string(l) + "," + std::to_string(n) + ")");

  const BigInt q_top = BigInt(1) << (n - 1);
  BigInt q;
  bool found_q = false;
  for (unsigned attempt = 0; attempt < 100 * n && !found_q; ++attempt) {
    q = random_bits(rng, n) | q_top | 1;
    found_q = is_probable_prime(q);
  }
  if (!found_q) throw Error(Errc::PrimeSearchFailed, "no " + std::to_string(n) + "-bit prime q");

  const BigInt p_top = BigInt(1) << (l - 1);
  const BigInt two_q = 2 * q;
  for (unsigned counter = 0; counter < 4 * l; ++counter) {
    BigInt x = random_bits(rng, l) | p_top;
    BigInt p = x - (mod(x, two_q) - 1);
    if (p < p_top || !is_probable_prime(p)) continue;

    const BigInt e = (p - 1) / q;
    for (BigInt h = 2; h < p - 1; ++h) {
      BigInt g = powm(h, e, p);
      if (g != 1) {
        DomainParams params{p, q, g};
        params.validate();
        return params;
      }
    }
  }
  throw Error(Errc::PrimeSearchFailed, "no " + std::to_string(l) + "-bit prime p after " + std::to_string(4 * l) + " candidates");
}

KeyPair keygen(const DomainParams& params, Rng& rng, const std::optional<BigInt>& covert_x) {
  KeyPair key;
  if (covert_x) {
    if (*covert_x < 1 || *covert_x > params.q - 1) throw Error(Errc::KeyOutOfRange, "covert key outside [1, q-1]");
    key.x = *covert_x;
    key.provenance = KeyProvenance::CovertReplaced;
  } else {
    key.x = 1 + random_below(rng, params.q - 1);
    key.provenance = KeyProvenance::SystemGenerated;
  }
  key.y = powm(params.g, key.x, params.p);
  return key;
}

BigInt covert_key_from_bytes(ByteView bytes, const DomainParams& params) {
  BigInt x = mod(from_bytes(bytes), params.q);
  if (x == 0) throw Error(Errc::KeyOutOfRange, "covert key bytes reduce to zero mod q");
  return x;
}

Signature sign(const DomainParams& params, const KeyPair& key, const BigInt& h, const BigInt& k) {
  if (k < 1 || k > params.q - 1) throw Error(Errc::NonceOutOfRange, "nonce outside [1, q-1]");
  Signature sig;
  sig.r = mod(powm(params.g, k, params.p), params.q);
  if (sig.r == 0) throw Error(Errc::DegenerateK, "r == 0");
  const BigInt k_inv = *invert(k, params.q);  // q prime, k in range
  sig.s = mod(k_inv * (mod(h, params.q) + key.x * sig.r), params.q);
  if (sig.s == 0) throw Error(Errc::DegenerateK, "s == 0");
  return sig;
}

bool verify(const DomainParams& params, const BigInt& y, const BigInt& h, const Signature& sig) {
  const BigInt& q = params.q;
  if (sig.r < 1 || sig.r >= q || sig.s < 1 || sig.s >= q) return false;
  if (y < 1 || y >= params.p) return false;
  const auto w = invert(sig.s, q);
  if (!w) return false;
  const BigInt u1 = mod(mod(h, q) * *w, q);
  const BigInt u2 = mod(sig.r * *w, q);
  const BigInt v = mod(mod(powm(params.g, u1, params.p) * powm(y, u2, params.p), params.p), q);
  return v == sig.r;
}

BigInt embed_subliminal(ByteView chunk, const DomainParams& params) {
  BigInt k = from_bytes(chunk);
  if (k == 0) throw Error(Errc::ChunkZero, "chunk value is zero");
  if (k >= params.q) throw Error(Errc::ChunkTooLarge, "chunk value >= q");
  return k;
}

BigInt extract_subliminal(const DomainParams& params, const Signature& sig, const BigInt& h, const BigInt& x) {
  const auto w = invert(sig.s, params.q);
  if (!w) throw Error(Errc::NotInvertible, "s has no inverse mod q");
  return mod(*w * (mod(h, params.q) + x * sig.r), params.q);
}

BigInt hash_to_scalar(ByteView message, const DomainParams& params) {
  std::array<std::uint8_t, SHA256_DIGEST_LENGTH> digest{};
  SHA256(message.data(), message.size(), digest.data());
  BigInt z = from_bytes(digest);
  const std::size_t n = params.q_bits();
  if (n < 8 * digest.size()) z >>= static_cast<mp_bitcnt_t>(8 * digest.size() - n);
  return mod(z, params.q);
}

Bytes encode_record(const BigInt& h, const Signature& sig, const DomainParams& params) {
  const std::size_t q_len = params.q_bytes();
  Bytes out(kRecordMagic.begin(), kRecordMagic.end());
  out.push_back(kRecordVersion);
  out.push_back(static_cast<std::uint8_t>(q_len >> 8));
  out.push_back(static_cast<std::uint8_t>(q_len));
  for (const BigInt* v : {&h, &sig.r, &sig.s}) {
    const Bytes b = to_bytes(*v, q_len);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

SignedDigest decode_record(ByteView bytes, std::size_t* consumed) {
  if (bytes.size() < kRecordMagic.size() || !std::equal(kRecordMagic.begin(), kRecordMagic.end(), bytes.begin()))
    throw Error(Errc::BadMagic, "record does not start with SSLR");
  if (bytes.size() < kRecordHeader) throw Error(Errc::TruncatedRecord, "record header");
  if (bytes[4] != kRecordVersion) throw Error(Errc::BadVersion, "record version " + std::to_string(bytes[4]));
  const std::size_t q_len = (std::size_t{bytes[5]} << 8) | bytes[6];
  const std::size_t total = kRecordHeader + 3 * q_len;
  if (bytes.size() < total) throw Error(Errc::TruncatedRecord, "record body shorter than 3*q_len");
  SignedDigest rec;
  rec.h = from_bytes(bytes.subspan(kRecordHeader, q_len));
  rec.sig.r = from_bytes(bytes.subspan(kRecordHeader + q_len, q_len));
  rec.sig.s = from_bytes(bytes.subspan(kRecordHeader + 2 * q_len, q_len));
  if (consumed) *consumed = total;
  return rec;
}

RecordScan scan_records(ByteView payload) {
  RecordScan scan;
  std::size_t pos = 0;
  while (pos < payload.size()) {
    auto it = std::search(payload.begin() + static_cast<std::ptrdiff_t>(pos), payload.end(), kRecordMagic.begin(),
                          kRecordMagic.end());
    if (it == payload.end()) break;
    const std::size_t offset = static_cast<std::size_t>(it - payload.begin());
    try {
      std::size_t used = 0;
      SignedDigest rec = decode_record(payload.subspan(offset), &used);
      scan.records.push_back({offset, (used - kRecordHeader) / 3, std::move(rec)});
      pos = offset + used;
    } catch (const Error& e) {
      scan.faults.push_back({offset, e.code()});
      if (e.code() == Errc::TruncatedRecord) break;
      pos = offset + kRecordMagic.size();
    }
  }
  return scan;
}

WardenKey parse_warden_key(std::string_view text, const std::string& origin) {
  const auto kv = KeyValueFile::parse(text, origin);
  kv.reject_unknown({"p", "q", "g", "x", "y", "provenance"});
  WardenKey key;
  key.params.p = parse_decimal(kv.require("p"), origin + ": p");
  key.params.q = parse_decimal(kv.require("q"), origin + ": q");
  key.params.g = parse_decimal(kv.require("g"), origin + ": g");
  key.y = parse_decimal(kv.require("y"), origin + ": y");
  if (auto x = kv.get("x")) key.x = parse_decimal(*x, origin + ": x");
  if (auto prov = kv.get("provenance")) {
    if (*prov == "covert")
      key.provenance = KeyProvenance::CovertReplaced;
    else if (*prov == "system")
      key.provenance = KeyProvenance::SystemGenerated;
    else
      throw Error(Errc::ConfigError, origin + ": provenance must be system or covert");
  }
  try {
    key.params.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, origin + ": invalid domain parameters (" + e.what() + ")");
  }
  if (key.x && powm(key.params.g, *key.x, key.params.p) != key.y)
    throw Error(Errc::ConfigError, origin + ": y != g^x mod p");
  return key;
}

std::string format_warden_key(const WardenKey& key) {
  std::string out;
  out += "p=" + key.params.p.get_str() + "\n";
  out += "q=" + key.params.q.get_str() + "\n";
  out += "g=" + key.params.g.get_str() + "\n";
  if (key.x) out += "x=" + key.x->get_str() + "\n";
  out += "y=" + key.y.get_str() + "\n";
  if (key.provenance) out += "provenance=" + to_string(*key.provenance) + "\n";
  return out;
}

WardenKey read_warden_key(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_warden_key(text, path.string());
}

void write_warden_key(const WardenKey& key, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << format_warden_key(key);
}

}  // namespace trapdoor::dsa
