#pragma once

#include <gmpxx.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trapdoor/error.hpp"
#include "trapdoor/packet.hpp"
#include "trapdoor/rng.hpp"

// DSA with the two subliminal trapdoors: a covert-chosen nonce and a
// covert-replaced key pair. Anyone holding x recovers k from (h, r, s).
namespace trapdoor::dsa {

using BigInt = mpz_class;

struct DomainParams {
  BigInt p;
  BigInt q;
  BigInt g;

  std::size_t q_bits() const { return mpz_sizeinbase(q.get_mpz_t(), 2); }
  std::size_t q_bytes() const { return (q_bits() + 7) / 8; }
  /// Throws InvariantViolation unless q | p-1, g^q = 1 mod p and g != 1.
  void validate() const;

  friend bool operator==(const DomainParams&, const DomainParams&) = default;
};

struct ParamSpec {
  bool toy = true;
  unsigned l_bits = 0;
  unsigned n_bits = 0;

  static ParamSpec toy_params() { return {}; }
  static ParamSpec standard(unsigned l, unsigned n) { return {false, l, n}; }
  /// "toy" or "L,N" such as "1024,160".
  static ParamSpec parse(const std::string& text);
};

enum class KeyProvenance { SystemGenerated, CovertReplaced };
std::string to_string(KeyProvenance p);

struct KeyPair {
  BigInt x;
  BigInt y;
  KeyProvenance provenance = KeyProvenance::SystemGenerated;
};

struct Signature {
  BigInt r;
  BigInt s;
  friend bool operator==(const Signature&, const Signature&) = default;
};

/// Toy parameters are the fixed (23, 11, 4). Standard sizes must be one of
/// (1024,160), (2048,224), (2048,256). Throws PrimeSearchFailed or ConfigError.
DomainParams generate_params(const ParamSpec& param_spec, Rng& rng);

/// Draws x uniformly from [1, q-1] unless covert_x is given. Throws
/// KeyOutOfRange for a covert key outside [1, q-1].
KeyPair keygen(const DomainParams& params, Rng& rng, const std::optional<BigInt>& covert_x = std::nullopt);

/// Key schedule for covert-replaced keys: big-endian bytes mod q.
BigInt covert_key_from_bytes(ByteView bytes, const DomainParams& params);

/// r = (g^k mod p) mod q, s = k^-1 (h + x r) mod q. Throws NonceOutOfRange
/// for k outside [1, q-1] and DegenerateK when r or s is zero.
Signature sign(const DomainParams& params, const KeyPair& key, const BigInt& h, const BigInt& k);

bool verify(const DomainParams& params, const BigInt& y, const BigInt& h, const Signature& sig);

/// The nonce is the chunk itself read big-endian. Throws ChunkZero or
/// ChunkTooLarge.
BigInt embed_subliminal(ByteView chunk, const DomainParams& params);

/// k = s^-1 (h + x r) mod q. Throws NotInvertible.
BigInt extract_subliminal(const DomainParams& params, const Signature& sig, const BigInt& h, const BigInt& x);

/// SHA-256 of message, truncated to the leftmost N bits of q, reduced mod q.
BigInt hash_to_scalar(ByteView message, const DomainParams& params);

BigInt from_bytes(ByteView bytes);
/// Fixed-width big-endian. Throws InvariantViolation when value needs more.
Bytes to_bytes(const BigInt& value, std::size_t width);
/// Uniform in [0, bound).
BigInt random_below(Rng& rng, const BigInt& bound);
BigInt random_bits(Rng& rng, std::size_t bits);

// --- Payload record framing ---------------------------------------------
// "SSLR" | version 0x01 | q_len (u16 BE) | h | r | s, each q_len bytes BE.

inline constexpr std::uint8_t kRecordVersion = 0x01;
inline constexpr std::size_t kRecordHeader = 7;

struct SignedDigest {
  BigInt h;
  Signature sig;
  friend bool operator==(const SignedDigest&, const SignedDigest&) = default;
};

Bytes encode_record(const BigInt& h, const Signature& sig, const DomainParams& params);

/// Decodes one record at the start of bytes. Throws BadMagic, BadVersion or
/// TruncatedRecord. `consumed` receives the record length.
SignedDigest decode_record(ByteView bytes, std::size_t* consumed = nullptr);

struct RecordFault {
  std::size_t offset;
  Errc error;
};

struct FoundRecord {
  std::size_t offset;
  std::size_t q_len;
  SignedDigest record;
};

struct RecordScan {
  std::vector<FoundRecord> records;
  std::vector<RecordFault> faults;
};

/// Scans a payload for record magic and decodes every record found, in
/// order. Faults are collected instead of thrown.
RecordScan scan_records(ByteView payload);

// --- Warden key file -----------------------------------------------------
// Text lines p=, q=, g=, y= and optionally x= (decimal), plus an optional
// provenance=system|covert.

struct WardenKey {
  DomainParams params;
  BigInt y;
  std::optional<BigInt> x;
  std::optional<KeyProvenance> provenance;
};

WardenKey parse_warden_key(std::string_view text, const std::string& origin = "<key>");
std::string format_warden_key(const WardenKey& key);
WardenKey read_warden_key(const std::filesystem::path& path);
void write_warden_key(const WardenKey& key, const std::filesystem::path& path);

}  // namespace trapdoor::dsa
