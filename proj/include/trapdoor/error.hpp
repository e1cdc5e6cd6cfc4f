#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trapdoor {

enum class Errc {
  // packet model
  Truncated,
  NotTcp,
  BadOffset,
  UnsupportedLinkType,
  Fragment,
  InvariantViolation,
  BadMagic,
  TruncatedRecord,
  // covert tcp
  NonCanonical,
  ChunkOutOfRange,
  CapacityExceeded,
  LengthMismatch,
  // dsa
  PrimeSearchFailed,
  KeyOutOfRange,
  NonceOutOfRange,
  DegenerateK,
  ChunkTooLarge,
  ChunkZero,
  NotInvertible,
  BadVersion,
  // engine / harness
  EmptyLearningStream,
  UnknownSymptom,
  ConfigError,
  IoError,
};

std::string_view to_string(Errc code) noexcept;

/// Exception carrying a machine-checkable error class alongside the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace trapdoor
