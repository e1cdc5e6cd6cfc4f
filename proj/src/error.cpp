#include "trapdoor/error.hpp"

namespace trapdoor {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::Truncated: return "Truncated";
    case Errc::NotTcp: return "NotTcp";
    case Errc::BadOffset: return "BadOffset";
    case Errc::UnsupportedLinkType: return "UnsupportedLinkType";
    case Errc::Fragment: return "Fragment";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedRecord: return "TruncatedRecord";
    case Errc::NonCanonical: return "NonCanonical";
    case Errc::ChunkOutOfRange: return "ChunkOutOfRange";
    case Errc::CapacityExceeded: return "CapacityExceeded";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::PrimeSearchFailed: return "PrimeSearchFailed";
    case Errc::KeyOutOfRange: return "KeyOutOfRange";
    case Errc::NonceOutOfRange: return "NonceOutOfRange";
    case Errc::DegenerateK: return "DegenerateK";
    case Errc::ChunkTooLarge: return "ChunkTooLarge";
    case Errc::ChunkZero: return "ChunkZero";
    case Errc::NotInvertible: return "NotInvertible";
    case Errc::BadVersion: return "BadVersion";
    case Errc::EmptyLearningStream: return "EmptyLearningStream";
    case Errc::UnknownSymptom: return "UnknownSymptom";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace trapdoor
