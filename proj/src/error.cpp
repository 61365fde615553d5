#include "frameprobe/error.hpp"

namespace frameprobe {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::ParseError: return "ParseError";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MissingAsset: return "MissingAsset";
    case Errc::MissingDate: return "MissingDate";
    case Errc::CapabilityUnsupported: return "CapabilityUnsupported";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::TransportFailure: return "TransportFailure";
    case Errc::BackendRefusal: return "BackendRefusal";
    case Errc::ProfileIncomplete: return "ProfileIncomplete";
    case Errc::DecodeError: return "DecodeError";
    case Errc::InvalidRequest: return "InvalidRequest";
    case Errc::MissingCaption: return "MissingCaption";
    case Errc::InsufficientPool: return "InsufficientPool";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::KeyMismatch: return "KeyMismatch";
    case Errc::InvalidDistribution: return "InvalidDistribution";
    case Errc::InvalidAlpha: return "InvalidAlpha";
    case Errc::PartialVectorsRejected: return "PartialVectorsRejected";
    case Errc::InvalidParam: return "InvalidParam";
    case Errc::NoCovariateData: return "NoCovariateData";
    case Errc::MissingArtifacts: return "MissingArtifacts";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

int exit_code(Errc code) {
  // 1 is reserved for generic failures, 2 for usage errors (CLI11).
  return 10 + static_cast<int>(code);
}

}  // namespace frameprobe
