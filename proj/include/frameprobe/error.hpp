#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace frameprobe {

enum class Errc {
  ParseError,
  DuplicateId,
  MissingAsset,
  MissingDate,
  CapabilityUnsupported,
  AuthMissing,
  TransportFailure,
  BackendRefusal,
  ProfileIncomplete,
  DecodeError,
  InvalidRequest,
  MissingCaption,
  InsufficientPool,
  EmptyInput,
  KeyMismatch,
  InvalidDistribution,
  InvalidAlpha,
  PartialVectorsRejected,
  InvalidParam,
  NoCovariateData,
  MissingArtifacts,
  ConfigError,
};

std::string_view to_string(Errc code);

/// Single exception type for the toolkit; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Process exit status for a failure class (CLI contract: nonzero, stable per class).
int exit_code(Errc code);

}  // namespace frameprobe
