#pragma once

#include <stdexcept>
#include <string>

namespace sgc {

/// Failure categories surfaced by the library. The CLI maps these to
/// process exit codes (data vs provider errors).
enum class Errc {
  // vector / matrix primitives
  ZeroVector,
  DimMismatch,
  NonFiniteValue,
  // feature aggregation
  InvalidSigma,
  PartitionOutOfRange,
  // prompting and providers
  MissingSlot,
  FixtureMiss,
  HttpTimeout,
  HttpBadStatus,
  MalformedResponse,
  BadEndpoint,
  UnknownDescription,
  EmptyInput,
  // hierarchy construction
  BadK,
  DuplicateClass,
  EmptyHierarchy,
  // matching and evaluation
  InvalidBox,
  UnknownCategory,
  NonFiniteCost,
  BadGamma,
  EmptyGroundTruth,
  // file handling
  ParseError,
  IoError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::InvalidSigma: return "InvalidSigma";
    case Errc::PartitionOutOfRange: return "PartitionOutOfRange";
    case Errc::MissingSlot: return "MissingSlot";
    case Errc::FixtureMiss: return "FixtureMiss";
    case Errc::HttpTimeout: return "HttpTimeout";
    case Errc::HttpBadStatus: return "HttpBadStatus";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::BadEndpoint: return "BadEndpoint";
    case Errc::UnknownDescription: return "UnknownDescription";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::BadK: return "BadK";
    case Errc::DuplicateClass: return "DuplicateClass";
    case Errc::EmptyHierarchy: return "EmptyHierarchy";
    case Errc::InvalidBox: return "InvalidBox";
    case Errc::UnknownCategory: return "UnknownCategory";
    case Errc::NonFiniteCost: return "NonFiniteCost";
    case Errc::BadGamma: return "BadGamma";
    case Errc::EmptyGroundTruth: return "EmptyGroundTruth";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Backend failures (LLM endpoint, fixture, embedding table) get a
/// distinct exit code in the CLI.
inline bool is_provider_error(Errc c) {
  switch (c) {
    case Errc::FixtureMiss:
    case Errc::HttpTimeout:
    case Errc::HttpBadStatus:
    case Errc::MalformedResponse:
    case Errc::BadEndpoint:
    case Errc::UnknownDescription:
      return true;
    default:
      return false;
  }
}

}  // namespace sgc
