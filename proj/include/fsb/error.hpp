#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fsb {

enum class Errc {
  // feature_store
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  TrailingData,
  NonFiniteValue,
  LabelCountMismatch,
  RowCountMismatch,
  LabelOrderMismatch,
  IndexOutOfRange,
  UnknownMember,
  DimMismatch,
  UnknownClass,
  DuplicateName,
  IoError,
  ManifestInvalid,
  // episodes
  InvalidSpec,
  NotEnoughClasses,
  ClassTooSmall,
  EmptyInput,
  // classifier
  NonFiniteInput,
  ShapeMismatch,
  LabelOutOfRange,
  DegenerateInput,
  InvalidConfig,
  // ensembles
  NotAProbability,
  InvalidMethod,
  // analysis
  HasHiddenLayer,
  ConstantInput,
  LengthMismatch,
  UniverseMismatch,
  // tuning
  ValidationEqualsTest,
  UnknownMethod,
  UnknownWays,
  // reporting
  EmptyReport,
  ParseError,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::TrailingData: return "TrailingData";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::LabelCountMismatch: return "LabelCountMismatch";
    case Errc::RowCountMismatch: return "RowCountMismatch";
    case Errc::LabelOrderMismatch: return "LabelOrderMismatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::UnknownMember: return "UnknownMember";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::UnknownClass: return "UnknownClass";
    case Errc::DuplicateName: return "DuplicateName";
    case Errc::IoError: return "IoError";
    case Errc::ManifestInvalid: return "ManifestInvalid";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::NotEnoughClasses: return "NotEnoughClasses";
    case Errc::ClassTooSmall: return "ClassTooSmall";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NotAProbability: return "NotAProbability";
    case Errc::InvalidMethod: return "InvalidMethod";
    case Errc::HasHiddenLayer: return "HasHiddenLayer";
    case Errc::ConstantInput: return "ConstantInput";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UniverseMismatch: return "UniverseMismatch";
    case Errc::ValidationEqualsTest: return "ValidationEqualsTest";
    case Errc::UnknownMethod: return "UnknownMethod";
    case Errc::UnknownWays: return "UnknownWays";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code and
/// a message naming the offending offset, row, member or value.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace fsb
