#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qbsde {

enum class ErrorCode {
  InvalidArgument,
  EmptyDomain,
  NonIntegrable,
  OutOfDomain,
  OutOfRange,
  CertificateFailed,
  LevelOutOfRange,
  FixedPointDiverged,
  StepTooCoarse,
  ObstacleAboveTerminal,
  DomainEscape,
  TreeTooLarge,
  CflViolation,
  NonConvergence,
  HypothesisFailed,
  ConfigInvalid,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::NonIntegrable: return "NonIntegrable";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::CertificateFailed: return "CertificateFailed";
    case ErrorCode::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::FixedPointDiverged: return "FixedPointDiverged";
    case ErrorCode::StepTooCoarse: return "StepTooCoarse";
    case ErrorCode::ObstacleAboveTerminal: return "ObstacleAboveTerminal";
    case ErrorCode::DomainEscape: return "DomainEscape";
    case ErrorCode::TreeTooLarge: return "TreeTooLarge";
    case ErrorCode::CflViolation: return "CflViolation";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::HypothesisFailed: return "HypothesisFailed";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

/// Solver error carrying the owning module and a machine-readable code.
/// `qualified_name()` gives e.g. "bsde::DomainEscape".
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(module) + "::" +
                           std::string(error_name(code)) + ": " + what),
        module_(module),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }
  std::string qualified_name() const {
    return module_ + "::" + std::string(error_name(code_));
  }

 private:
  std::string module_;
  ErrorCode code_;
};

}  // namespace qbsde
