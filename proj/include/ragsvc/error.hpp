#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ragsvc {

enum class ErrorCode {
  FileNotFound,
  DecodeError,
  NetworkError,
  ContentTypeError,
  ParseError,
  InvalidConfig,
  EmptyInput,
  ProviderError,
  Timeout,
  MalformedResponse,
  DimensionMismatch,
  ZeroVector,
  EmptyStore,
  StaleCandidate,
  IoError,
  FormatError,
  VersionError,
  BudgetExhausted,
  PlaceholderMissing,
  MissingSecret,
  ValidationError,
  NotFound,
  BadRequest,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the engine. `stage` names the pipeline step that
/// failed ("retrieve", "assemble", "render", "chat", "ingest", ...), empty when
/// the error did not pass through the chain. `status` carries an HTTP status
/// for network and provider failures, 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int status = 0)
      : std::runtime_error(message), code_(code), status_(status) {}

  ErrorCode code() const noexcept { return code_; }
  int status() const noexcept { return status_; }
  const std::string& stage() const noexcept { return stage_; }

  Error& with_stage(std::string stage) {
    stage_ = std::move(stage);
    return *this;
  }

 private:
  ErrorCode code_;
  int status_;
  std::string stage_;
};

}  // namespace ragsvc
