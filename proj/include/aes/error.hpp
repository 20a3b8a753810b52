#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aes {

enum class ErrorCode {
  InvalidArgument,
  MalformedRow,
  UnknownPrompt,
  ScoreOutOfRange,
  EmptyInput,
  ValueOutOfRange,
  EmptyCorpus,
  InvalidLength,
  IndexOutOfBounds,
  ShapeMismatch,
  NonFiniteActivation,
  MissingCache,
  UnknownGenre,
  EmptyEssay,
  DivergedLoss,
  CorruptCheckpoint,
  VersionMismatch,
  EmptySet,
  TemplateMismatch,
  Timeout,
  RemoteError,
  MalformedReply,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace aes
