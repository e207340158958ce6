#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lma {

/// Error categories raised by the toolkit. Each maps to a named failure
/// in one module's contract so callers (and tests) can branch on it.
enum class Errc {
  // wasm-instrument
  MalformedModule,
  MultiMemory,
  AlreadyInstrumented,
  // snapshot-codec
  TruncatedStream,
  LengthMismatch,
  MalformedToken,
  BadMagic,
  UnsupportedVersion,
  ChecksumMismatch,
  Truncated,
  // attester
  MissingHookImport,
  SinkUnavailable,
  GuestTrap,
  // runtime
  LinkError,
  // inference
  ShapeMismatch,
  UnknownLayerKind,
  BackendUnavailable,
  ModelLoadError,
  // verdict
  OutOfOrder,
  InsufficientData,
  InvalidConfig,
  // verifier
  SourceUnavailable,
  // dataset / eval / bench
  EmptyCorpus,
  RunFailure,
  EmptySplit,
  BaselineFailure,
  // generic
  Io,
  InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace lma
