#include "lma/error.hpp"

namespace lma {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedModule: return "MalformedModule";
    case Errc::MultiMemory: return "MultiMemory";
    case Errc::AlreadyInstrumented: return "AlreadyInstrumented";
    case Errc::TruncatedStream: return "TruncatedStream";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::MalformedToken: return "MalformedToken";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::Truncated: return "Truncated";
    case Errc::MissingHookImport: return "MissingHookImport";
    case Errc::SinkUnavailable: return "SinkUnavailable";
    case Errc::GuestTrap: return "GuestTrap";
    case Errc::LinkError: return "LinkError";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::UnknownLayerKind: return "UnknownLayerKind";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::ModelLoadError: return "ModelLoadError";
    case Errc::OutOfOrder: return "OutOfOrder";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::SourceUnavailable: return "SourceUnavailable";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::RunFailure: return "RunFailure";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::BaselineFailure: return "BaselineFailure";
    case Errc::Io: return "Io";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace lma
