#pragma once

#include "lma/wasm/module.hpp"

namespace lma::wasm {

/// Validates a decoded module under the supported feature set: MVP plus
/// sign-extension, saturating float-to-int, multi-value block types,
/// mutable-global imports and bulk memory. Reference-type instructions in
/// function bodies are rejected. Throws Error(Errc::MalformedModule).
void validate(const Module& m);

/// Decode + validate in one step.
Module decode_and_validate(ByteView bytes);

}  // namespace lma::wasm
