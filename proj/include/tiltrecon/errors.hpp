#pragma once

#include <stdexcept>
#include <string>

namespace tiltrecon {

/// Precondition violation on numeric or structural input.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// k-space evaluation at or beyond the propagating-band edge.
struct BandEdgeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Autofocus input has no usable sharpness signal.
struct NoFocusSignal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cross-correlation peak cannot be distinguished from a competitor.
struct PeakAmbiguity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tilt-estimation windows too close together (or otherwise unusable).
struct DegenerateGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed manifest or field sidecar.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Manifest is well-formed but inconsistent with the files on disk.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tiltrecon
