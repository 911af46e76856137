#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace arbor {

/// Failure categories raised by the library. Names are stable and appear in
/// machine-readable error output.
enum class Errc {
  NonPositiveDepth,
  RayParallelToPlane,
  CoincidentCenters,
  DegenerateConfiguration,
  NoConvergence,
  DimensionMismatch,
  TooFewFrames,
  EmptySeries,
  InvalidAnnotation,
  ImageTooSmall,
  EmptyImage,
  InsufficientPoints,
  NotAligned,
  InvalidParams,
  EmptyMask,
  NoFlowAtPoint,
  ConeMismatch,
  ZeroFlow,
  NoFlowAtStart,
  DegenerateRays,
  NoObservations,
  CycleDetected,
  CyclicInput,
  InvalidTopology,
  EmptyCloud,
  InconsistentPose,
  UnknownId,
  Io,
  Parse,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace arbor
