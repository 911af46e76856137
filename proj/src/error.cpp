#include "arbor/error.hpp"

namespace arbor {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::NonPositiveDepth: return "NonPositiveDepth";
    case Errc::RayParallelToPlane: return "RayParallelToPlane";
    case Errc::CoincidentCenters: return "CoincidentCenters";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::TooFewFrames: return "TooFewFrames";
    case Errc::EmptySeries: return "EmptySeries";
    case Errc::InvalidAnnotation: return "InvalidAnnotation";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::EmptyImage: return "EmptyImage";
    case Errc::InsufficientPoints: return "InsufficientPoints";
    case Errc::NotAligned: return "NotAligned";
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::NoFlowAtPoint: return "NoFlowAtPoint";
    case Errc::ConeMismatch: return "ConeMismatch";
    case Errc::ZeroFlow: return "ZeroFlow";
    case Errc::NoFlowAtStart: return "NoFlowAtStart";
    case Errc::DegenerateRays: return "DegenerateRays";
    case Errc::NoObservations: return "NoObservations";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::CyclicInput: return "CyclicInput";
    case Errc::InvalidTopology: return "InvalidTopology";
    case Errc::EmptyCloud: return "EmptyCloud";
    case Errc::InconsistentPose: return "InconsistentPose";
    case Errc::UnknownId: return "UnknownId";
    case Errc::Io: return "Io";
    case Errc::Parse: return "Parse";
  }
  return "Unknown";
}

}  // namespace arbor
