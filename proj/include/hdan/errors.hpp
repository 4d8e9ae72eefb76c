#pragma once

#include <stdexcept>
#include <string>

namespace hdan {

// Two error families. The CLI maps UsageError (and its children) to exit
// code 2 and RuntimeError to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RuntimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// volume_io
struct UnreadableFormat : RuntimeError { using RuntimeError::RuntimeError; };
struct SpacingMissing : RuntimeError { using RuntimeError::RuntimeError; };
struct UnmappedLabelValue : RuntimeError { using RuntimeError::RuntimeError; };
struct DegenerateIntensity : RuntimeError { using RuntimeError::RuntimeError; };
struct GeometryUnderflow : UsageError { using UsageError::UsageError; };
struct IOFailure : RuntimeError { using RuntimeError::RuntimeError; };

// patching
struct PatchLargerThanVolume : UsageError { using UsageError::UsageError; };
struct OriginOutOfBounds : UsageError { using UsageError::UsageError; };
struct GridMismatch : UsageError { using UsageError::UsageError; };

// network
struct InvalidConfig : UsageError { using UsageError::UsageError; };
struct BadInputShape : UsageError { using UsageError::UsageError; };
struct ReductionMismatch : UsageError { using UsageError::UsageError; };
struct OddDims : UsageError { using UsageError::UsageError; };

// loss
struct EmptyHistogram : UsageError { using UsageError::UsageError; };
struct ShapeMismatch : UsageError { using UsageError::UsageError; };

// metrics
struct BothEmpty : UsageError { using UsageError::UsageError; };
struct EmptyMask : UsageError { using UsageError::UsageError; };
struct EmptySet : UsageError { using UsageError::UsageError; };

// training
struct DivergenceDetected : RuntimeError { using RuntimeError::RuntimeError; };

// assessment
struct GroupTooSmall : UsageError { using UsageError::UsageError; };

}  // namespace hdan
