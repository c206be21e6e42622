#include "cellnas/error.hpp"

namespace cellnas {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArity: return "InvalidArity";
        case ErrorKind::ForwardReference: return "ForwardReference";
        case ErrorKind::EmptyConcat: return "EmptyConcat";
        case ErrorKind::UnknownOperationKind: return "UnknownOperationKind";
        case ErrorKind::InvalidSearchSpace: return "InvalidSearchSpace";
        case ErrorKind::UnsupportedInputCount: return "UnsupportedInputCount";
        case ErrorKind::TooLarge: return "TooLarge";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::DegeneratePair: return "DegeneratePair";
        case ErrorKind::InsufficientSamples: return "InsufficientSamples";
        case ErrorKind::NoTape: return "NoTape";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::MissingManifest: return "MissingManifest";
        case ErrorKind::ZeroBlock: return "ZeroBlock";
    }
    return "Unknown";
}

}  // namespace cellnas
